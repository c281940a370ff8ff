/**
 * Three.js viewport: decimated point cloud of the scene plus draggable
 * light gizmos. Light placement happens in normalized scene coordinates
 * (the same space the service's lighting JSON uses).
 */
import * as THREE from "three";
import { OrbitControls } from "three/examples/jsm/controls/OrbitControls.js";
import { Gizmo } from "./gizmos";
import { lightPosition, Vec3 } from "./lighting";
import { PfmImage } from "./pfm";

export interface Normalization {
  scale: number;
  translation: [number, number, number];
}

const GIZMO_COLORS: Record<string, number> = {
  point: 0xffc848,
  spot: 0x53c7f0,
  directional: 0xb3f053,
  area: 0xf067d8,
};

export class SceneViewer {
  readonly renderer: THREE.WebGLRenderer;
  readonly scene = new THREE.Scene();
  readonly camera: THREE.PerspectiveCamera;
  readonly controls: OrbitControls;
  private points: THREE.Points | null = null;
  private gizmoGroup = new THREE.Group();
  private raycaster = new THREE.Raycaster();
  private dragPlane = new THREE.Plane();
  private dragging: { id: number } | null = null;
  onGizmoMoved: (id: number, position: Vec3) => void = () => {};
  onGizmoSelected: (id: number | null) => void = () => {};

  constructor(readonly canvas: HTMLCanvasElement) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.camera = new THREE.PerspectiveCamera(55, 1, 0.01, 100);
    this.camera.position.set(0, -0.6, -3.2);
    this.camera.up.set(0, -1, 0); // raster Y points down in scene space
    this.scene.background = new THREE.Color(0x10131a);
    this.scene.add(this.gizmoGroup);
    this.controls = new OrbitControls(this.camera, canvas);
    this.controls.target.set(0, 0, 0);
    canvas.addEventListener("pointerdown", (e) => this.pointerDown(e));
    canvas.addEventListener("pointermove", (e) => this.pointerMove(e));
    canvas.addEventListener("pointerup", () => this.pointerUp());
    const loop = () => {
      this.controls.update();
      this.renderer.render(this.scene, this.camera);
      requestAnimationFrame(loop);
    };
    requestAnimationFrame(loop);
  }

  resize(width: number, height: number): void {
    this.renderer.setSize(width, height, false);
    this.camera.aspect = width / height;
    this.camera.updateProjectionMatrix();
  }

  /** Build the navigation point cloud from the uploaded point map, mapped
   * into normalized scene coordinates with the transform the server used. */
  setPointCloud(pointmap: PfmImage, albedo: PfmImage | null, norm: Normalization, stride = 2): void {
    if (this.points) {
      this.scene.remove(this.points);
      this.points.geometry.dispose();
    }
    const positions: number[] = [];
    const colors: number[] = [];
    const { width, height } = pointmap;
    for (let y = 0; y < height; y += stride) {
      for (let x = 0; x < width; x += stride) {
        const i = (y * width + x) * 3;
        const z = pointmap.data[i + 2];
        if (!(z > 0)) continue;
        positions.push(
          pointmap.data[i] * norm.scale + norm.translation[0],
          pointmap.data[i + 1] * norm.scale + norm.translation[1],
          z * norm.scale + norm.translation[2],
        );
        if (albedo && albedo.width === width) {
          const j = (y * width + x) * albedo.channels;
          const r = albedo.data[j];
          colors.push(r, albedo.data[j + (albedo.channels === 3 ? 1 : 0)],
                      albedo.data[j + (albedo.channels === 3 ? 2 : 0)]);
        } else {
          colors.push(0.7, 0.7, 0.7);
        }
      }
    }
    const geo = new THREE.BufferGeometry();
    geo.setAttribute("position", new THREE.Float32BufferAttribute(positions, 3));
    geo.setAttribute("color", new THREE.Float32BufferAttribute(colors, 3));
    const mat = new THREE.PointsMaterial({ size: 0.015, vertexColors: true });
    this.points = new THREE.Points(geo, mat);
    this.scene.add(this.points);
  }

  syncGizmos(gizmos: Gizmo[], selected: number | null): void {
    this.gizmoGroup.clear();
    for (const g of gizmos) {
      const pos = lightPosition(g.light);
      if (!pos) continue;
      const mesh = new THREE.Mesh(
        new THREE.SphereGeometry(g.id === selected ? 0.05 : 0.035, 12, 12),
        new THREE.MeshBasicMaterial({
          color: GIZMO_COLORS[g.light.type] ?? 0xffffff,
          wireframe: g.id !== selected,
        }),
      );
      mesh.position.set(pos[0], pos[1], pos[2]);
      mesh.userData.gizmoId = g.id;
      this.gizmoGroup.add(mesh);
    }
  }

  private ndc(event: PointerEvent): THREE.Vector2 {
    const rect = this.canvas.getBoundingClientRect();
    return new THREE.Vector2(
      ((event.clientX - rect.left) / rect.width) * 2 - 1,
      -((event.clientY - rect.top) / rect.height) * 2 + 1,
    );
  }

  private pointerDown(event: PointerEvent): void {
    this.raycaster.setFromCamera(this.ndc(event), this.camera);
    const hits = this.raycaster.intersectObjects(this.gizmoGroup.children);
    if (!hits.length) {
      this.onGizmoSelected(null);
      return;
    }
    const id = hits[0].object.userData.gizmoId as number;
    this.dragging = { id };
    this.controls.enabled = false;
    // drag in the camera-facing plane through the gizmo
    this.dragPlane.setFromNormalAndCoplanarPoint(
      this.camera.getWorldDirection(new THREE.Vector3()),
      hits[0].object.position,
    );
    this.onGizmoSelected(id);
  }

  private pointerMove(event: PointerEvent): void {
    if (!this.dragging) return;
    this.raycaster.setFromCamera(this.ndc(event), this.camera);
    const hit = new THREE.Vector3();
    if (this.raycaster.ray.intersectPlane(this.dragPlane, hit)) {
      this.onGizmoMoved(this.dragging.id, [hit.x, hit.y, hit.z]);
    }
  }

  private pointerUp(): void {
    this.dragging = null;
    this.controls.enabled = true;
  }
}
