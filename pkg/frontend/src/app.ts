/**
 * Studio wiring: asset loading, the edit loop (gizmo -> PUT lighting ->
 * debounced re-render), and the before/after compare view.
 */
import { RelightClient, SessionStatus } from "./api";
import { CompareState, initialCompare, relitClip, setDivider } from "./compare";
import {
  GizmoState,
  addLight,
  deleteLight,
  emptyState,
  fromLighting,
  moveLight,
  selectLight,
  setIntensity,
  toLighting,
} from "./gizmos";
import { Vec3 } from "./lighting";
import { PfmImage, decodePfm } from "./pfm";
import { Frame, RenderScheduler } from "./revision";
import { SceneViewer } from "./viewer";

function srgbEncode(x: number): number {
  const v = Math.min(1, Math.max(0, x));
  return v <= 0.0031308 ? v * 12.92 : 1.055 * Math.pow(v, 1 / 2.4) - 0.055;
}

function pfmToCanvas(img: PfmImage, canvas: HTMLCanvasElement): void {
  canvas.width = img.width;
  canvas.height = img.height;
  const ctx = canvas.getContext("2d")!;
  const out = ctx.createImageData(img.width, img.height);
  for (let i = 0; i < img.width * img.height; i++) {
    for (let c = 0; c < 3; c++) {
      const v = img.data[i * img.channels + (img.channels === 3 ? c : 0)];
      out.data[i * 4 + c] = Math.round(srgbEncode(v) * 255);
    }
    out.data[i * 4 + 3] = 255;
  }
  ctx.putImageData(out, 0, 0);
}

/** Time-based throttle with a guaranteed trailing call. */
function throttled<T extends unknown[]>(fn: (...args: T) => void, intervalMs: number) {
  let last = -Infinity;
  let timer: ReturnType<typeof setTimeout> | null = null;
  let pending: T | null = null;
  const fire = (args: T) => {
    last = Date.now();
    fn(...args);
  };
  return (...args: T) => {
    pending = args;
    if (Date.now() - last >= intervalMs && timer === null) {
      fire(pending);
      pending = null;
      return;
    }
    if (timer === null) {
      timer = setTimeout(() => {
        timer = null;
        if (pending) {
          fire(pending);
          pending = null;
        }
      }, Math.max(0, last + intervalMs - Date.now()));
    }
  };
}

export class StudioApp {
  client: RelightClient;
  sessionId: string | null = null;
  status: SessionStatus | null = null;
  gizmos: GizmoState = emptyState();
  compare: CompareState = initialCompare();
  scheduler: RenderScheduler | null = null;
  viewer: SceneViewer;
  private pushLighting: () => void;

  constructor(
    baseUrl: string,
    private readonly ui: {
      viewport: HTMLCanvasElement;
      relitImg: HTMLImageElement;
      originalCanvas: HTMLCanvasElement;
      relitLayer: HTMLElement;
      divider: HTMLInputElement;
      status: HTMLElement;
      lightList: HTMLElement;
    },
  ) {
    this.client = new RelightClient(baseUrl);
    this.viewer = new SceneViewer(ui.viewport);
    this.viewer.onGizmoMoved = (id, pos) => this.handleDrag(id, pos);
    this.viewer.onGizmoSelected = (id) => {
      this.gizmos = selectLight(this.gizmos, id);
      this.syncViews();
    };
    this.pushLighting = throttled(() => void this.commitLighting(), 60);
    ui.divider.addEventListener("input", () => {
      this.compare = setDivider(this.compare, parseFloat(ui.divider.value));
      ui.relitLayer.style.clipPath = relitClip(this.compare);
    });
  }

  async loadScene(files: Map<string, Uint8Array>): Promise<void> {
    const manifestRaw = files.get("manifest.json");
    if (!files.has("pointmap.pfm")) throw new Error("bundle needs pointmap.pfm");
    const manifest = manifestRaw ? JSON.parse(new TextDecoder().decode(manifestRaw)) : {};
    const albedoName = [...files.keys()].find((n) => n.startsWith("albedo")) ?? "";
    const bundle = {
      pointmap: files.get("pointmap.pfm")!,
      albedo: files.get(albedoName)!,
      camera: manifest.camera,
      shading: files.get("shading.pfm"),
      image: files.get("image.pfm"),
    };
    const { id } = await this.client.createSession(bundle);
    this.sessionId = id;
    this.status = await this.client.getSession(id);

    // default lighting: the reconstructed original when a diffuse target
    // exists, otherwise the constant-gray default the server installed
    if (this.status.has_shading) {
      this.report(`fitting original illumination...`);
      const fit = await this.client.fit(id, { max_iters: 120 });
      this.gizmos = fromLighting(fit.psi);
    } else {
      this.gizmos = fromLighting(this.status.lighting);
    }

    const norm = this.status.normalization ?? { scale: 1, translation: [0, 0, 0] as Vec3 };
    const pm = decodePfm(files.get("pointmap.pfm")!.slice().buffer as ArrayBuffer);
    let albedoPfm: PfmImage | null = null;
    if (albedoName.endsWith(".pfm")) {
      albedoPfm = decodePfm(files.get(albedoName)!.slice().buffer as ArrayBuffer);
    }
    this.viewer.setPointCloud(pm, albedoPfm, norm);

    if (files.has("image.pfm")) {
      pfmToCanvas(decodePfm(files.get("image.pfm")!.slice().buffer as ArrayBuffer), this.ui.originalCanvas);
    }

    this.scheduler = new RenderScheduler(
      () => this.renderOnce(),
      (frame) => this.showFrame(frame),
      250,
      (err) => this.report(`render failed: ${err}`),
    );
    this.scheduler.notify(this.status.lighting_revision + (this.status.has_shading ? 1 : 0));
    this.syncViews();
    this.report(`session ${id}: ${this.status.num_triangles} triangles`);
  }

  private async renderOnce(): Promise<Frame> {
    const r = await this.client.render(this.sessionId!, { format: "png", spp: 16, seed: 0 });
    return { revision: r.lightingRevision, bytes: r.bytes, millis: r.millis, contentType: r.contentType };
  }

  private showFrame(frame: Frame): void {
    const blob = new Blob([frame.bytes], { type: frame.contentType });
    const url = URL.createObjectURL(blob);
    const old = this.ui.relitImg.src;
    this.ui.relitImg.src = url;
    if (old.startsWith("blob:")) URL.revokeObjectURL(old);
    this.report(`render ${frame.millis.toFixed(0)} ms @ revision ${frame.revision}`);
  }

  private async commitLighting(): Promise<void> {
    if (!this.sessionId || !this.scheduler) return;
    try {
      const { revision } = await this.client.putLighting(this.sessionId, toLighting(this.gizmos));
      this.scheduler.notify(revision);
    } catch (err) {
      // rejected update: re-hydrate gizmos from the server's accepted state
      this.status = await this.client.getSession(this.sessionId);
      this.gizmos = fromLighting(this.status.lighting);
      this.syncViews();
      this.report(`lighting rejected: ${err}`);
    }
  }

  addPointLight(): void {
    this.gizmos = addLight(this.gizmos, {
      type: "point",
      position: [0, -0.2, -0.4],
      intensity: [0.6, 0.6, 0.6],
    });
    this.syncViews();
    this.pushLighting();
  }

  deleteSelected(): void {
    if (this.gizmos.selected === null) return;
    this.gizmos = deleteLight(this.gizmos, this.gizmos.selected);
    this.syncViews();
    this.pushLighting();
  }

  setSelectedIntensity(value: Vec3): void {
    if (this.gizmos.selected === null) return;
    this.gizmos = setIntensity(this.gizmos, this.gizmos.selected, value);
    this.syncViews();
    this.pushLighting();
  }

  private handleDrag(id: number, pos: Vec3): void {
    this.gizmos = moveLight(this.gizmos, id, pos);
    this.syncViews();
    this.pushLighting();
  }

  private syncViews(): void {
    this.viewer.syncGizmos(this.gizmos.gizmos, this.gizmos.selected);
    this.ui.lightList.replaceChildren(
      ...this.gizmos.gizmos.map((g) => {
        const li = document.createElement("li");
        li.textContent = `#${g.id} ${g.light.type}`;
        if (g.id === this.gizmos.selected) li.classList.add("selected");
        li.onclick = () => {
          this.gizmos = selectLight(this.gizmos, g.id);
          this.syncViews();
        };
        return li;
      }),
    );
  }

  private report(message: string): void {
    this.ui.status.textContent = message;
  }
}
