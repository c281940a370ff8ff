"""2.5D scene construction: point maps, cameras, and textured meshes.

A per-pixel 3D point map (monocular geometry) plus an albedo raster become a
pixel-aligned triangle mesh with per-vertex color. Meshing is camera-space:
the pinhole sits at the origin looking down +Z with raster Y pointing down.
Quads straddling depth discontinuities are rejected, which leaves holes at
occlusion boundaries; the surviving pixel set V is the render validity set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .image import ImageBuffer, Role, ValidMask
from .pfm import read_pfm, write_pfm


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics tying raster pixels to rays.

    Pixel (x, y) centers sit at integer coordinates; the ray through a pixel
    is ((x - cx) / fx, (y - cy) / fy, 1).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the raster")

    def scaled(self, width: int, height: int) -> "CameraModel":
        """Intrinsics for the same field of view at a new raster size."""
        sx = width / self.width
        sy = height / self.height
        return CameraModel(
            fx=self.fx * sx,
            fy=self.fy * sy,
            cx=(self.cx + 0.5) * sx - 0.5,
            cy=(self.cy + 0.5) * sy - 0.5,
            width=width,
            height=height,
        )

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d: dict, width: int | None = None, height: int | None = None) -> "CameraModel":
        return cls(fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]), cy=float(d["cy"]),
                   width=int(d.get("width", width)), height=int(d.get("height", height)))


@dataclass(frozen=True)
class PointMap:
    """Per-pixel camera-space 3D positions with a validity flag.

    Valid points are finite with Z > 0 (+Z into the scene, meters).
    """

    points: np.ndarray  # (H, W, 3) float64
    valid: np.ndarray   # (H, W) bool

    def __post_init__(self) -> None:
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        val = np.ascontiguousarray(np.asarray(self.valid, dtype=bool))
        if pts.ndim != 3 or pts.shape[2] != 3 or val.shape != pts.shape[:2]:
            raise ValueError("point map needs (H, W, 3) points and matching (H, W) validity")
        ok = np.isfinite(pts).all(axis=2) & (pts[:, :, 2] > 0)
        val = val & ok
        pts = np.where(val[:, :, None], pts, 0.0)
        pts.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "valid", val)

    @property
    def height(self) -> int:
        return self.points.shape[0]

    @property
    def width(self) -> int:
        return self.points.shape[1]


def read_pointmap(path: str | Path) -> PointMap:
    """Load a point map from 3-channel PFM; z <= 0 marks invalid pixels."""
    arr = read_pfm(path)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{path}: point map must be a 3-channel PFM")
    pts = arr.astype(np.float64)
    return PointMap(points=pts, valid=pts[:, :, 2] > 0)


def write_pointmap(path: str | Path, pm: PointMap) -> None:
    out = pm.points.copy()
    out[~pm.valid] = (0.0, 0.0, -1.0)
    write_pfm(path, out.astype(np.float32))


def unproject(depth: ImageBuffer, cam: CameraModel) -> PointMap:
    """Lift a depth raster (zeros = invalid) to camera-space points."""
    if depth.channels != 1:
        raise ValueError("depth must be single-channel")
    if (depth.height, depth.width) != (cam.height, cam.width):
        raise ValueError("depth dimensions do not match the camera raster")
    z = depth.data[:, :, 0]
    if z.min() < 0:
        raise ValueError("depth must be non-negative")
    ys, xs = np.mgrid[0 : depth.height, 0 : depth.width]
    dirs = np.stack(
        [(xs - cam.cx) / cam.fx, (ys - cam.cy) / cam.fy, np.ones_like(z)], axis=2
    )
    return PointMap(points=dirs * z[:, :, None], valid=z > 0)


def project(points: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Perspective-divide camera-space points to pixel coordinates (x, y)."""
    pts = np.asarray(points, dtype=np.float64)
    z = pts[..., 2]
    if np.any(z <= 0):
        raise ValueError("cannot project points with z <= 0")
    return np.stack(
        [pts[..., 0] / z * cam.fx + cam.cx, pts[..., 1] / z * cam.fy + cam.cy], axis=-1
    )


@dataclass(frozen=True)
class TexturedMesh:
    """Triangulated 2.5D geometry with per-vertex albedo.

    Each vertex originates from exactly one raster pixel (pixel_of_vertex
    holds row, col); valid_mask is the pixel set V referenced by at least
    one emitted triangle. camera_origin is the pinhole position in mesh
    coordinates (origin until the scene is normalized).
    """

    vertices: np.ndarray        # (N, 3) float64
    vertex_colors: np.ndarray   # (N, 3) float64 in [0, 1]
    triangles: np.ndarray       # (T, 3) int32
    pixel_of_vertex: np.ndarray  # (N, 2) int32, (row, col)
    valid_mask: ValidMask
    camera_origin: np.ndarray   # (3,) float64

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def width(self) -> int:
        return self.valid_mask.width

    @property
    def height(self) -> int:
        return self.valid_mask.height

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.num_vertices == 0:
            raise ValueError("empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def build_mesh(pm: PointMap, albedo: ImageBuffer, discontinuity_ratio: float = 1.2) -> TexturedMesh:
    """Triangulate neighboring pixels of a point map into a textured mesh.

    Every fully valid 2x2 pixel quad emits two triangles, split along the
    3D-shorter diagonal (ties go to the top-left-to-bottom-right one). A
    triangle whose vertex depth ratio max(z)/min(z) exceeds
    discontinuity_ratio is rejected; pixels no emitted triangle references
    drop out of the valid set. Deterministic: identical inputs give
    byte-identical meshes.
    """
    if discontinuity_ratio <= 1.0:
        raise ValueError("discontinuity_ratio must exceed 1")
    if albedo.role is not Role.ALBEDO:
        raise ValueError("mesh texture must be an albedo buffer")
    if (pm.height, pm.width) != (albedo.height, albedo.width):
        raise ValueError("point map and albedo dimensions differ")
    if albedo.channels != 3:
        raise ValueError("albedo must be 3-channel")

    h, w = pm.height, pm.width
    pts = pm.points.reshape(-1, 3)
    pix = np.arange(h * w, dtype=np.int64).reshape(h, w)

    # Quad corners: a=top-left, b=top-right, c=bottom-left, d=bottom-right.
    a = pix[:-1, :-1].ravel()
    b = pix[:-1, 1:].ravel()
    c = pix[1:, :-1].ravel()
    d = pix[1:, 1:].ravel()
    v = pm.valid
    quad_ok = (v[:-1, :-1] & v[:-1, 1:] & v[1:, :-1] & v[1:, 1:]).ravel()

    diag_a = ((pts[a] - pts[d]) ** 2).sum(axis=1)
    diag_b = ((pts[b] - pts[c]) ** 2).sum(axis=1)
    use_a = diag_a <= diag_b

    nq = a.shape[0]
    tris = np.empty((nq, 2, 3), dtype=np.int64)
    # Winding keeps geometric normals facing the camera (-Z side).
    # Diagonal a-d: (a,c,d)+(a,d,b); diagonal b-c: (a,c,b)+(b,c,d).
    tris[:, 0, 0], tris[:, 0, 1], tris[:, 0, 2] = a, c, np.where(use_a, d, b)
    tris[:, 1, 0], tris[:, 1, 1], tris[:, 1, 2] = np.where(use_a, a, b), np.where(use_a, d, c), np.where(use_a, b, d)
    tris = tris.reshape(-1, 3)
    keep = np.repeat(quad_ok, 2)

    z = pts[:, 2][tris]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_ok = np.where(z.min(axis=1) > 0, z.max(axis=1) / np.maximum(z.min(axis=1), 1e-300), np.inf) <= discontinuity_ratio
    e1 = pts[tris[:, 1]] - pts[tris[:, 0]]
    e2 = pts[tris[:, 2]] - pts[tris[:, 0]]
    area2 = (np.cross(e1, e2) ** 2).sum(axis=1)
    keep &= ratio_ok & (area2 > 0.0)

    tris = tris[keep]
    referenced = np.zeros(h * w, dtype=bool)
    referenced[tris.ravel()] = True
    remap = np.full(h * w, -1, dtype=np.int64)
    ref_idx = np.flatnonzero(referenced)
    remap[ref_idx] = np.arange(ref_idx.size)

    rows, cols = np.divmod(ref_idx, w)
    return TexturedMesh(
        vertices=np.ascontiguousarray(pts[ref_idx]),
        vertex_colors=np.ascontiguousarray(albedo.data.reshape(-1, 3)[ref_idx]),
        triangles=np.ascontiguousarray(remap[tris].astype(np.int32)),
        pixel_of_vertex=np.ascontiguousarray(np.stack([rows, cols], axis=1).astype(np.int32)),
        valid_mask=ValidMask(referenced.reshape(h, w)),
        camera_origin=np.zeros(3, dtype=np.float64),
    )


@dataclass(frozen=True)
class SceneTransform:
    """Similarity transform x' = scale * x + translation between camera and
    normalized scene coordinates."""

    scale: float
    translation: np.ndarray  # (3,)

    def apply_points(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(pts, dtype=np.float64) * self.scale + self.translation

    def invert_points(self, pts: np.ndarray) -> np.ndarray:
        return (np.asarray(pts, dtype=np.float64) - self.translation) / self.scale

    @property
    def is_identity(self) -> bool:
        return self.scale == 1.0 and not np.any(self.translation)

    def to_dict(self) -> dict:
        return {"scale": self.scale, "translation": self.translation.tolist()}


def normalize_scene(mesh: TexturedMesh) -> tuple[TexturedMesh, SceneTransform]:
    """Center the vertex bounding box at the origin with longest side 2.

    Returns the transform so lights can be mapped between camera space and
    normalized scene coordinates. The camera origin moves with the mesh.
    """
    if mesh.num_vertices == 0:
        raise ValueError("cannot normalize an empty mesh")
    lo, hi = mesh.bounds()
    longest = float((hi - lo).max())
    if longest <= 0:
        raise ValueError("degenerate mesh extent")
    scale = 2.0 / longest
    translation = -scale * (lo + hi) / 2.0
    tf = SceneTransform(scale=scale, translation=translation)
    out = replace(
        mesh,
        vertices=tf.apply_points(mesh.vertices),
        camera_origin=tf.apply_points(mesh.camera_origin),
    )
    return out, tf


def save_ply(mesh: TexturedMesh, path: str | Path) -> None:
    """Export as binary little-endian PLY with per-vertex color."""
    n, t = mesh.num_vertices, mesh.num_triangles
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {n}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        f"element face {t}\n"
        "property list uchar int vertex_indices\nend_header\n"
    ).encode("ascii")
    vert = np.empty(n, dtype=[("xyz", "<f4", 3), ("rgb", "u1", 3)])
    vert["xyz"] = mesh.vertices.astype(np.float32)
    vert["rgb"] = np.round(np.clip(mesh.vertex_colors, 0, 1) * 255).astype(np.uint8)
    face = np.empty(t, dtype=[("n", "u1"), ("idx", "<i4", 3)])
    face["n"] = 3
    face["idx"] = mesh.triangles
    Path(path).write_bytes(header + vert.tobytes() + face.tobytes())


@dataclass(frozen=True)
class SceneAssets:
    """Source rasters for one scene, loaded from an asset manifest."""

    pointmap: PointMap
    albedo: ImageBuffer
    camera: CameraModel
    image: ImageBuffer | None = None
    shading: ImageBuffer | None = None


def load_assets(manifest_path: str | Path) -> SceneAssets:
    """Load {"image", "albedo", "shading", "pointmap", "camera"} assets.

    Paths are relative to the manifest file. image and shading are optional
    (rendering needs neither; fitting needs shading). PNG albedo is
    gamma-decoded; PFM rasters are taken as linear.
    """
    manifest_path = Path(manifest_path)
    spec = json.loads(manifest_path.read_text())
    base = manifest_path.parent
    for key in ("albedo", "pointmap", "camera"):
        if key not in spec:
            raise ValueError(f"asset manifest missing required key: {key}")

    pm = read_pointmap(base / spec["pointmap"])

    def load_raster(key: str, role: Role) -> ImageBuffer | None:
        if key not in spec or spec[key] is None:
            return None
        p = base / spec[key]
        if p.suffix.lower() == ".pfm":
            arr = read_pfm(p).astype(np.float64)
        else:
            from .png_io import read_png

            arr = read_png(p)
        if arr.ndim == 2:
            arr = np.repeat(arr[:, :, None], 3, axis=2)
        if role is Role.ALBEDO:
            arr = np.clip(arr, 0.0, 1.0)
        return ImageBuffer(arr, role)

    albedo = load_raster("albedo", Role.ALBEDO)
    camera = CameraModel.from_dict(spec["camera"], width=pm.width, height=pm.height)
    if (pm.height, pm.width) != (albedo.height, albedo.width):
        raise ValueError("pointmap and albedo dimensions differ")
    return SceneAssets(
        pointmap=pm,
        albedo=albedo,
        camera=camera,
        image=load_raster("image", Role.INPUT),
        shading=load_raster("shading", Role.SHADING),
    )
