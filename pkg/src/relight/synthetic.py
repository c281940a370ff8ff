"""Synthetic 2.5D scenes for tests and demos.

The "room" is an open box (floor, back wall, one side wall) with a cuboid
on the floor, ray-cast analytically into a point map exactly the way a
monocular geometry estimator would deliver one: per-pixel camera-space
positions, invalid where no surface is seen, depth discontinuities at the
cuboid silhouette. Camera space is X right, Y down, Z forward.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .image import ImageBuffer, Role
from .lights import Light, LightingEnvironment, constant_env
from .pfm import write_pfm
from .png_io import write_png
from .scene import CameraModel, PointMap, write_pointmap

_BIG = 1e30


@dataclass(frozen=True)
class RoomAssets:
    pointmap: PointMap
    albedo: ImageBuffer
    camera: CameraModel


def _ray_grid(cam: CameraModel) -> np.ndarray:
    ys, xs = np.mgrid[0 : cam.height, 0 : cam.width]
    d = np.stack([(xs - cam.cx) / cam.fx, (ys - cam.cy) / cam.fy, np.ones_like(xs, dtype=np.float64)], axis=2)
    return d / np.linalg.norm(d, axis=2, keepdims=True)


def _plane_hit(dirs, axis, offset, sign, bounds):
    """t for rays hitting plane axis=offset from the sign side, inf if missed.

    bounds is ((axis, lo, hi), ...) limiting the slab in the other axes.
    """
    d = dirs[:, :, axis]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(sign * d > 1e-12, offset / np.where(d != 0, d, 1.0), _BIG)
    pts = dirs * t[:, :, None]
    ok = t < _BIG
    for a, lo, hi in bounds:
        ok &= (pts[:, :, a] >= lo) & (pts[:, :, a] <= hi)
    return np.where(ok, t, _BIG)


def _box_hit(dirs, lo, hi):
    """Entry t of rays (origin 0) into an axis-aligned box, inf if missed."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / np.where(np.abs(dirs) > 1e-12, dirs, np.where(dirs >= 0, 1e-12, -1e-12))
    t0 = lo[None, None, :] * inv
    t1 = hi[None, None, :] * inv
    tmin = np.minimum(t0, t1).max(axis=2)
    tmax = np.maximum(t0, t1).min(axis=2)
    hit = (tmax >= tmin) & (tmin > 1e-9)
    return np.where(hit, tmin, _BIG)


def make_room(width: int = 160, height: int = 120, with_box: bool = True,
              sky_gap: bool = True) -> RoomAssets:
    """Open room: floor (y=+1.2), back wall (z=5), left wall (x=-2).

    Right side and ceiling stay open so environment light reaches the scene;
    with sky_gap the back wall stops short of the top, leaving pixels with
    no geometry at all (holes in the point map).
    """
    f = 0.9 * max(width, height)
    cam = CameraModel(fx=f, fy=f, cx=(width - 1) / 2, cy=(height - 1) / 2, width=width, height=height)
    dirs = _ray_grid(cam)

    wall_top = -0.9 if sky_gap else -3.0
    floor_t = _plane_hit(dirs, 1, 1.2, +1, ((2, 0.4, 5.0), (0, -2.0, 2.6)))
    back_t = _plane_hit(dirs, 2, 5.0, +1, ((0, -2.0, 2.6), (1, wall_top, 1.2)))
    left_t = _plane_hit(dirs, 0, -2.0, -1, ((2, 0.4, 5.0), (1, wall_top, 1.2)))

    surf_t = np.stack([floor_t, back_t, left_t], axis=0)
    surf_id = surf_t.argmin(axis=0)
    t = surf_t.min(axis=0)

    if with_box:
        box_lo = np.array([-0.9, 0.25, 2.6])
        box_hi = np.array([-0.1, 1.2, 3.4])
        bt = _box_hit(dirs, box_lo, box_hi)
        box_closer = bt < t
        t = np.where(box_closer, bt, t)
        surf_id = np.where(box_closer, 3, surf_id)

    valid = t < _BIG
    points = dirs * np.where(valid, t, 0.0)[:, :, None]

    palette = np.array([
        [0.55, 0.48, 0.42],  # floor
        [0.72, 0.72, 0.70],  # back wall
        [0.60, 0.24, 0.20],  # left wall
        [0.25, 0.52, 0.30],  # box
    ])
    alb = palette[surf_id]
    alb[~valid] = 0.0
    return RoomAssets(
        pointmap=PointMap(points=points, valid=valid),
        albedo=ImageBuffer(alb, Role.ALBEDO),
        camera=cam,
    )


def make_plane(width: int = 33, height: int = 33, depth: float = 2.0,
               albedo_value=(1.0, 1.0, 1.0), fx: float | None = None) -> RoomAssets:
    """Fronto-parallel plane at constant depth covering the whole raster."""
    f = fx if fx is not None else 0.5 * (width - 1)
    cam = CameraModel(fx=f, fy=f, cx=(width - 1) / 2, cy=(height - 1) / 2, width=width, height=height)
    ys, xs = np.mgrid[0:height, 0:width]
    pts = np.stack([(xs - cam.cx) / cam.fx * depth, (ys - cam.cy) / cam.fy * depth,
                    np.full((height, width), depth)], axis=2)
    alb = np.broadcast_to(np.asarray(albedo_value, dtype=np.float64), (height, width, 3)).copy()
    return RoomAssets(
        pointmap=PointMap(points=pts, valid=np.ones((height, width), dtype=bool)),
        albedo=ImageBuffer(alb, Role.ALBEDO),
        camera=cam,
    )


def room_ground_truth_lighting(env_value: float = 0.3) -> LightingEnvironment:
    """Constant env + three interior point lights (normalized scene coords).

    The lights sit at lamp height in the room interior, in the same region
    an optimizer would reasonably initialize, so lighting-recovery tests
    exercise allocation and refinement rather than a cross-room trek.
    """
    lights = (
        Light(kind="point", position=[0.12, 0.02, -0.08], intensity=[0.45, 0.38, 0.30]),
        Light(kind="point", position=[-0.40, -0.05, 0.12], intensity=[0.18, 0.22, 0.38]),
        Light(kind="point", position=[0.48, 0.15, 0.26], intensity=[0.30, 0.30, 0.30]),
    )
    return LightingEnvironment(env=constant_env([env_value] * 3, rows=16), lights=lights)


def write_assets(out_dir: str | Path, assets: RoomAssets,
                 shading: ImageBuffer | None = None,
                 image: ImageBuffer | None = None,
                 scene_id: str = "scene") -> Path:
    """Write a scene asset bundle + manifest.json; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_pointmap(out / "pointmap.pfm", assets.pointmap)
    write_png(out / "albedo.png", assets.albedo.data, bitdepth=16)
    manifest = {
        "scene_id": scene_id,
        "pointmap": "pointmap.pfm",
        "albedo": "albedo.png",
        "camera": assets.camera.to_dict(),
    }
    if shading is not None:
        write_pfm(out / "shading.pfm", shading.data.astype(np.float32))
        manifest["shading"] = "shading.pfm"
    if image is not None:
        write_pfm(out / "image.pfm", image.data.astype(np.float32))
        manifest["image"] = "image.pfm"
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def write_demo_bundle(out_dir: str | Path, width: int = 96, height: int = 72,
                      seed: int = 7) -> Path:
    """Room bundle whose image is a render under known lighting, complete
    with a shading raster so the fit endpoint has a diffuse target."""
    from .renderer import RenderConfig, TracerScene, render
    from .scene import build_mesh, normalize_scene

    assets = make_room(width, height)
    mesh = build_mesh(assets.pointmap, assets.albedo, 1.2)
    normed, _ = normalize_scene(mesh)
    res = render(TracerScene(normed), room_ground_truth_lighting(),
                 RenderConfig(width=width, height=height, camera=assets.camera,
                              spp=64, max_depth=2, seed=seed))
    albedo_safe = np.maximum(assets.albedo.data, 1e-6)
    shading = ImageBuffer(np.where(res.mask.bits[:, :, None],
                                   res.image.data / albedo_safe, 0.0), Role.SHADING)
    image = ImageBuffer(res.image.data, Role.INPUT)
    return write_assets(out_dir, assets, shading=shading, image=image, scene_id="demo-room")


if __name__ == "__main__":
    import sys

    target = sys.argv[1] if len(sys.argv) > 1 else "demo_scene"
    w = int(sys.argv[2]) if len(sys.argv) > 2 else 96
    h = int(sys.argv[3]) if len(sys.argv) > 3 else 72
    manifest_path = write_demo_bundle(target, w, h)
    print(manifest_path)
