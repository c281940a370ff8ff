"""Self-supervised training-pair generation.

For every scene: build the mesh, fit the lighting to the diffuse image,
re-render under the fitted lighting (D~), hole-fill, and assemble the
7-channel neural-renderer input [D~ rgb | albedo rgb | invalid mask]. The
fit residual e ranks pairs; the worst 15% are dropped from training.
Training the downstream network is out of scope here; multiscale_loss is
provided as the evaluation metric.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .fit import FitConfig, FitReport, fit_lighting
from .image import ImageBuffer, ValidMask, diffuse_image, resize_area, resize_image
from .pfm import write_pfm
from .png_io import write_mask_png
from .renderer import RenderConfig, TracerScene, render
from .scene import SceneAssets, build_mesh, load_assets, normalize_scene

FIT_LONG_SIDE = 512
DEFAULT_DROP_FRACTION = 0.15


@dataclass(frozen=True)
class PairEntry:
    scene_id: str
    assets: str                  # manifest path
    error: float | None          # fit residual e, None when failed
    dtilde: str | None
    mask: str | None
    nr_input: str | None
    fit: str | None
    kept: bool
    failure: str | None = None

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id, "assets": self.assets, "e": self.error,
            "dtilde": self.dtilde, "mask": self.mask, "nr_input": self.nr_input,
            "fit": self.fit, "kept": self.kept, "failure": self.failure,
        }


@dataclass(frozen=True)
class PairManifest:
    entries: tuple[PairEntry, ...]

    def to_dict(self) -> dict:
        return {"entries": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_dict(cls, d: dict) -> "PairManifest":
        entries = tuple(
            PairEntry(scene_id=e["scene_id"], assets=e.get("assets", ""), error=e.get("e"),
                      dtilde=e.get("dtilde"), mask=e.get("mask"), nr_input=e.get("nr_input"),
                      fit=e.get("fit"), kept=bool(e.get("kept", True)), failure=e.get("failure"))
            for e in d["entries"]
        )
        return cls(entries=entries)


def fill_holes(rendered: ImageBuffer, mask: ValidMask) -> ImageBuffer:
    """Fill invalid pixels by iterated 3x3 averaging of known neighbors.

    Jacobi iterations (each round reads the previous round only), so the
    result is order-independent and deterministic. Valid pixels pass
    through bit-exactly.
    """
    if not mask.matches(rendered):
        raise ValueError("mask dimensions differ from the image")
    if mask.count == 0:
        raise ValueError("cannot fill an image with zero valid pixels")
    values = rendered.data.copy()
    known = mask.bits.copy()
    values[~known] = 0.0
    shifts = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]
    while not known.all():
        acc = np.zeros_like(values)
        cnt = np.zeros(known.shape, dtype=np.float64)
        for dy, dx in shifts:
            src_v = np.roll(np.roll(values, dy, axis=0), dx, axis=1)
            src_k = np.roll(np.roll(known, dy, axis=0), dx, axis=1)
            # roll wraps around; mask out wrapped rows/cols
            if dy == 1:
                src_k[0, :] = False
            elif dy == -1:
                src_k[-1, :] = False
            if dx == 1:
                src_k[:, 0] = False
            elif dx == -1:
                src_k[:, -1] = False
            acc += src_v * src_k[:, :, None]
            cnt += src_k
        fill = ~known & (cnt > 0)
        values[fill] = acc[fill] / cnt[fill][:, None]
        known |= fill
    return ImageBuffer(values, rendered.role)


def assemble_nr_input(dtilde_filled: ImageBuffer, albedo: ImageBuffer,
                      mask: ValidMask) -> np.ndarray:
    """7-channel map: [0..2] hole-filled render, [3..5] albedo, [6] invalid
    pixels as {0, 1} (1 = invalid)."""
    if dtilde_filled.data.shape != albedo.data.shape:
        raise ValueError("render and albedo dimensions differ")
    if not mask.matches(dtilde_filled):
        raise ValueError("mask dimensions differ from the rasters")
    return np.ascontiguousarray(np.concatenate(
        [dtilde_filled.data, albedo.data, mask.complement()[:, :, None]], axis=2))


def _forward_gradients(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = data[:, 1:, :] - data[:, :-1, :]
    gy = data[1:, :, :] - data[:-1, :, :]
    return gx, gy


def _downsample2(data: np.ndarray) -> np.ndarray:
    h, w = data.shape[:2]
    return resize_area(data, h // 2, w // 2)


def multiscale_loss(reference: ImageBuffer, candidate: ImageBuffer, scales: int = 4) -> float:
    """MSE plus forward-difference gradient MSE over a factor-2 pyramid.

    L = MSE(I, I~) + sum_m [ mean((dx I^m - dx I~^m)^2) + mean((dy ...)^2) ]
    with m = 0..scales-1 and area-average downsampling; scales where either
    dimension drops below 2 px are skipped.
    """
    if reference.data.shape != candidate.data.shape:
        raise ValueError("image dimensions differ")
    if scales < 1:
        raise ValueError("scales must be >= 1")
    a = reference.data
    b = candidate.data
    loss = float(np.mean((a - b) ** 2))
    for _ in range(scales):
        if a.shape[0] < 2 or a.shape[1] < 2:
            break
        gxa, gya = _forward_gradients(a)
        gxb, gyb = _forward_gradients(b)
        loss += float(np.mean((gxa - gxb) ** 2)) + float(np.mean((gya - gyb) ** 2))
        a = _downsample2(a)
        b = _downsample2(b)
    return loss


def filter_pairs(manifest: PairManifest, drop_fraction: float = DEFAULT_DROP_FRACTION) -> PairManifest:
    """Mark the floor(drop_fraction * N) highest-residual pairs kept=False.

    N counts successful entries only; ties break by scene_id (lexicographic
    order drops first). Idempotent: re-filtering reproduces the partition.
    """
    if not 0 <= drop_fraction < 1:
        raise ValueError("drop_fraction must be in [0, 1)")
    ok = [e for e in manifest.entries if e.failure is None]
    if not ok:
        raise ValueError("manifest has no successful entries")
    if any(e.error is None or e.error < 0 for e in ok):
        raise ValueError("every successful entry must carry a non-negative residual")
    if len({e.scene_id for e in ok}) != len(ok):
        raise ValueError("scene ids must be unique for deterministic tie-breaking")
    drop_n = int(np.floor(drop_fraction * len(ok)))
    ranked = sorted(ok, key=lambda e: (-e.error, e.scene_id))
    dropped = {e.scene_id for e in ranked[:drop_n]}
    entries = tuple(
        replace(e, kept=(e.failure is None and e.scene_id not in dropped))
        for e in manifest.entries
    )
    return PairManifest(entries=entries)


def make_pair(assets: SceneAssets, fit_cfg: FitConfig,
              discontinuity_ratio: float = 1.2,
              fit_long_side: int = FIT_LONG_SIDE) -> tuple[ImageBuffer, ValidMask, float, FitReport]:
    """Build, fit, and re-render one scene.

    Returns (D~ under the fitted lighting, valid mask, fit residual e,
    full report). The diffuse target is resized so its longer side is at
    most fit_long_side, with the camera rescaled to match.
    """
    if assets.shading is None:
        raise ValueError("pair generation needs a shading raster (D = A x S)")
    target = diffuse_image(assets.albedo, assets.shading)
    camera = assets.camera
    if max(target.width, target.height) > fit_long_side:
        scale = fit_long_side / max(target.width, target.height)
        new_w = max(1, round(target.width * scale))
        new_h = max(1, round(target.height * scale))
        target = resize_image(target, new_h, new_w)
        camera = camera.scaled(new_w, new_h)

    mesh = build_mesh(assets.pointmap, assets.albedo, discontinuity_ratio)
    mesh, _ = normalize_scene(mesh)
    scene = TracerScene(mesh)
    report = fit_lighting(target, scene, camera, fit_cfg)
    final = render(scene, report.psi_star,
                   RenderConfig(width=camera.width, height=camera.height, camera=camera,
                                spp=fit_cfg.spp, max_depth=fit_cfg.max_depth,
                                seed=fit_cfg.seed))
    return final.image, final.mask, report.final_error, report


def generate_pairs(scene_manifests: list[str | Path], out_dir: str | Path,
                   fit_cfg: FitConfig, drop_fraction: float = DEFAULT_DROP_FRACTION,
                   fit_long_side: int = FIT_LONG_SIDE) -> PairManifest:
    """Run make_pair over a scene batch and write the pair tree + manifest.

    Per-scene failures are recorded (kept=False, failure message) and
    excluded from the drop-fraction arithmetic.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries: list[PairEntry] = []
    for path in scene_manifests:
        path = Path(path)
        spec = json.loads(path.read_text())
        scene_id = str(spec.get("scene_id", path.parent.name))
        try:
            assets = load_assets(path)
            dtilde, mask, error, report = make_pair(assets, fit_cfg, fit_long_side=fit_long_side)
            scene_dir = out / scene_id
            scene_dir.mkdir(parents=True, exist_ok=True)
            write_pfm(scene_dir / "dtilde.pfm", dtilde.data.astype(np.float32))
            write_mask_png(scene_dir / "mask.png", mask.bits)
            albedo_small = assets.albedo
            if (albedo_small.height, albedo_small.width) != (dtilde.height, dtilde.width):
                albedo_small = resize_image(albedo_small, dtilde.height, dtilde.width)
            filled = fill_holes(dtilde, mask)
            nr = assemble_nr_input(filled, albedo_small, mask)
            np.save(scene_dir / "nr_input.npy", nr.astype(np.float32))
            (scene_dir / "fit.json").write_text(json.dumps(
                report.to_dict(env_path=scene_dir / "psi_env.pfm"), indent=2))
            entries.append(PairEntry(
                scene_id=scene_id, assets=str(path), error=error,
                dtilde=str(scene_dir / "dtilde.pfm"), mask=str(scene_dir / "mask.png"),
                nr_input=str(scene_dir / "nr_input.npy"), fit=str(scene_dir / "fit.json"),
                kept=True))
        except (ValueError, OSError, KeyError) as exc:
            entries.append(PairEntry(
                scene_id=scene_id, assets=str(path), error=None, dtilde=None,
                mask=None, nr_input=None, fit=None, kept=False, failure=str(exc)))
    manifest = filter_pairs(PairManifest(entries=tuple(entries)), drop_fraction)
    (out / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=2))
    return manifest
