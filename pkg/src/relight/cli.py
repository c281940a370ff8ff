"""Command-line front door: build scenes, render, fit, batch pairs, serve.

Human-readable logs go to stderr; the last stdout line is a single JSON
object with the produced outputs, for scripting. Exit codes: 0 success,
1 domain error, 2 usage error. Defaults reproduce the reference
configuration (spp 16, depth 3, lr 0.01, K 16, drop 0.15).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("relight")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="base RNG seed (default 0)")
    p.add_argument("--threads", type=int, default=None,
                   help="render thread cap (default: RELIGHT_THREADS or all cores)")
    p.add_argument("--verbose", action="store_true", help="chatty logs on stderr")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="relight",
                                 description="physically controllable relighting workbench")
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build-scene", help="triangulate a point map into a textured mesh")
    b.add_argument("--assets", required=True, help="scene asset manifest JSON")
    b.add_argument("--out", required=True, help="output directory")
    b.add_argument("--ratio", type=float, default=1.2, help="depth discontinuity ratio (default 1.2)")
    _add_common(b)

    r = sub.add_parser("render", help="render a scene under a lighting JSON")
    r.add_argument("--assets", required=True)
    r.add_argument("--lights", required=True, help="lighting JSON file")
    r.add_argument("--out", required=True, help="output radiance PFM")
    r.add_argument("--png", default=None, help="optional tone-mapped PNG preview")
    r.add_argument("--width", type=int, default=None)
    r.add_argument("--height", type=int, default=None)
    r.add_argument("--spp", type=int, default=16)
    r.add_argument("--depth", type=int, default=3)
    r.add_argument("--ratio", type=float, default=1.2)
    _add_common(r)

    f = sub.add_parser("fit", help="reconstruct the scene's original illumination")
    f.add_argument("--assets", required=True)
    f.add_argument("--out", required=True, help="fit report JSON")
    f.add_argument("--render", dest="render_out", default=None,
                   help="PFM of the reconstruction under the fitted lighting "
                        "(default: <out>.render.pfm)")
    f.add_argument("--k", type=int, default=16, help="point light count (default 16)")
    f.add_argument("--env-rows", type=int, default=128)
    f.add_argument("--lr", type=float, default=0.01)
    f.add_argument("--iters", type=int, default=400)
    f.add_argument("--spp", type=int, default=16)
    f.add_argument("--depth", type=int, default=3)
    f.add_argument("--long-side", type=int, default=512,
                   help="resize the diffuse target so its longer side fits this")
    f.add_argument("--ratio", type=float, default=1.2)
    _add_common(f)

    m = sub.add_parser("make-pairs", help="batch-generate self-supervised training pairs")
    m.add_argument("--manifest", required=True, help='batch JSON: {"scenes": [manifest paths]}')
    m.add_argument("--out", required=True)
    m.add_argument("--drop", type=float, default=0.15, help="fraction of worst fits to drop")
    m.add_argument("--iters", type=int, default=400)
    m.add_argument("--spp", type=int, default=16)
    m.add_argument("--depth", type=int, default=3)
    m.add_argument("--k", type=int, default=16)
    m.add_argument("--env-rows", type=int, default=128)
    m.add_argument("--long-side", type=int, default=512)
    _add_common(m)

    e = sub.add_parser("eval-loss", help="multi-scale gradient loss between two rasters")
    e.add_argument("--reference", required=True)
    e.add_argument("--candidate", required=True)
    e.add_argument("--scales", type=int, default=4)
    _add_common(e)

    s = sub.add_parser("serve", help="run the interactive relighting HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    _add_common(s)
    return ap


def _setup(args) -> None:
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s",
                        level=logging.DEBUG if args.verbose else logging.INFO)
    threads = args.threads
    if threads is None:
        env = os.environ.get("RELIGHT_THREADS")
        threads = int(env) if env else None
    if threads is not None:
        from .renderer import set_render_threads

        set_render_threads(threads)


def _emit(payload: dict) -> None:
    print(json.dumps(payload))


def _load_scene(assets_path: str, ratio: float):
    from .renderer import TracerScene
    from .scene import build_mesh, load_assets, normalize_scene

    assets = load_assets(assets_path)
    mesh = build_mesh(assets.pointmap, assets.albedo, ratio)
    mesh, transform = normalize_scene(mesh)
    return assets, mesh, transform, TracerScene(mesh)


def _cmd_build_scene(args) -> dict:
    from .scene import save_ply

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    assets, mesh, transform, _ = _load_scene(args.assets, args.ratio)
    ply = out / "mesh.ply"
    save_ply(mesh, ply)
    meta = {
        "vertices": mesh.num_vertices,
        "triangles": mesh.num_triangles,
        "valid_pixels": mesh.valid_mask.count,
        "width": mesh.width,
        "height": mesh.height,
        "normalization": transform.to_dict(),
        "camera_origin": mesh.camera_origin.tolist(),
    }
    (out / "scene.json").write_text(json.dumps(meta, indent=2))
    log.info("mesh: %d vertices, %d triangles", mesh.num_vertices, mesh.num_triangles)
    return {"mesh": str(ply), "scene": str(out / "scene.json")}


def _cmd_render(args) -> dict:
    from .lights import load_lighting
    from .pfm import write_pfm
    from .renderer import RenderConfig, render

    assets, mesh, _, scene = _load_scene(args.assets, args.ratio)
    lighting = load_lighting(args.lights)
    camera = assets.camera
    width = args.width or camera.width
    height = args.height or camera.height
    if (width, height) != (camera.width, camera.height):
        camera = camera.scaled(width, height)
    cfg = RenderConfig(width=width, height=height, camera=camera,
                       spp=args.spp, max_depth=args.depth, seed=args.seed)
    result = render(scene, lighting, cfg)
    write_pfm(args.out, result.image.data.astype(np.float32))
    outputs = {"render": args.out, "millis": result.millis,
               "valid_pixels": result.mask.count}
    if args.png:
        from .png_io import write_png

        write_png(args.png, result.image.data)
        outputs["png"] = args.png
    log.info("rendered %dx%d at %d spp in %.0f ms", width, height, args.spp, result.millis)
    return outputs


def _fit_config(args):
    from .fit import FitConfig

    return FitConfig(k_lights=args.k, env_rows=args.env_rows, lr=getattr(args, "lr", 0.01),
                     max_iters=args.iters, spp=args.spp, max_depth=args.depth, seed=args.seed)


def _cmd_fit(args) -> dict:
    from .fit import fit_lighting
    from .image import diffuse_image, resize_image
    from .pfm import write_pfm
    from .renderer import RenderConfig, render

    assets, mesh, _, scene = _load_scene(args.assets, args.ratio)
    if assets.shading is None:
        raise ValueError("fit requires a shading raster in the asset manifest")
    target = diffuse_image(assets.albedo, assets.shading)
    camera = assets.camera
    if max(target.width, target.height) > args.long_side:
        s = args.long_side / max(target.width, target.height)
        w, h = max(1, round(target.width * s)), max(1, round(target.height * s))
        target = resize_image(target, h, w)
        camera = camera.scaled(w, h)
    cfg = _fit_config(args)
    report = fit_lighting(target, scene, camera, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    env_path = out.with_suffix(".env.pfm")
    out.write_text(json.dumps(report.to_dict(env_path=env_path), indent=2))
    outputs = {"fit": str(out), "final_error": report.final_error,
               "iterations": report.iterations_run}
    render_out = args.render_out or str(out.with_suffix(".render.pfm"))
    res = render(scene, report.psi_star,
                 RenderConfig(width=camera.width, height=camera.height, camera=camera,
                              spp=args.spp, max_depth=args.depth, seed=args.seed))
    write_pfm(render_out, res.image.data.astype(np.float32))
    outputs["render"] = render_out
    log.info("fit: e=%.4f after %d iterations (%.1fs)",
             report.final_error, report.iterations_run, report.wall_time)
    return outputs


def _cmd_make_pairs(args) -> dict:
    from .dataset import generate_pairs

    batch_path = Path(args.manifest)
    batch = json.loads(batch_path.read_text())
    if not isinstance(batch, dict) or "scenes" not in batch:
        raise ValueError('batch manifest must be {"scenes": [asset manifest paths]}')
    scene_paths = [batch_path.parent / p for p in batch["scenes"]]
    manifest = generate_pairs(scene_paths, args.out, _fit_config(args),
                              drop_fraction=args.drop, fit_long_side=args.long_side)
    kept = sum(1 for e in manifest.entries if e.kept)
    failed = sum(1 for e in manifest.entries if e.failure is not None)
    log.info("pairs: %d kept / %d total (%d failed)", kept, len(manifest.entries), failed)
    return {"manifest": str(Path(args.out) / "manifest.json"),
            "entries": len(manifest.entries), "kept": kept, "failed": failed}


def _cmd_eval_loss(args) -> dict:
    from .dataset import multiscale_loss
    from .image import ImageBuffer, Role
    from .pfm import read_pfm
    from .png_io import read_png

    def load(path: str) -> ImageBuffer:
        if path.lower().endswith(".pfm"):
            arr = read_pfm(path).astype(np.float64)
        else:
            arr = read_png(path)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        return ImageBuffer(arr, Role.INPUT)

    loss = multiscale_loss(load(args.reference), load(args.candidate), scales=args.scales)
    return {"loss": loss, "scales": args.scales}


def _cmd_serve(args) -> dict:
    import uvicorn

    from .service import create_app

    log.info("serving on http://%s:%d", args.host, args.port)
    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="warning")
    return {"served": True}


_COMMANDS = {
    "build-scene": _cmd_build_scene,
    "render": _cmd_render,
    "fit": _cmd_fit,
    "make-pairs": _cmd_make_pairs,
    "eval-loss": _cmd_eval_loss,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    _setup(args)
    try:
        outputs = _COMMANDS[args.command](args)
    except (ValueError, OSError, KeyError) as exc:
        log.error("%s", exc)
        _emit({"ok": False, "error": str(exc)})
        return 1
    _emit({"ok": True, **outputs})
    return 0


if __name__ == "__main__":
    sys.exit(main())
