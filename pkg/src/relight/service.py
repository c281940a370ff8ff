"""Session-oriented HTTP service for interactive relighting.

A session wraps one scene: the mesh is immutable after build, the lighting
is swapped atomically under a per-session lock, and renders snapshot the
lighting so they never observe a half-applied update. Sessions live in
memory; this is a single-operator tool, not a multi-tenant server.

API (JSON errors are {"code", "message"}):
    POST   /sessions                    multipart bundle -> 201 {"id": ...}
    GET    /sessions/{id}               status + current lighting
    PUT    /sessions/{id}/lighting      replace lighting (env may be omitted
                                        to keep the current one)
    POST   /sessions/{id}/render        {width,height,spp,seed,format} ->
                                        image bytes, X-Render-Millis header
    POST   /sessions/{id}/fit           reconstruct original lighting,
                                        install it, return the fit report
    DELETE /sessions/{id}
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .color import srgb_encode
from .fit import FitConfig, fit_lighting
from .image import ImageBuffer, Role, diffuse_image
from .lights import LightingEnvironment, LightingSchemaError, constant_env
from .multipart import MultipartError, parse_multipart
from .pfm import decode_pfm, encode_pfm
from .renderer import RenderConfig, TracerScene, render
from .scene import CameraModel, PointMap, SceneTransform, build_mesh, normalize_scene


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class Session:
    id: str
    scene: TracerScene
    camera: CameraModel
    albedo: ImageBuffer
    shading: ImageBuffer | None
    lighting: LightingEnvironment
    transform: "SceneTransform | None" = None
    revision: int = 0
    build_millis: float = 0.0
    lock: threading.Lock = field(default_factory=threading.Lock)

    def snapshot(self) -> tuple[LightingEnvironment, int]:
        with self.lock:
            return self.lighting, self.revision

    def install(self, lighting: LightingEnvironment) -> int:
        with self.lock:
            self.lighting = lighting
            self.revision += 1
            return self.revision


def _lighting_summary(lighting: LightingEnvironment) -> dict:
    """Lighting JSON with the env summarized (texels stay server-side)."""
    flat = lighting.env.reshape(-1, 3)
    if np.all(flat == flat[0]):
        env: dict = {"type": "constant", "rgb": flat[0].tolist(), "rows": lighting.env_rows}
    else:
        env = {"type": "hdri", "rows": lighting.env_rows,
               "mean_rgb": lighting.env.mean(axis=(0, 1)).tolist()}
    return {"environment": env, "lights": [l.to_json() for l in lighting.lights]}


class RenderBody(BaseModel):
    width: int | None = None
    height: int | None = None
    spp: int = 16
    seed: int = 0
    max_depth: int = 3
    format: str = "png"


class FitBody(BaseModel):
    k_lights: int = 16
    env_rows: int = 128
    max_iters: int = 400
    spp: int = 16
    max_depth: int = 3
    seed: int = 0
    lr: float = 0.01


def _decode_raster(data: bytes, name: str) -> np.ndarray:
    if data[:2] in (b"PF", b"Pf"):
        return decode_pfm(data, name=name)
    import cv2

    arr = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise ServiceError(422, "bad_asset", f"asset {name!r} is not a readable raster")
    from .color import srgb_decode

    maxval = 255.0 if arr.dtype == np.uint8 else 65535.0
    if arr.ndim == 3:
        arr = arr[:, :, :3][:, :, ::-1]
    return srgb_decode(arr.astype(np.float64) / maxval)


def create_app() -> FastAPI:
    app = FastAPI(title="relight", docs_url=None, redoc_url=None)
    # single-operator local tool; the browser studio runs on another port
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"], expose_headers=["X-Render-Millis", "X-Lighting-Revision"])
    sessions: dict[str, Session] = {}

    @app.exception_handler(ServiceError)
    async def _service_error(_req, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content={"code": exc.code, "message": exc.message})

    def get_session(session_id: str) -> Session:
        s = sessions.get(session_id)
        if s is None:
            raise ServiceError(404, "unknown_session", f"no session {session_id!r}")
        return s

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        started = time.perf_counter()
        content_type = request.headers.get("content-type", "")
        if "multipart/form-data" not in content_type:
            raise ServiceError(415, "unsupported_media_type", "expected a multipart asset bundle")
        try:
            fields = parse_multipart(await request.body(), content_type)
        except MultipartError as exc:
            raise ServiceError(400, "bad_multipart", str(exc))
        for required in ("pointmap", "albedo", "camera"):
            if required not in fields:
                raise ServiceError(422, "missing_asset", f"missing asset: {required}")
        try:
            pm_arr = _decode_raster(fields["pointmap"], "pointmap").astype(np.float64)
            if pm_arr.ndim != 3 or pm_arr.shape[2] != 3:
                raise ServiceError(422, "bad_asset", "pointmap must be a 3-channel PFM")
            pointmap = PointMap(points=pm_arr, valid=pm_arr[:, :, 2] > 0)
            albedo_arr = _decode_raster(fields["albedo"], "albedo")
            if albedo_arr.ndim == 2:
                albedo_arr = np.repeat(albedo_arr[:, :, None], 3, axis=2)
            albedo = ImageBuffer(np.clip(albedo_arr, 0.0, 1.0), Role.ALBEDO)
            camera = CameraModel.from_dict(json.loads(fields["camera"].decode("utf-8")),
                                           width=pointmap.width, height=pointmap.height)
            shading = None
            if "shading" in fields:
                sh = _decode_raster(fields["shading"], "shading").astype(np.float64)
                if sh.ndim == 2:
                    sh = np.repeat(sh[:, :, None], 3, axis=2)
                shading = ImageBuffer(np.maximum(sh, 0.0), Role.SHADING)
            mesh = build_mesh(pointmap, albedo, 1.2)
            mesh, transform = normalize_scene(mesh)
            scene = TracerScene(mesh)
        except ServiceError:
            raise
        except (ValueError, KeyError) as exc:
            raise ServiceError(422, "bad_asset", str(exc))
        session = Session(
            id=uuid.uuid4().hex,
            scene=scene,
            camera=camera,
            albedo=albedo,
            shading=shading,
            lighting=LightingEnvironment(env=constant_env([0.5, 0.5, 0.5])),
            transform=transform,
            build_millis=(time.perf_counter() - started) * 1000.0,
        )
        sessions[session.id] = session
        return {"id": session.id, "build_millis": session.build_millis}

    @app.get("/sessions/{session_id}")
    def session_status(session_id: str):
        s = get_session(session_id)
        lighting, revision = s.snapshot()
        return {
            "id": s.id,
            "width": s.camera.width,
            "height": s.camera.height,
            "num_vertices": s.scene.mesh.num_vertices,
            "num_triangles": s.scene.mesh.num_triangles,
            "has_shading": s.shading is not None,
            "build_millis": s.build_millis,
            "lighting_revision": revision,
            "lighting": _lighting_summary(lighting),
            # camera-space -> normalized-scene similarity (lights live in
            # normalized coordinates; clients map their local geometry with it)
            "normalization": s.transform.to_dict() if s.transform else None,
            "camera_origin": s.scene.camera_origin.tolist(),
        }

    @app.put("/sessions/{session_id}/lighting")
    async def set_lighting(session_id: str, request: Request):
        s = get_session(session_id)
        try:
            spec = json.loads(await request.body())
        except json.JSONDecodeError as exc:
            raise ServiceError(400, "bad_json", str(exc))
        current, _ = s.snapshot()
        try:
            lighting = LightingEnvironment.from_json(spec, current_env=current.env)
        except LightingSchemaError as exc:
            raise ServiceError(422, "bad_lighting", str(exc))
        revision = s.install(lighting)
        return {"lighting": _lighting_summary(lighting), "lighting_revision": revision}

    @app.post("/sessions/{session_id}/render")
    def render_preview(session_id: str, body: RenderBody):
        s = get_session(session_id)
        width = body.width or s.camera.width
        height = body.height or s.camera.height
        if body.format not in ("png", "pfm"):
            raise ServiceError(422, "bad_format", "format must be 'png' or 'pfm'")
        try:
            cfg = RenderConfig(width=width, height=height,
                               camera=s.camera.scaled(width, height),
                               spp=body.spp, max_depth=body.max_depth, seed=body.seed)
        except ValueError as exc:
            raise ServiceError(422, "bad_render_config", str(exc))
        lighting, revision = s.snapshot()
        result = render(s.scene, lighting, cfg)
        headers = {
            "X-Render-Millis": f"{result.millis:.3f}",
            "X-Lighting-Revision": str(revision),
        }
        if body.format == "pfm":
            payload = encode_pfm(result.image.data.astype(np.float32))
            return Response(content=payload, media_type="application/octet-stream", headers=headers)
        import cv2

        rgb = np.round(srgb_encode(result.image.data) * 255.0).astype(np.uint8)
        alpha = np.where(result.mask.bits, 255, 0).astype(np.uint8)
        bgra = np.dstack([rgb[:, :, ::-1], alpha])
        ok, png = cv2.imencode(".png", bgra)
        if not ok:
            raise ServiceError(500, "encode_failed", "PNG encoding failed")
        return Response(content=png.tobytes(), media_type="image/png", headers=headers)

    @app.post("/sessions/{session_id}/fit")
    def fit_session_lighting(session_id: str, body: FitBody | None = None):
        s = get_session(session_id)
        if s.shading is None:
            raise ServiceError(409, "fit_requires_diffuse", "fit requires diffuse target")
        body = body or FitBody()
        target = diffuse_image(s.albedo, s.shading)
        camera = s.camera
        cfg = FitConfig(k_lights=body.k_lights, env_rows=body.env_rows,
                        max_iters=body.max_iters, spp=body.spp,
                        max_depth=body.max_depth, seed=body.seed, lr=body.lr)
        report = fit_lighting(target, s.scene, camera, cfg)
        revision = s.install(report.psi_star)
        return {
            "final_error": report.final_error,
            "iterations": report.iterations_run,
            "wall_time_s": report.wall_time,
            "trace": report.objective_trace,
            "psi": _lighting_summary(report.psi_star),
            "lighting_revision": revision,
        }

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        get_session(session_id)
        del sessions[session_id]
        return Response(status_code=204)

    return app
