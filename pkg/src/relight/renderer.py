"""Public rendering API over the numba kernels.

TracerScene packs a TexturedMesh once (BVH + per-triangle shading data) and
can be reused across renders; the fit loop and the HTTP service both hold
one per scene. render() is seeded and deterministic: identical inputs and
seed give a bit-identical image for any thread count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import numba

from . import kernels
from .bvh import Bvh, build_bvh
from .envmap import EnvDistribution, build_env_distribution
from .image import ImageBuffer, Role, ValidMask
from .lights import _KIND_IDS, LightingEnvironment
from .scene import CameraModel, TexturedMesh

SHADOW_EPS_FACTOR = 1e-4  # shadow-ray offset, relative to scene size


@dataclass(frozen=True)
class RenderConfig:
    """Raster + sampling parameters for one render."""

    width: int
    height: int
    camera: CameraModel
    spp: int = 16
    max_depth: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.spp < 1:
            raise ValueError("spp must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if (self.camera.width, self.camera.height) != (self.width, self.height):
            raise ValueError("camera raster size must match the render size")


class TracerScene:
    """Mesh packed for the tracer: BVH plus BVH-ordered shading arrays."""

    def __init__(self, mesh: TexturedMesh):
        if mesh.num_triangles == 0:
            raise ValueError("cannot trace an empty mesh")
        self.mesh = mesh
        self.bvh: Bvh = build_bvh(mesh.vertices, mesh.triangles)
        tris = mesh.triangles.astype(np.int64)
        p0 = mesh.vertices[tris[:, 0]]
        e1 = mesh.vertices[tris[:, 1]] - p0
        e2 = mesh.vertices[tris[:, 2]] - p0
        n = np.cross(e1, e2)
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        order = self.bvh.tri_index.astype(np.int64)
        self.tri_n = np.ascontiguousarray(n[order])
        colors = mesh.vertex_colors
        self.tri_c0 = np.ascontiguousarray(colors[tris[order, 0]])
        self.tri_c1 = np.ascontiguousarray(colors[tris[order, 1]])
        self.tri_c2 = np.ascontiguousarray(colors[tris[order, 2]])
        lo, hi = mesh.bounds()
        self.scene_scale = float(np.linalg.norm(hi - lo))
        self.shadow_eps = SHADOW_EPS_FACTOR * self.scene_scale
        self.camera_origin = np.asarray(mesh.camera_origin, dtype=np.float64)


@dataclass(frozen=True)
class RenderResult:
    image: ImageBuffer
    mask: ValidMask
    millis: float


@dataclass(frozen=True)
class EmissionGradients:
    """d(objective)/d(emission and position parameters)."""

    env: np.ndarray              # (rows, cols, 3)
    light_intensity: np.ndarray  # (L, 3)
    light_position: np.ndarray   # (L, 3)


def set_render_threads(n: int) -> None:
    """Cap the render thread pool (output is identical for any value)."""
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)


_EMPTY3 = np.zeros((0, 3), dtype=np.float64)
_EMPTY1 = np.zeros(0, dtype=np.float64)


def _pack_lights(lighting: LightingEnvironment, vis_positions: np.ndarray | None):
    n = len(lighting.lights)
    if n == 0:
        kind = np.zeros(0, dtype=np.int32)
        return (kind, _EMPTY3, _EMPTY3, _EMPTY3, _EMPTY3, _EMPTY1, _EMPTY1,
                _EMPTY3, _EMPTY3, _EMPTY3, _EMPTY1)
    kind = np.array([_KIND_IDS[l.kind] for l in lighting.lights], dtype=np.int32)
    pos = np.array([l.position for l in lighting.lights], dtype=np.float64)
    intensity = np.array([l.intensity for l in lighting.lights], dtype=np.float64)
    direction = np.array([l.direction for l in lighting.lights], dtype=np.float64)
    cos_in = np.array([np.cos(np.deg2rad(l.cone_inner_deg)) for l in lighting.lights])
    cos_out = np.array([np.cos(np.deg2rad(l.cone_outer_deg)) for l in lighting.lights])
    edge_u = np.array([l.edge_u for l in lighting.lights], dtype=np.float64)
    edge_v = np.array([l.edge_v for l in lighting.lights], dtype=np.float64)
    nrm = np.cross(edge_u, edge_v)
    area = np.linalg.norm(nrm, axis=1)
    nrm = nrm / np.maximum(area, 1e-30)[:, None]
    vis = pos if vis_positions is None else np.asarray(vis_positions, dtype=np.float64)
    if vis.shape != pos.shape:
        raise ValueError("vis_positions must be (num_lights, 3)")
    return (kind, pos, np.ascontiguousarray(vis), intensity, direction, cos_in, cos_out,
            edge_u, edge_v, nrm, area)


def _as_scene(scene: TracerScene | TexturedMesh) -> TracerScene:
    return scene if isinstance(scene, TracerScene) else TracerScene(scene)


def _run_kernel(scene: TracerScene, env: np.ndarray, packed: tuple, cfg: RenderConfig,
                dist: EnvDistribution,
                weight: np.ndarray | None,
                n_blocks: int,
                clamp: bool = True):
    if dist.pdf.shape != env.shape[:2]:
        raise ValueError("env sampling distribution does not match the env resolution")
    env_on = bool(np.abs(env).max() > 0.0)

    adjoint = weight is not None
    rows, cols = env.shape[:2]
    n_lights = max(1, packed[0].shape[0])
    if adjoint:
        g_env = np.zeros((n_blocks, rows, cols, 3), dtype=np.float32)
        g_lint = np.zeros((n_blocks, n_lights, 3), dtype=np.float64)
        g_lpos = np.zeros((n_blocks, n_lights, 3), dtype=np.float64)
        w = np.ascontiguousarray(weight, dtype=np.float64)
        if w.shape != (cfg.height, cfg.width, 3):
            raise ValueError("weight must be (height, width, 3)")
    else:
        g_env = np.zeros((1, 1, 1, 3), dtype=np.float32)
        g_lint = np.zeros((1, 1, 3), dtype=np.float64)
        g_lpos = np.zeros((1, 1, 3), dtype=np.float64)
        w = np.zeros((1, 1, 3), dtype=np.float64)

    img = np.zeros((cfg.height, cfg.width, 3), dtype=np.float64)
    hit = np.zeros((cfg.height, cfg.width), dtype=np.uint8)
    cam = cfg.camera
    o = scene.camera_origin
    kernels.trace_image(
        scene.bvh.tri_v0, scene.bvh.tri_e1, scene.bvh.tri_e2,
        scene.tri_n, scene.tri_c0, scene.tri_c1, scene.tri_c2,
        scene.bvh.node_bmin, scene.bvh.node_bmax, scene.bvh.node_left,
        scene.bvh.node_right, scene.bvh.node_start, scene.bvh.node_count,
        float(cam.fx), float(cam.fy), float(cam.cx), float(cam.cy),
        float(o[0]), float(o[1]), float(o[2]),
        env, env_on, dist.row_cdf, dist.col_cdf, dist.pdf, dist.enabled, rows,
        *packed,
        cfg.width, cfg.height, cfg.spp, cfg.max_depth, np.uint64(cfg.seed),
        scene.shadow_eps, clamp,
        adjoint, w, g_env, g_lint, g_lpos, n_blocks,
        img, hit,
    )
    return img, hit, g_env, g_lint, g_lpos


def render(scene: TracerScene | TexturedMesh, lighting: LightingEnvironment,
           cfg: RenderConfig, *, env_dist: EnvDistribution | None = None,
           vis_positions: np.ndarray | None = None) -> RenderResult:
    """Monte-Carlo render of the mesh under the lighting environment.

    Returns linear radiance plus the valid-pixel mask (pixels whose primary
    ray hits reconstructed geometry). env_dist overrides the environment
    importance distribution (the optimizer freezes it per iteration);
    vis_positions redirects point/spot shadow rays for visibility-frozen
    finite differencing.
    """
    scene = _as_scene(scene)
    start = time.perf_counter()
    dist = env_dist if env_dist is not None else build_env_distribution(lighting.env)
    packed = _pack_lights(lighting, vis_positions)
    img, hit, _, _, _ = _run_kernel(scene, lighting.env, packed, cfg, dist,
                                    None, n_blocks=cfg.height)
    millis = (time.perf_counter() - start) * 1000.0
    return RenderResult(
        image=ImageBuffer(img, Role.RENDER),
        mask=ValidMask(hit.astype(bool)),
        millis=millis,
    )


def render_adjoint(scene: TracerScene | TexturedMesh, lighting: LightingEnvironment,
                   cfg: RenderConfig, weight: np.ndarray, *,
                   env_dist: EnvDistribution | None = None,
                   vis_positions: np.ndarray | None = None) -> EmissionGradients:
    """Replay the sample streams of render() and accumulate gradients.

    weight[y, x, c] is d(objective)/d(image[y, x, c]); the result contains
    the chain-ruled derivative with respect to every env texel, light
    intensity channel, and point-light position coordinate.
    """
    scene = _as_scene(scene)
    n_blocks = min(kernels.ADJOINT_BLOCKS, cfg.height)
    dist = env_dist if env_dist is not None else build_env_distribution(lighting.env)
    packed = _pack_lights(lighting, vis_positions)
    _, _, g_env, g_lint, g_lpos = _run_kernel(scene, lighting.env, packed, cfg, dist,
                                              weight, n_blocks=n_blocks)
    n = len(lighting.lights)
    return EmissionGradients(
        env=g_env.sum(axis=0, dtype=np.float64),
        light_intensity=g_lint.sum(axis=0)[:n],
        light_position=g_lpos.sum(axis=0)[:n],
    )


def render_emission_probe(scene: TracerScene, env_delta: np.ndarray,
                          point_positions: np.ndarray, point_intensities: np.ndarray,
                          cfg: RenderConfig, env_dist: EnvDistribution) -> np.ndarray:
    """Directional derivative of the image along an emission direction.

    Because the rendered image is exactly linear in emission for a frozen
    sampling distribution and shared sample streams, rendering the emission
    *direction* itself (which may be sign-indefinite, hence no validation
    and no output clamp) yields J . d for the realized estimator. The
    optimizer uses this for exact line searches.
    """
    n = point_positions.shape[0]
    kind = np.zeros(n, dtype=np.int32)
    pos = np.ascontiguousarray(point_positions, dtype=np.float64)
    intensity = np.ascontiguousarray(point_intensities, dtype=np.float64).reshape(n, 3)
    dirs = np.tile(np.array([0.0, 0.0, 1.0]), (n, 1))
    ones = np.ones(n, dtype=np.float64)
    packed = (kind, pos, pos, intensity, dirs, ones, ones,
              dirs.copy(), dirs.copy(), dirs.copy(), ones.copy())
    if n == 0:
        packed = _pack_lights(LightingEnvironment(env=np.zeros_like(env_delta)), None)
    img, _, _, _, _ = _run_kernel(scene, np.ascontiguousarray(env_delta, dtype=np.float64),
                                  packed, cfg, env_dist, None,
                                  n_blocks=cfg.height, clamp=False)
    return img
