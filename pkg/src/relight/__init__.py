"""Physically controllable relighting workbench.

Rebuilds a photograph as a textured 2.5D mesh from precomputed geometry and
albedo, renders it under user-defined lights with a diffuse Monte-Carlo
path tracer, and reconstructs the original illumination by gradient-based
fitting of an HDRI environment plus point lights.
"""

from .image import (
    ImageBuffer,
    Role,
    ValidMask,
    diffuse_image,
    residual,
    resize_image,
    resize_to_long_side,
)
from .color import srgb_decode, srgb_encode, luminance
from .scene import (
    CameraModel,
    PointMap,
    SceneTransform,
    TexturedMesh,
    build_mesh,
    load_assets,
    normalize_scene,
    project,
    save_ply,
    unproject,
)
from .lights import Light, LightingEnvironment, LightingSchemaError, constant_env, load_lighting
from .envmap import EnvironmentSampler, build_env_distribution, sample_env
from .bvh import Bvh, build_bvh
from .renderer import (
    EmissionGradients,
    RenderConfig,
    RenderResult,
    TracerScene,
    render,
    render_adjoint,
    set_render_threads,
)
from .fit import (
    FitConfig,
    FitReport,
    fit_lighting,
    grad_emission,
    grad_positions,
    init_psi,
    objective,
)
from .dataset import (
    PairEntry,
    PairManifest,
    assemble_nr_input,
    fill_holes,
    filter_pairs,
    generate_pairs,
    make_pair,
    multiscale_loss,
)

__version__ = "0.1.0"
