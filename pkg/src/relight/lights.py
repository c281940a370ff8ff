"""Lighting environments: lat-long HDRI plus analytic light sources.

The optimizable subset is the environment map plus the point lights; spot,
directional, and area lights exist for forward (user-driven) rendering.
Positions are expressed in normalized scene coordinates (see
scene.normalize_scene).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

DEFAULT_ENV_ROWS = 128

KIND_POINT = 0
KIND_SPOT = 1
KIND_DIRECTIONAL = 2
KIND_AREA = 3

_KIND_NAMES = {KIND_POINT: "point", KIND_SPOT: "spot", KIND_DIRECTIONAL: "directional", KIND_AREA: "area"}
_KIND_IDS = {v: k for k, v in _KIND_NAMES.items()}


class LightingSchemaError(ValueError):
    """Raised when lighting JSON violates the schema."""


def _vec3(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (3,) or not np.isfinite(arr).all():
        raise LightingSchemaError(f"{name} must be a finite 3-vector")
    return arr


@dataclass(frozen=True)
class Light:
    """One analytic light source.

    intensity is radiant intensity for point/spot, perpendicular irradiance
    for directional, and radiance for area lights. direction is the spot or
    directional propagation axis (unit length); area lights are the
    parallelogram position + u*edge_u + v*edge_v emitting from the side
    cross(edge_u, edge_v) points toward.
    """

    kind: str
    intensity: np.ndarray
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    direction: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    cone_inner_deg: float = 30.0
    cone_outer_deg: float = 45.0
    edge_u: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    edge_v: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))

    def __post_init__(self) -> None:
        if self.kind not in _KIND_IDS:
            raise LightingSchemaError(f"unknown light type: {self.kind!r}")
        intensity = _vec3(self.intensity, "intensity")
        if intensity.min() < 0:
            raise LightingSchemaError("light intensity must be non-negative")
        position = _vec3(self.position, "position")
        direction = _vec3(self.direction, "direction")
        norm = float(np.linalg.norm(direction))
        if self.kind in ("spot", "directional"):
            if norm == 0:
                raise LightingSchemaError("direction must be non-zero")
            direction = direction / norm
        if self.kind == "spot":
            if not (0 < self.cone_inner_deg <= self.cone_outer_deg <= 90):
                raise LightingSchemaError("spot cones must satisfy 0 < inner <= outer <= 90 degrees")
        edge_u = _vec3(self.edge_u, "edge_u")
        edge_v = _vec3(self.edge_v, "edge_v")
        if self.kind == "area" and np.linalg.norm(np.cross(edge_u, edge_v)) == 0:
            raise LightingSchemaError("area light edges must span a parallelogram")
        for name, val in (("intensity", intensity), ("position", position),
                          ("direction", direction), ("edge_u", edge_u), ("edge_v", edge_v)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    def to_json(self) -> dict:
        if self.kind == "point":
            return {"type": "point", "position": self.position.tolist(), "intensity": self.intensity.tolist()}
        if self.kind == "spot":
            return {"type": "spot", "position": self.position.tolist(), "intensity": self.intensity.tolist(),
                    "direction": self.direction.tolist(), "cone_inner_deg": self.cone_inner_deg,
                    "cone_outer_deg": self.cone_outer_deg}
        if self.kind == "directional":
            return {"type": "directional", "direction": self.direction.tolist(), "irradiance": self.intensity.tolist()}
        return {"type": "area", "position": self.position.tolist(), "edge_u": self.edge_u.tolist(),
                "edge_v": self.edge_v.tolist(), "radiance": self.intensity.tolist()}

    @classmethod
    def from_json(cls, spec: dict) -> "Light":
        if not isinstance(spec, dict) or "type" not in spec:
            raise LightingSchemaError("light entry must be an object with a 'type'")
        kind = spec["type"]
        try:
            if kind == "point":
                return cls(kind="point", position=spec["position"], intensity=spec["intensity"])
            if kind == "spot":
                return cls(kind="spot", position=spec["position"], intensity=spec["intensity"],
                           direction=spec["direction"], cone_inner_deg=float(spec["cone_inner_deg"]),
                           cone_outer_deg=float(spec["cone_outer_deg"]))
            if kind == "directional":
                return cls(kind="directional", direction=spec["direction"], intensity=spec["irradiance"])
            if kind == "area":
                return cls(kind="area", position=spec["position"], edge_u=spec["edge_u"],
                           edge_v=spec["edge_v"], intensity=spec["radiance"])
        except KeyError as exc:
            raise LightingSchemaError(f"{kind} light missing field {exc}") from exc
        raise LightingSchemaError(f"unknown light type: {kind!r}")


def constant_env(rgb, rows: int = DEFAULT_ENV_ROWS) -> np.ndarray:
    value = _vec3(rgb, "environment rgb")
    if value.min() < 0:
        raise LightingSchemaError("environment radiance must be non-negative")
    return np.broadcast_to(value, (rows, 2 * rows, 3)).copy()


@dataclass(frozen=True)
class LightingEnvironment:
    """The full illumination state: lat-long HDRI env plus a light list."""

    env: np.ndarray  # (rows, 2*rows, 3) float64, >= 0
    lights: tuple[Light, ...] = ()

    def __post_init__(self) -> None:
        env = np.ascontiguousarray(np.asarray(self.env, dtype=np.float64))
        if env.ndim != 3 or env.shape[2] != 3 or env.shape[1] != 2 * env.shape[0] or env.shape[0] < 1:
            raise LightingSchemaError(f"environment map must be (rows, 2*rows, 3), got {env.shape}")
        if not np.isfinite(env).all() or env.min() < 0:
            raise LightingSchemaError("environment radiance must be finite and non-negative")
        env.setflags(write=False)
        object.__setattr__(self, "env", env)
        object.__setattr__(self, "lights", tuple(self.lights))

    @property
    def env_rows(self) -> int:
        return self.env.shape[0]

    def scaled(self, factor: float) -> "LightingEnvironment":
        """Scale every emission parameter by a non-negative factor."""
        if factor < 0:
            raise ValueError("scale factor must be non-negative")
        lights = tuple(replace(l, intensity=l.intensity * factor) for l in self.lights)
        return LightingEnvironment(env=self.env * factor, lights=lights)

    def env_only(self) -> "LightingEnvironment":
        return LightingEnvironment(env=self.env, lights=())

    def lights_only(self) -> "LightingEnvironment":
        return LightingEnvironment(env=np.zeros_like(self.env), lights=self.lights)

    def to_json(self, env_path: str | Path | None = None) -> dict:
        """Serialize to the lighting JSON schema.

        A non-constant environment needs env_path: the HDRI is written there
        as PFM and referenced. Constant environments inline their RGB.
        """
        flat = self.env.reshape(-1, 3)
        if np.all(flat == flat[0]):
            env_spec: dict = {"type": "constant", "rgb": flat[0].tolist(), "rows": self.env_rows}
        else:
            if env_path is None:
                raise ValueError("non-constant environment requires env_path for serialization")
            from .pfm import write_pfm

            write_pfm(env_path, self.env.astype(np.float32))
            env_spec = {"type": "hdri", "path": str(env_path)}
        return {"environment": env_spec, "lights": [l.to_json() for l in self.lights]}

    @classmethod
    def from_json(cls, spec: dict, base_dir: str | Path = ".",
                  current_env: np.ndarray | None = None) -> "LightingEnvironment":
        """Parse the lighting JSON schema.

        An omitted "environment" keeps current_env when one is supplied
        (used by the editing service so light edits preserve a fitted HDRI).
        """
        if not isinstance(spec, dict):
            raise LightingSchemaError("lighting must be a JSON object")
        unknown = set(spec) - {"environment", "lights"}
        if unknown:
            raise LightingSchemaError(f"unknown lighting keys: {sorted(unknown)}")
        env_spec = spec.get("environment")
        if env_spec is None:
            if current_env is None:
                raise LightingSchemaError("lighting must define an environment")
            env = current_env
        else:
            if not isinstance(env_spec, dict) or "type" not in env_spec:
                raise LightingSchemaError("environment must be an object with a 'type'")
            if env_spec["type"] == "constant":
                env = constant_env(env_spec["rgb"], rows=int(env_spec.get("rows", DEFAULT_ENV_ROWS)))
            elif env_spec["type"] == "hdri":
                from .pfm import read_pfm

                arr = read_pfm(Path(base_dir) / env_spec["path"])
                if arr.ndim != 3:
                    raise LightingSchemaError("HDRI must be a 3-channel PFM")
                env = np.maximum(arr.astype(np.float64), 0.0)
            else:
                raise LightingSchemaError(f"unknown environment type: {env_spec['type']!r}")
        lights = tuple(Light.from_json(entry) for entry in spec.get("lights", []))
        return cls(env=env, lights=lights)


def load_lighting(path: str | Path) -> LightingEnvironment:
    path = Path(path)
    return LightingEnvironment.from_json(json.loads(path.read_text()), base_dir=path.parent)


def map_light_to_normalized(light: Light, transform) -> Light:
    """Re-express a camera-space light in normalized scene coordinates.

    Point/spot radiant intensity scales with the squared similarity scale so
    the irradiance pattern on the (also rescaled) geometry is preserved;
    directional irradiance and area radiance are scale-invariant.
    """
    s = transform.scale
    pos = transform.apply_points(light.position)
    if light.kind in ("point", "spot"):
        return replace(light, position=pos, intensity=light.intensity * s * s)
    if light.kind == "area":
        return replace(light, position=pos, edge_u=light.edge_u * s, edge_v=light.edge_v * s)
    return light
