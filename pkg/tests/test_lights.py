import json

import numpy as np
import pytest

from relight.lights import (
    Light,
    LightingEnvironment,
    LightingSchemaError,
    constant_env,
    load_lighting,
    map_light_to_normalized,
)
from relight.scene import SceneTransform


class TestLightValidation:
    def test_negative_intensity_rejected(self):
        with pytest.raises(LightingSchemaError, match="non-negative"):
            Light(kind="point", intensity=[-1, 0, 0])

    def test_spot_cone_ordering(self):
        with pytest.raises(LightingSchemaError, match="cone"):
            Light(kind="spot", intensity=[1, 1, 1], direction=[0, 0, 1],
                  cone_inner_deg=60, cone_outer_deg=30)

    def test_direction_normalized(self):
        l = Light(kind="directional", direction=[0, 0, 10], intensity=[1, 1, 1])
        np.testing.assert_allclose(np.linalg.norm(l.direction), 1.0)

    def test_degenerate_area_rejected(self):
        with pytest.raises(LightingSchemaError, match="parallelogram"):
            Light(kind="area", intensity=[1, 1, 1], edge_u=[1, 0, 0], edge_v=[2, 0, 0])

    def test_unknown_kind(self):
        with pytest.raises(LightingSchemaError, match="unknown light type"):
            Light(kind="laser", intensity=[1, 1, 1])


class TestJsonRoundTrip:
    CASES = [
        {"type": "point", "position": [1.0, 2.0, 3.0], "intensity": [0.5, 0.25, 0.125]},
        {"type": "spot", "position": [0.0, -1.0, 2.0], "intensity": [1.0, 1.0, 1.0],
         "direction": [0.0, 0.0, 1.0], "cone_inner_deg": 15.0, "cone_outer_deg": 30.0},
        {"type": "directional", "direction": [0.0, 1.0, 0.0], "irradiance": [2.0, 2.0, 2.0]},
        {"type": "area", "position": [0.0, 0.0, 1.0], "edge_u": [0.5, 0.0, 0.0],
         "edge_v": [0.0, 0.5, 0.0], "radiance": [3.0, 3.0, 3.0]},
    ]

    @pytest.mark.parametrize("spec", CASES, ids=lambda s: s["type"])
    def test_roundtrip(self, spec):
        assert Light.from_json(spec).to_json() == spec

    def test_environment_constant_roundtrip(self):
        env = LightingEnvironment.from_json({
            "environment": {"type": "constant", "rgb": [0.25, 0.5, 0.75], "rows": 8},
            "lights": self.CASES,
        })
        assert env.env.shape == (8, 16, 3)
        np.testing.assert_allclose(env.env[0, 0], [0.25, 0.5, 0.75])
        assert [l.to_json() for l in env.lights] == self.CASES

    def test_hdri_file_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        original = LightingEnvironment(env=rng.uniform(0, 3, (8, 16, 3)))
        spec = original.to_json(env_path=tmp_path / "env.pfm")
        assert spec["environment"]["type"] == "hdri"
        (tmp_path / "l.json").write_text(json.dumps(spec))
        back = load_lighting(tmp_path / "l.json")
        np.testing.assert_allclose(back.env, original.env, rtol=1e-6)

    def test_missing_field(self):
        with pytest.raises(LightingSchemaError, match="missing field"):
            Light.from_json({"type": "point", "position": [0, 0, 0]})

    def test_unknown_env_type(self):
        with pytest.raises(LightingSchemaError, match="environment type"):
            LightingEnvironment.from_json({"environment": {"type": "skybox"}})

    def test_env_shape_enforced(self):
        with pytest.raises(LightingSchemaError, match="rows"):
            LightingEnvironment(env=np.zeros((8, 8, 3)))


class TestScaling:
    def test_scaled_scales_everything(self):
        env = LightingEnvironment(env=constant_env([0.5] * 3, rows=8), lights=(
            Light(kind="point", position=[0, 0, 0], intensity=[1, 2, 3]),))
        doubled = env.scaled(2.0)
        np.testing.assert_allclose(doubled.env, 1.0)
        np.testing.assert_allclose(doubled.lights[0].intensity, [2, 4, 6])

    def test_splits(self):
        env = LightingEnvironment(env=constant_env([0.5] * 3, rows=8), lights=(
            Light(kind="point", position=[0, 0, 0], intensity=[1, 1, 1]),))
        assert env.env_only().lights == ()
        assert env.lights_only().env.max() == 0.0
        assert len(env.lights_only().lights) == 1


class TestNormalizedMapping:
    def test_point_intensity_rescales_with_square(self):
        tf = SceneTransform(scale=2.0, translation=np.array([1.0, 0.0, 0.0]))
        l = Light(kind="point", position=[1.0, 1.0, 1.0], intensity=[1.0, 1.0, 1.0])
        mapped = map_light_to_normalized(l, tf)
        np.testing.assert_allclose(mapped.position, [3.0, 2.0, 2.0])
        np.testing.assert_allclose(mapped.intensity, 4.0)

    def test_area_edges_scale_radiance_invariant(self):
        tf = SceneTransform(scale=3.0, translation=np.zeros(3))
        l = Light(kind="area", position=[0, 0, 1], edge_u=[1, 0, 0], edge_v=[0, 1, 0],
                  intensity=[5, 5, 5])
        mapped = map_light_to_normalized(l, tf)
        np.testing.assert_allclose(mapped.edge_u, [3, 0, 0])
        np.testing.assert_allclose(mapped.intensity, 5.0)

    def test_directional_unchanged(self):
        tf = SceneTransform(scale=3.0, translation=np.ones(3))
        l = Light(kind="directional", direction=[0, 0, 1], intensity=[1, 1, 1])
        assert map_light_to_normalized(l, tf) == l
