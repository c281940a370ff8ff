"""Finite-difference oracles for the transport-coefficient gradients.

Every comparison shares the render seed and freezes the env sampling
distribution across perturbed evaluations (common random numbers), so the
differences measure math errors, not Monte-Carlo noise.
"""

import numpy as np
import pytest
from dataclasses import replace

from relight.envmap import build_env_distribution
from relight.fit import (
    FitConfig,
    evaluate_objective,
    grad_emission,
    grad_positions,
    init_psi,
)
from relight.image import ImageBuffer, Role
from relight.lights import Light, LightingEnvironment, constant_env
from relight.renderer import RenderConfig, TracerScene, render
from relight.scene import build_mesh, normalize_scene
from relight.synthetic import make_room, room_ground_truth_lighting

SEED = 5


@pytest.fixture(scope="module")
def setup():
    room = make_room(64, 48)
    mesh = build_mesh(room.pointmap, room.albedo, 1.2)
    mesh, _ = normalize_scene(mesh)
    scene = TracerScene(mesh)
    cam = room.camera
    gt = room_ground_truth_lighting()
    target = render(scene, gt, RenderConfig(width=64, height=48, camera=cam,
                                            spp=64, max_depth=2, seed=999))
    D = ImageBuffer(target.image.data, Role.DIFFUSE)
    cfg = FitConfig(k_lights=4, env_rows=8, spp=8, max_depth=2, seed=SEED, max_iters=1)
    psi = init_psi(scene.mesh, cfg)
    return scene, cam, D, cfg, psi


def fd_env(scene, cam, D, cfg, psi, dist, r, c, ch, delta=0.5):
    hi = psi.env.copy()
    hi[r, c, ch] += delta
    lo = psi.env.copy()
    lo[r, c, ch] = max(0.0, lo[r, c, ch] - delta)
    e_hi = evaluate_objective(scene, LightingEnvironment(env=hi, lights=psi.lights),
                              cfg, D, cam, seed=SEED, env_dist=dist)
    e_lo = evaluate_objective(scene, LightingEnvironment(env=lo, lights=psi.lights),
                              cfg, D, cam, seed=SEED, env_dist=dist)
    return (e_hi - e_lo) / (hi[r, c, ch] - lo[r, c, ch])


class TestEmissionGradients:
    def test_env_texels_match_fd(self, setup):
        scene, cam, D, cfg, psi = setup
        g_env, _ = grad_emission(scene, psi, cfg, D, cam, seed=SEED)
        dist = build_env_distribution(psi.env)
        rng = np.random.default_rng(0)
        checked = 0
        for _ in range(24):
            r, c, ch = rng.integers(8), rng.integers(16), rng.integers(3)
            fd = fd_env(scene, cam, D, cfg, psi, dist, r, c, ch)
            if abs(fd) < 1e-9:
                assert abs(g_env[r, c, ch]) < 1e-9
                continue
            assert abs(g_env[r, c, ch] - fd) / abs(fd) < 1e-3
            checked += 1
        assert checked >= 10

    def test_intensities_match_fd(self, setup):
        scene, cam, D, cfg, psi = setup
        _, g_int = grad_emission(scene, psi, cfg, D, cam, seed=SEED)
        dist = build_env_distribution(psi.env)
        for j in range(4):
            for ch in range(3):
                delta = 0.25
                def with_intensity(v):
                    lights = list(psi.lights)
                    vec = lights[j].intensity.copy()
                    vec[ch] = v
                    lights[j] = Light(kind="point", position=lights[j].position, intensity=vec)
                    return LightingEnvironment(env=psi.env, lights=tuple(lights))
                base = psi.lights[j].intensity[ch]
                e_hi = evaluate_objective(scene, with_intensity(base + delta), cfg, D, cam,
                                          seed=SEED, env_dist=dist)
                e_lo = evaluate_objective(scene, with_intensity(base - delta), cfg, D, cam,
                                          seed=SEED, env_dist=dist)
                fd = (e_hi - e_lo) / (2 * delta)
                assert abs(g_int[j, ch] - fd) / max(abs(fd), 1e-12) < 1e-3

    def test_zero_emission_gradient_is_pure_cross_term(self, setup):
        """At psi == 0 the render is black, so d e/d param = -2 sum D * T."""
        scene, cam, D, cfg, _ = setup
        dark = LightingEnvironment(env=np.zeros((8, 16, 3)),
                                   lights=(Light(kind="point", position=[0.0, 0.0, 0.0],
                                                 intensity=[0.0, 0.0, 0.0]),))
        dist = build_env_distribution(np.ones((8, 16, 3)))  # frozen, nonzero
        g_env, g_int = grad_emission(scene, dark, cfg, D, cam, seed=SEED)
        # gradients must be non-positive (increasing any emission can only
        # reduce the squared deficit) and not all zero
        assert g_env.max() <= 0.0
        assert g_int.max() <= 0.0

    def test_occluded_light_zero_gradient(self):
        # light behind the only visible surface: zero transport, zero gradient
        from relight.synthetic import make_plane

        assets = make_plane(17, 17, depth=2.0)
        scene = TracerScene(build_mesh(assets.pointmap, assets.albedo, 1.2))
        cfg = FitConfig(k_lights=1, env_rows=8, spp=8, max_depth=2, seed=SEED, max_iters=1)
        D = ImageBuffer(np.full((17, 17, 3), 0.25), Role.DIFFUSE)
        hidden = Light(kind="point", position=[0.0, 0.0, 3.0], intensity=[0.5, 0.5, 0.5])
        psi = LightingEnvironment(env=np.zeros((8, 16, 3)), lights=(hidden,))
        res = render(scene, psi, RenderConfig(width=17, height=17, camera=assets.camera,
                                              spp=8, max_depth=2, seed=SEED))
        np.testing.assert_array_equal(res.image.data, 0.0)
        _, g_int = grad_emission(scene, psi, cfg, D, assets.camera, seed=SEED)
        np.testing.assert_array_equal(g_int, 0.0)


class TestPositionGradients:
    def test_matches_visibility_frozen_fd(self, setup):
        scene, cam, D, cfg, psi = setup
        cfg64 = replace(cfg, spp=64)
        g_pos = grad_positions(scene, psi, cfg64, D, cam, seed=SEED)
        dist = build_env_distribution(psi.env)
        base = np.array([l.position for l in psi.lights])
        delta = 2e-4
        for j in range(len(psi.lights)):
            for ax in range(3):
                def at(sign):
                    lights = [
                        Light(kind="point",
                              position=base[i] + (sign * delta if i == j else 0.0) * np.eye(3)[ax],
                              intensity=psi.lights[i].intensity)
                        for i in range(len(psi.lights))
                    ]
                    return LightingEnvironment(env=psi.env, lights=tuple(lights))
                e_hi = evaluate_objective(scene, at(+1), cfg64, D, cam, seed=SEED,
                                          env_dist=dist, vis_positions=base)
                e_lo = evaluate_objective(scene, at(-1), cfg64, D, cam, seed=SEED,
                                          env_dist=dist, vis_positions=base)
                fd = (e_hi - e_lo) / (2 * delta)
                assert abs(g_pos[j, ax] - fd) / max(abs(fd), 1e-9) < 5e-2

    def test_receding_light_gradient_vanishes(self, setup):
        scene, cam, D, cfg, _ = setup
        def grad_at(dist_away):
            psi = LightingEnvironment(
                env=np.zeros((8, 16, 3)),
                lights=(Light(kind="point", position=[0.0, 0.0, -dist_away],
                              intensity=[1.0, 1.0, 1.0]),))
            return grad_positions(scene, psi, cfg, D, cam, seed=SEED)
        near = np.abs(grad_at(1.0)).max()
        far = np.abs(grad_at(50.0)).max()
        assert far < near * 1e-3

    def test_requires_point_light(self, setup):
        scene, cam, D, cfg, _ = setup
        psi = LightingEnvironment(env=constant_env([0.3] * 3, rows=8))
        with pytest.raises(ValueError, match="point light"):
            grad_positions(scene, psi, cfg, D, cam)


class TestOverheadLightSanity:
    def test_vertical_gradient_sign(self):
        """Raising a light above a floor reduces irradiance: de/dheight has
        the sign finite differences predict."""
        from relight.synthetic import make_plane

        assets = make_plane(17, 17, depth=2.0, albedo_value=(0.8, 0.8, 0.8))
        scene = TracerScene(build_mesh(assets.pointmap, assets.albedo, 1.2))
        cam = assets.camera
        cfg = FitConfig(k_lights=1, env_rows=8, spp=16, max_depth=1, seed=2, max_iters=1)
        # target: darker than what the light currently produces
        D = ImageBuffer(np.zeros((17, 17, 3)), Role.DIFFUSE)
        psi = LightingEnvironment(
            env=np.zeros((8, 16, 3)),
            lights=(Light(kind="point", position=[0.0, 0.0, 1.0], intensity=[1.0, 1.0, 1.0]),))
        g = grad_positions(scene, psi, cfg, D, cam, seed=2)
        # e = sum(render^2): moving the light AWAY from the plane (negative z)
        # dims the image and reduces e, so de/dz > 0
        assert g[0, 2] > 0
        # lateral gradients vanish by symmetry
        assert abs(g[0, 0]) < 0.05 * abs(g[0, 2])
        assert abs(g[0, 1]) < 0.05 * abs(g[0, 2])
