import pytest

from relight.renderer import TracerScene
from relight.scene import build_mesh, normalize_scene
from relight.synthetic import make_plane, make_room


@pytest.fixture(scope="session")
def room_assets():
    return make_room(96, 72)


@pytest.fixture(scope="session")
def room_scene(room_assets):
    """Normalized room mesh packed for tracing (shared; treat as read-only)."""
    mesh = build_mesh(room_assets.pointmap, room_assets.albedo, 1.2)
    mesh, transform = normalize_scene(mesh)
    return TracerScene(mesh), transform, room_assets.camera


@pytest.fixture(scope="session")
def plane_assets():
    return make_plane(33, 33)


def plane_scene(albedo_value=(1.0, 1.0, 1.0), n=33, depth=2.0):
    assets = make_plane(n, n, depth=depth, albedo_value=albedo_value)
    mesh = build_mesh(assets.pointmap, assets.albedo, 1.2)
    return TracerScene(mesh), assets.camera
