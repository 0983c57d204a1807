import numpy as np
import pytest

from raynbv.geometry import CameraIntrinsics, look_at
from raynbv.mesh import edge_usage
from raynbv.scenes import (LIGHT_DIR, PRESET_NAMES, Primitive, SdfScene, ground_truth_mesh, preset_scene,
                           render_ground_truth, sample_surface_points, sdf_eval)

UNIT = SdfScene((Primitive("sphere", (0, 0, 0), (1.0,), (1.0, 0.0, 0.0)),), half_extent=1.0)


def test_sphere_sdf_values():
    assert sdf_eval(UNIT, (0.0, 0.0, 0.0)) == -1.0
    assert sdf_eval(UNIT, (2.0, 0.0, 0.0)) == 1.0


def test_union_is_min_and_monotone():
    a = Primitive("sphere", (0.3, 0, 0), (0.4,), (0.5, 0.5, 0.5))
    b = Primitive("box", (-0.3, 0.1, 0), (0.2, 0.3, 0.1), (0.5, 0.5, 0.5))
    pts = np.random.default_rng(0).uniform(-1, 1, (500, 3))
    only_a = SdfScene((a,))
    both = only_a.with_primitive(b)
    assert np.array_equal(sdf_eval(both, pts), np.minimum(a.sdf(pts), b.sdf(pts)))
    assert np.all(sdf_eval(both, pts) <= sdf_eval(only_a, pts))


@pytest.mark.parametrize("shape,size", [("box", (0.3, 0.2, 0.1)), ("torus", (0.4, 0.1)),
                                        ("capped_cylinder", (0.2, 0.3))])
def test_primitive_sdf_signs(shape, size):
    prim = Primitive(shape, (0, 0, 0), size, (0.5, 0.5, 0.5))
    assert prim.sdf(np.array([[0.0, 0.0, 0.9]]))[0] > 0
    inside = np.array([[size[0], 0.0, 0.0]]) if shape == "torus" else np.zeros((1, 3))
    assert prim.sdf(inside)[0] < 0


def test_scene_bounds_and_albedo_validated():
    with pytest.raises(ValueError):
        SdfScene((Primitive("sphere", (0.8, 0, 0), (0.5,), (1, 1, 1)),))
    with pytest.raises(ValueError):
        Primitive("sphere", (0, 0, 0), (0.5,), (1.2, 0, 0))
    with pytest.raises(ValueError):
        Primitive("cone", (0, 0, 0), (0.5,), (1, 1, 1))


def test_empty_scene_renders_background():
    img = render_ground_truth(SdfScene(), CameraIntrinsics(20, 20), look_at((2, 0, 1), (0, 0, 0)), (0.2, 0.3, 0.4))
    assert np.all(img == np.array([0.2, 0.3, 0.4]))


def test_red_sphere_center_pixel():
    cam = CameraIntrinsics(21, 21)
    img = render_ground_truth(UNIT, cam, look_at((0, 0, 3), (0, 0, 0)))
    c = img[10, 10]
    assert c[0] > 0.5 and c[1] == c[2] == 0.0
    # world light: normal (0,0,1) gives albedo * (0.5 + 0.5 * light_z)
    assert c[0] == pytest.approx(0.5 + 0.5 * LIGHT_DIR[2], abs=1e-3)


def test_render_deterministic():
    scene = preset_scene("loader")
    cam = CameraIntrinsics(30, 30)
    pose = look_at((2.0, 1.0, 1.5), (0, 0, 0))
    assert np.array_equal(render_ground_truth(scene, cam, pose), render_ground_truth(scene, cam, pose))


def test_multi_view_color_consistency():
    scene = preset_scene("snowman")
    # the sphere's top point (0, 0, 0.7) is seen from two different overhead-ish poses
    pa, pb = look_at((0.5, 0.0, 2.5), (0, 0, 0.7)), look_at((-0.3, 0.4, 2.4), (0, 0, 0.7))
    ca = render_ground_truth(scene, CameraIntrinsics(41, 41), pa)[20, 20]
    cb = render_ground_truth(scene, CameraIntrinsics(41, 41), pb)[20, 20]
    assert np.allclose(ca, cb, atol=1e-6)


def test_surface_points_on_unit_sphere():
    pts = sample_surface_points(UNIT, 1000, seed=5)
    assert pts.shape == (1000, 3)
    assert np.all(np.abs(np.linalg.norm(pts, axis=1) - 1.0) <= 1e-4)
    assert np.array_equal(pts, sample_surface_points(UNIT, 1000, seed=5))


def test_surface_points_uniform_on_sphere():
    n = 100_000
    pts = sample_surface_points(UNIT, n, seed=1)
    # uniform on the sphere: each coordinate has mean 0 and variance 1/3, so 5 sigma ~ 0.009
    assert np.all(np.abs(pts.mean(axis=0)) < 5 * np.sqrt(1 / 3 / n))
    assert np.all(np.abs(pts.mean(axis=0)) < 0.1)
    # octant counts within 5 sigma of the binomial n/8
    octant = (pts > 0) @ np.array([1, 2, 4])
    counts = np.bincount(octant, minlength=8)
    sigma = np.sqrt(n * (1 / 8) * (7 / 8))
    assert np.all(np.abs(counts - n / 8) < 5 * sigma)


def test_surface_points_on_presets_satisfy_sdf():
    for name in PRESET_NAMES:
        scene = preset_scene(name)
        pts = sample_surface_points(scene, 2000, seed=2)
        assert np.all(np.abs(sdf_eval(scene, pts)) < 1e-4)


def test_surface_points_errors():
    with pytest.raises(ValueError):
        sample_surface_points(SdfScene(), 10)
    with pytest.raises(ValueError):
        sample_surface_points(UNIT, 0)


def test_ground_truth_mesh_sphere_radius():
    scene = SdfScene((Primitive("sphere", (0, 0, 0), (0.8,), (0.5, 0.5, 0.5)),))
    mesh = ground_truth_mesh(scene, 128, 2.4)
    diag = np.sqrt(3) * 2.4 / 128
    assert len(mesh.vertices) > 0
    assert np.all(np.abs(np.linalg.norm(mesh.vertices, axis=1) - 0.8) <= diag)
    assert np.all(edge_usage(mesh) == 2)


def test_ground_truth_mesh_empty_and_presets():
    assert ground_truth_mesh(SdfScene(), 16).is_empty
    for name in PRESET_NAMES:
        assert len(ground_truth_mesh(preset_scene(name), 32).vertices) > 0


def test_unknown_preset():
    with pytest.raises(KeyError):
        preset_scene("lego")
