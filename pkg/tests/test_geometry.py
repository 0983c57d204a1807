import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from raynbv.geometry import (CameraIntrinsics, camera_rays, cluster_regions, generate_view_space, look_at,
                             read_view_space, spherical_distance, write_view_space)


def test_default_view_space_has_150_views():
    vs = generate_view_space()
    assert len(vs.views) == 150
    assert vs.middle_circle == 2
    assert len({v.id for v in vs.views}) == 150


def test_single_pose_looks_at_origin():
    vs = generate_view_space(1, 1, [math.radians(45)], 1.0)
    pose = vs.views[0].pose
    assert np.linalg.norm(pose.position) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(pose.forward, -pose.position, atol=1e-12)


def test_positions_on_radius_and_rotations_orthonormal():
    vs = generate_view_space(radius=2.3, target=(0.1, -0.2, 0.3))
    for v in vs.views:
        assert abs(np.linalg.norm(v.pose.position - vs.target) - 2.3) < 1e-9
        r = v.pose.rotation
        assert np.allclose(r.T @ r, np.eye(3), atol=1e-9)
        assert abs(np.linalg.det(r) - 1.0) < 1e-9
        to_target = (vs.target - v.pose.position) / 2.3
        assert math.acos(min(1.0, float(np.dot(v.pose.forward, to_target)))) < 1e-7


def test_azimuths_evenly_spaced():
    vs = generate_view_space()
    az = np.array([vs.view(i).azimuth for i in vs.circle_ids(3)])
    assert az[0] == 0.0
    assert np.allclose(np.diff(az), 2 * math.pi / 30)


@pytest.mark.parametrize("elev", [[], [0.5, 0.4, 0.6], [0.1, 0.2, 1.7]])
def test_bad_elevations_rejected(elev):
    with pytest.raises(ValueError):
        generate_view_space(len(elev), 10, elev)


def test_nonpositive_radius_rejected():
    with pytest.raises(ValueError):
        generate_view_space(radius=0.0)


def test_look_at_pole_falls_back():
    pose = look_at((0, 0, 2), (0, 0, 0))
    assert np.allclose(pose.forward, (0, 0, -1))
    assert np.allclose(pose.rotation.T @ pose.rotation, np.eye(3), atol=1e-12)


def test_twelve_sections_of_ten():
    vs = generate_view_space()
    cl = cluster_regions(vs, 6)
    assert len(cl.sections) == 12
    assert all(len(m) == 10 for _, m in cl.sections)
    assert set(cl.excluded) == set(vs.circle_ids(2))
    # lower half first
    assert all(vs.view(v).circle_index < 2 for _, m in cl.sections[:6] for v in m)


def test_small_clustering():
    vs = generate_view_space(3, 6, [0.3, 0.6, 0.9])
    cl = cluster_regions(vs, 3)
    assert [len(m) for _, m in cl.sections] == [2] * 6


def test_clustering_errors():
    with pytest.raises(ValueError):
        cluster_regions(generate_view_space(2, 6, [0.3, 0.6]), 3)
    with pytest.raises(ValueError):
        cluster_regions(generate_view_space(), 7)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 7), st.sampled_from([(12, 4), (12, 3), (8, 2), (6, 6), (10, 1)]))
def test_partition_property(n_circles, per_bins):
    per, bins = per_bins
    elev = np.linspace(0.1, 1.4, n_circles)
    vs = generate_view_space(n_circles, per, elev)
    cl = cluster_regions(vs, bins)
    seen = [v for _, m in cl.sections for v in m]
    assert len(seen) == len(set(seen))
    expected = {v.id for v in vs.views if v.circle_index != vs.middle_circle}
    assert set(seen) == expected


def test_camera_rays_count_and_center():
    cam = CameraIntrinsics(100, 100)
    pose = look_at((2, 1, 1), (0, 0, 0))
    rays = camera_rays(cam, pose, 4)
    assert len(rays) == 625
    assert np.allclose(np.linalg.norm(rays.directions, axis=1), 1.0, atol=1e-9)
    assert np.allclose(rays.origins, pose.position)
    # with an odd pixel count a pixel center sits on the principal axis
    full = camera_rays(CameraIntrinsics(5, 5), pose, 1)
    expect = -pose.position / np.linalg.norm(pose.position)
    assert np.allclose(full.directions[12], expect, atol=1e-12)


def test_camera_rays_bad_downsample():
    with pytest.raises(ValueError):
        camera_rays(CameraIntrinsics(100, 100), look_at((2, 0, 0), (0, 0, 0)), 3)


def test_spherical_distance_examples():
    r = 2.0
    p = lambda e, a: look_at([r * math.cos(e) * math.cos(a), r * math.cos(e) * math.sin(a), r * math.sin(e)], (0, 0, 0))
    a, b = p(math.pi / 4, 0.0), p(math.pi / 4, math.pi)
    assert spherical_distance(a, a) == 0.0
    assert spherical_distance(a, b) == pytest.approx(math.pi / 2, abs=1e-12)
    assert spherical_distance(p(0.0, 0.3), look_at((0, 0, r), (0, 0, 0))) == pytest.approx(math.pi / 2, abs=1e-12)
    assert spherical_distance(a, b) == spherical_distance(b, a)


def test_spherical_distance_degenerate():
    a = look_at((1, 0, 0), (0, 0, 0))
    with pytest.raises(ValueError):
        spherical_distance(a, a, target=(1, 0, 0))


def test_view_space_file_round_trip(tmp_path):
    vs = generate_view_space()
    path = tmp_path / "views.txt"
    write_view_space(vs, path)
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    assert len(lines) == 150
    back = read_view_space(path)
    assert len(back.views) == 150
    for a, b in zip(vs.views, back.views):
        assert a.id == b.id and a.circle_index == b.circle_index
        assert np.allclose(a.pose.position, b.pose.position, atol=1e-8)
        assert np.allclose(a.pose.rotation, b.pose.rotation, atol=1e-8)
