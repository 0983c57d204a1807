import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from raynbv.field import DensityGrid
from raynbv.mesh import (TriangleMesh, edge_usage, fscore, marching_cubes, nearest_distances, sample_mesh_points)


def ball_grid(res=64, side=2.4, r=0.8):
    grid = DensityGrid(np.zeros((res,) * 3), side)
    grid.values = (np.linalg.norm(grid.positions(), axis=-1) <= r).astype(float)
    return grid


def test_constant_grid_gives_empty_mesh():
    assert marching_cubes(DensityGrid(np.zeros((8, 8, 8)), 1.0), 0.5).is_empty
    assert marching_cubes(DensityGrid(np.ones((8, 8, 8)), 1.0), 0.5).is_empty


def test_ball_radius_and_watertight():
    mesh = marching_cubes(ball_grid(), 0.5)
    diag = math.sqrt(3) * 2.4 / 64
    assert np.all(np.abs(np.linalg.norm(mesh.vertices, axis=1) - 0.8) <= diag)
    assert np.all(edge_usage(mesh) == 2)
    t = mesh.triangles
    assert np.all(t < len(mesh.vertices))
    assert not np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2]))


def test_ball_orientation_outward():
    mesh = marching_cubes(ball_grid(32), 0.5)
    v = mesh.vertices[mesh.triangles]
    normals = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    outward = np.sum(normals * v.mean(axis=1), axis=1) > 0
    # a consistent winding gives one orientation for every face
    assert outward.all() or (~outward).all()


def test_vertices_interpolate_between_straddling_samples():
    rng = np.random.default_rng(0)
    grid = DensityGrid(rng.random((10, 9, 8)), 2.0, center=(0.1, -0.2, 0.3))
    iso = 0.5
    mesh = marching_cubes(grid, iso)
    assert len(mesh) > 0
    assert np.all(edge_usage(mesh) <= 2)
    # every vertex lies on a lattice edge whose two samples straddle iso
    rel = (mesh.vertices - grid.origin) / grid.spacing
    frac = rel - np.floor(rel + 1e-9)
    on_axis = np.sum(np.abs(frac) > 1e-6, axis=1)
    assert np.all(on_axis <= 1)
    for p, r in zip(mesh.vertices[:200], rel[:200]):
        axis = int(np.argmax(np.abs(r - np.round(r))))
        lo = np.round(r).astype(int)
        lo[axis] = int(np.floor(r[axis]))
        hi = lo.copy()
        hi[axis] += 1
        a, b = grid.values[tuple(lo)], grid.values[tuple(hi)]
        assert min(a, b) <= iso <= max(a, b)


def test_mesh_random_field_closed_inside_grid():
    # values forced below iso on the boundary so the surface cannot leave the grid
    rng = np.random.default_rng(3)
    vals = rng.random((12, 12, 12))
    vals[[0, -1], :, :] = vals[:, [0, -1], :] = vals[:, :, [0, -1]] = 0.0
    mesh = marching_cubes(DensityGrid(vals, 1.0), 0.5)
    assert np.all(edge_usage(mesh) == 2)


def test_single_triangle_samples_inside():
    tri = TriangleMesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float), np.array([[0, 1, 2]]))
    pts = sample_mesh_points(tri, 2000, seed=1)
    assert np.all(pts[:, 2] == 0)
    assert np.all(pts[:, :2] >= -1e-12) and np.all(pts[:, 0] + pts[:, 1] <= 1 + 1e-12)
    assert np.array_equal(pts, sample_mesh_points(tri, 2000, seed=1))


def test_empty_mesh_sampling_rejected():
    with pytest.raises(ValueError):
        sample_mesh_points(TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), int)), 10)


def test_area_weighting_binomial():
    # triangle areas 4.5 and 0.5: ratio 9:1
    verts = np.array([[0, 0, 0], [3, 0, 0], [0, 3, 0], [10, 0, 0], [11, 0, 0], [10, 1, 0]], float)
    mesh = TriangleMesh(verts, np.array([[0, 1, 2], [3, 4, 5]]))
    n = 100_000
    pts = sample_mesh_points(mesh, n, seed=2)
    big = int(np.count_nonzero(pts[:, 0] < 5))
    mean, sd = 0.9 * n, math.sqrt(n * 0.9 * 0.1)
    assert abs(big - mean) <= 3 * sd


def brute(q, r):
    diff = q[:, None, :] - r[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2)).min(axis=1)


def test_nearest_distances_examples():
    pts = np.random.default_rng(0).random((50, 3))
    assert np.all(nearest_distances(pts, pts) == 0)
    one = np.array([[0.5, 0.5, 0.5]])
    assert np.array_equal(nearest_distances(pts, one), np.sqrt(np.sum((pts - one) ** 2, axis=1)))
    with pytest.raises(ValueError):
        nearest_distances(pts, np.zeros((0, 3)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_kdtree_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(500, 3)), rng.normal(size=(500, 3))
    assert np.array_equal(nearest_distances(a, b), brute(a, b))


def test_fscore_examples():
    pts = np.random.default_rng(1).random((300, 3))
    rep = fscore(pts, pts, 0.01)
    assert (rep.precision, rep.recall, rep.fscore) == (1.0, 1.0, 1.0)
    hand = fscore(np.array([[0.0, 0, 0], [10, 0, 0]]), np.array([[0.0, 0, 0], [1, 0, 0]]), 0.1)
    assert (hand.precision, hand.recall, hand.fscore) == (0.5, 0.5, 0.5)
    assert hand.n_pred_within == 1 and hand.n_gt_within == 1


def test_fscore_shift_by_two_d():
    # points spaced far apart relative to d, shifted by exactly 2d, have no neighbour within d
    grid = np.stack(np.meshgrid(*[np.arange(5.0)] * 3, indexing="ij"), -1).reshape(-1, 3)
    d = 0.1
    assert fscore(grid + np.array([2 * d, 0, 0]), grid, d).fscore == 0.0


def test_fscore_edge_cases():
    gt = np.random.default_rng(2).random((20, 3))
    empty = fscore(np.zeros((0, 3)), gt, 0.1)
    assert (empty.precision, empty.recall, empty.fscore) == (0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        fscore(gt, np.zeros((0, 3)), 0.1)
    with pytest.raises(ValueError):
        fscore(gt, gt, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 0.5))
def test_fscore_symmetry_and_monotonicity(seed, d):
    rng = np.random.default_rng(seed)
    a, b = rng.random((80, 3)), rng.random((60, 3))
    ab, ba = fscore(a, b, d), fscore(b, a, d)
    assert ab.precision == ba.recall and ab.recall == ba.precision and ab.fscore == ba.fscore
    assert fscore(a, b, d * 1.5).fscore >= ab.fscore
    assert 0.0 <= ab.fscore <= 1.0
