import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from raynbv.field import RadianceField, TrainConfig
from raynbv.geometry import CameraIntrinsics, look_at
from raynbv.uncertainty import EntropyMap, EntropyOptions, entropy_map, ray_entropies, ray_entropy, view_mean_entropy


def test_closed_forms():
    assert ray_entropy(np.full(64, 0.01)) == pytest.approx(math.log(64), abs=1e-12)
    assert ray_entropy(np.eye(64)[3]) == 0.0
    w = np.zeros(64)
    w[[2, 9]] = 0.4
    assert ray_entropy(w) == pytest.approx(math.log(2), abs=1e-12)
    assert ray_entropy(np.zeros(64)) == 0.0


def test_background_modes():
    w = np.full(16, 0.001)
    assert ray_entropy(w, EntropyOptions(background_mode="zero-entropy")) == 0.0
    assert ray_entropy(w, EntropyOptions(background_mode="max-entropy")) == pytest.approx(math.log(16))
    assert math.isnan(ray_entropy(w, EntropyOptions(background_mode="exclude")))
    # above the floor the mode does not matter
    assert ray_entropy(w, EntropyOptions(bg_opacity=0.0)) == pytest.approx(math.log(16))


def test_negative_weight_rejected():
    with pytest.raises(ValueError):
        ray_entropy([0.5, -0.1, 0.2])


def test_options_validated():
    with pytest.raises(ValueError):
        EntropyOptions(eps=0.0)
    with pytest.raises(ValueError):
        EntropyOptions(bg_opacity=1.5)
    with pytest.raises(ValueError):
        EntropyOptions(mean_mode="median")


weights = arrays(np.float64, st.integers(2, 128), elements=st.floats(0.0, 1.0))


@settings(max_examples=200, deadline=None)
@given(weights)
def test_entropy_bounds(w):
    h = ray_entropy(w)
    assert 0.0 <= h <= math.log(len(w))


@settings(max_examples=200, deadline=None)
@given(weights, st.floats(0.0, 1.0))
def test_scale_invariance(w, u):
    if w.sum() < 0.1:
        w = w.copy()
        w[0] += 0.1
    k = math.exp(math.log(0.1 / w.sum()) * (1 - u) + math.log(1e3) * u)
    if (k * w).sum() < 0.1:
        return  # rounding put k * sum(w) just under the background floor
    h, hk = ray_entropy(w), ray_entropy(k * w)
    # near-one-hot weights give h ~ 1e-6; ln(p) of p ~ 1 then carries one ulp of absolute error
    assert abs(h - hk) <= 1e-12 * h + 8 * np.finfo(float).eps


@settings(max_examples=200, deadline=None)
@given(weights, st.floats(0.0, 1.0))
def test_moving_mass_to_the_peak_never_raises_entropy(w, frac):
    # a transfer from a lower bin into the largest bin majorizes the original distribution
    if w.sum() < 0.1 or np.count_nonzero(w) < 2:
        return
    top = int(np.argmax(w))
    low = int(np.argmin(np.where(w > 0, w, np.inf)))
    if low == top:
        return
    moved = w.copy()
    amount = frac * w[low]
    moved[low] -= amount
    moved[top] += amount
    assert ray_entropy(moved) <= ray_entropy(w) + 1e-12


def test_batch_matches_single():
    rng = np.random.default_rng(0)
    w = rng.random((20, 32)) * (rng.random((20, 32)) < 0.3)
    batch = ray_entropies(w)
    assert np.array_equal(batch, [ray_entropy(r) for r in w])


def test_zero_density_field_map():
    f = RadianceField(resolution=4, init_density=-60.0)
    m = entropy_map(f, CameraIntrinsics(100, 100), look_at((2.0, 1.0, 1.0), (0, 0, 0)), TrainConfig(), 4)
    assert m.entropy.shape == (25, 25) and m.opacity.shape == (25, 25)
    assert np.all(m.entropy == 0.0)
    assert view_mean_entropy(m) == 0.0


def test_block_center_more_certain_than_silhouette():
    f = RadianceField(resolution=33, init_density=-30.0)
    grid = np.linspace(-1, 1, 33)
    inside = np.all(np.abs(np.stack(np.meshgrid(grid, grid, grid, indexing="ij"), -1)) <= 0.4, axis=-1)
    f.params[inside, 0] = 60.0
    opts = EntropyOptions(bg_opacity=0.01)
    m = entropy_map(f, CameraIntrinsics(64, 64), look_at((0.0, 0.0, 2.8), (0, 0, 0)), TrainConfig(), 1, opts)
    row_h, row_op = m.entropy[32], m.opacity[32]
    hit = np.flatnonzero(row_op >= opts.bg_opacity)
    assert row_op[32] > 0.99
    # outermost hit pixels graze the block's edge
    assert row_h[32] < row_h[hit[0]] and row_h[32] < row_h[hit[-1]]


def test_view_mean_modes():
    h = np.array([[2.0, 2.0], [0.0, 0.0]])
    op = np.array([[1.0, 1.0], [0.0, 0.0]])
    m = EntropyMap(h, op, 64)
    assert view_mean_entropy(m, EntropyOptions(mean_mode="all-pixels")) == 1.0
    assert view_mean_entropy(m, EntropyOptions(mean_mode="opacity-masked")) == 2.0
    const = EntropyMap(np.full((3, 3), 0.7), np.ones((3, 3)), 64)
    for mode in ("all-pixels", "opacity-masked"):
        assert view_mean_entropy(const, EntropyOptions(mean_mode=mode)) == pytest.approx(0.7)
    none = EntropyMap(np.zeros((2, 2)), np.zeros((2, 2)), 64)
    assert view_mean_entropy(none, EntropyOptions(mean_mode="opacity-masked")) == 0.0
    with pytest.raises(ValueError):
        view_mean_entropy(EntropyMap(np.zeros((0, 0)), np.zeros((0, 0)), 64))


def test_normalized_map():
    m = EntropyMap(np.array([[math.log(64), np.nan]]), np.ones((1, 2)), 64)
    assert np.allclose(m.normalized(), [[1.0, 0.0]])
