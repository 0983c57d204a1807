"""Compiled per-ray kernels for the voxel field: batched rendering and the fused loss gradient.

Kernels take the grid flattened to ``params[lin, ch]`` where
``lin = (ix * ny + iy) * nz + iz``; channel 0 is the raw density and 1..3 the
raw color. Lattice points span ``lo..hi`` inclusively.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, error_model="numpy", inline="always")
def _softplus(x):
    if x > 30.0:
        return x
    return math.log1p(math.exp(x))


@njit(cache=True, error_model="numpy", inline="always")
def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True, error_model="numpy", inline="always")
def _snap(u):
    r = np.floor(u + 0.5)
    if abs(u - r) < 1e-12:
        return r
    return u


@njit(cache=True, error_model="numpy")
def _corners(shape, lo, hi, px, py, pz, lin, wts):
    """Fill the 8 trilinear corner indices/weights; returns False outside the bounds."""
    nx, ny, nz = shape[0], shape[1], shape[2]
    if px < lo[0] or py < lo[1] or pz < lo[2] or px > hi[0] or py > hi[1] or pz > hi[2]:
        return False
    u = _snap((px - lo[0]) / (hi[0] - lo[0]) * (nx - 1))
    v = _snap((py - lo[1]) / (hi[1] - lo[1]) * (ny - 1))
    w = _snap((pz - lo[2]) / (hi[2] - lo[2]) * (nz - 1))
    i0 = min(int(u), nx - 2)
    j0 = min(int(v), ny - 2)
    k0 = min(int(w), nz - 2)
    fu, fv, fw = u - i0, v - j0, w - k0
    gu, gv, gw = 1.0 - fu, 1.0 - fv, 1.0 - fw
    base = (i0 * ny + j0) * nz + k0
    sx, sy = ny * nz, nz
    lin[0] = base
    lin[1] = base + 1
    lin[2] = base + sy
    lin[3] = base + sy + 1
    lin[4] = base + sx
    lin[5] = base + sx + 1
    lin[6] = base + sx + sy
    lin[7] = base + sx + sy + 1
    wts[0] = gu * gv * gw
    wts[1] = gu * gv * fw
    wts[2] = gu * fv * gw
    wts[3] = gu * fv * fw
    wts[4] = fu * gv * gw
    wts[5] = fu * gv * fw
    wts[6] = fu * fv * gw
    wts[7] = fu * fv * fw
    return True


@njit(cache=True, error_model="numpy", inline="always")
def _interp4(params, lin, wts, out):
    for ch in range(4):
        out[ch] = 0.0
    for n in range(8):
        a = wts[n]
        row = lin[n]
        for ch in range(4):
            out[ch] += a * params[row, ch]


@njit(cache=True, error_model="numpy")
def query_points(params, shape, lo, hi, points):
    m = points.shape[0]
    sigma = np.zeros(m)
    color = np.full((m, 3), 0.5)
    lin = np.empty(8, dtype=np.int64)
    wts = np.empty(8)
    raw = np.empty(4)
    for p in range(m):
        if not _corners(shape, lo, hi, points[p, 0], points[p, 1], points[p, 2], lin, wts):
            continue
        _interp4(params, lin, wts, raw)
        sigma[p] = _softplus(raw[0])
        for c in range(3):
            color[p, c] = _sigmoid(raw[c + 1])
    return sigma, color


@njit(cache=True, error_model="numpy")
def render_batch(params, shape, lo, hi, origins, dirs, t, delta, bg, weights_out):
    """Composite every ray; writes per-sample weights into ``weights_out``."""
    r_count, n_samp = t.shape
    rgb = np.empty((r_count, 3))
    opacity = np.empty(r_count)
    lin = np.empty(8, dtype=np.int64)
    wts = np.empty(8)
    raw = np.empty(4)
    for r in range(r_count):
        trans = 1.0
        acc0 = 0.0
        acc1 = 0.0
        acc2 = 0.0
        for i in range(n_samp):
            px = origins[r, 0] + t[r, i] * dirs[r, 0]
            py = origins[r, 1] + t[r, i] * dirs[r, 1]
            pz = origins[r, 2] + t[r, i] * dirs[r, 2]
            if not _corners(shape, lo, hi, px, py, pz, lin, wts):
                weights_out[r, i] = 0.0
                continue
            _interp4(params, lin, wts, raw)
            p = math.exp(-_softplus(raw[0]) * delta[r, i])
            w = trans * (1.0 - p)
            weights_out[r, i] = w
            acc0 += w * _sigmoid(raw[1])
            acc1 += w * _sigmoid(raw[2])
            acc2 += w * _sigmoid(raw[3])
            trans *= p
        rgb[r, 0] = acc0 + trans * bg[0]
        rgb[r, 1] = acc1 + trans * bg[1]
        rgb[r, 2] = acc2 + trans * bg[2]
        opacity[r] = 1.0 - trans
    return rgb, opacity


@njit(cache=True, error_model="numpy")
def loss_grad_batch(params, shape, lo, hi, origins, dirs, t, delta, bg, gt, grad):
    """Mean squared error over rays x 3 channels; accumulates d(mse)/d(params) into ``grad``.

    Rays are processed in order, so the reduction is deterministic.
    """
    r_count, n_samp = t.shape
    scale = 2.0 / (3.0 * r_count)
    sq = 0.0
    lin = np.empty((n_samp, 8), dtype=np.int64)
    wts = np.empty((n_samp, 8))
    inside = np.empty(n_samp, dtype=np.bool_)
    dsig = np.empty(n_samp)
    col = np.empty((n_samp, 3))
    w = np.empty(n_samp)
    trans_next = np.empty(n_samp)
    raw = np.empty(4)
    for r in range(r_count):
        trans = 1.0
        c0 = 0.0
        c1 = 0.0
        c2 = 0.0
        for i in range(n_samp):
            px = origins[r, 0] + t[r, i] * dirs[r, 0]
            py = origins[r, 1] + t[r, i] * dirs[r, 1]
            pz = origins[r, 2] + t[r, i] * dirs[r, 2]
            inside[i] = _corners(shape, lo, hi, px, py, pz, lin[i], wts[i])
            if inside[i]:
                _interp4(params, lin[i], wts[i], raw)
                sig = _softplus(raw[0])
                dsig[i] = _sigmoid(raw[0])
                for c in range(3):
                    col[i, c] = _sigmoid(raw[c + 1])
                p = math.exp(-sig * delta[r, i])
            else:
                for c in range(3):
                    col[i, c] = 0.5
                p = 1.0
            w[i] = trans * (1.0 - p)
            trans *= p
            trans_next[i] = trans
            c0 += w[i] * col[i, 0]
            c1 += w[i] * col[i, 1]
            c2 += w[i] * col[i, 2]
        d0 = c0 + trans * bg[0] - gt[r, 0]
        d1 = c1 + trans * bg[1] - gt[r, 1]
        d2 = c2 + trans * bg[2] - gt[r, 2]
        sq += d0 * d0 + d1 * d1 + d2 * d2
        g0, g1, g2 = scale * d0, scale * d1, scale * d2
        # suffix = sum_{j>i} w_j (g . c_j) + T_{N+1} (g . bg)
        suffix = trans * (g0 * bg[0] + g1 * bg[1] + g2 * bg[2])
        for i in range(n_samp - 1, -1, -1):
            k0, k1, k2 = col[i, 0], col[i, 1], col[i, 2]
            gc = g0 * k0 + g1 * k1 + g2 * k2
            if inside[i]:
                d_x = delta[r, i] * (trans_next[i] * gc - suffix) * dsig[i]
                e0 = w[i] * g0 * k0 * (1.0 - k0)
                e1 = w[i] * g1 * k1 * (1.0 - k1)
                e2 = w[i] * g2 * k2 * (1.0 - k2)
                for n in range(8):
                    a = wts[i, n]
                    row = lin[i, n]
                    grad[row, 0] += a * d_x
                    grad[row, 1] += a * e0
                    grad[row, 2] += a * e1
                    grad[row, 3] += a * e2
            suffix += w[i] * gc
    return sq / (3.0 * r_count)


@njit(cache=True, error_model="numpy")
def adam_step(params, grad, m, v, lr, beta1, beta2, eps, step):
    """Bias-corrected Adam update on flat arrays, in place."""
    bc1 = 1.0 - beta1 ** step
    bc2 = 1.0 - beta2 ** step
    for i in range(params.size):
        gi = grad[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * gi
        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi
        params[i] -= lr * (m[i] / bc1) / (math.sqrt(v[i] / bc2) + eps)
