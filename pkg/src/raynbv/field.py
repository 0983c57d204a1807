"""Voxel-grid radiance field, quadrature volume renderer, analytic gradients and training."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace
import math
from pathlib import Path
import struct
import time

import numpy as np

from . import _kernels
from .geometry import CameraIntrinsics, Pose, Rays, camera_rays

CKPT_MAGIC = b"RNBVGRD1"


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x)))


@dataclass
class TrainConfig:
    steps: int = 3000
    rays_per_batch: int = 1024
    lr: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    n_samples: int = 64
    t_near: float = 1.0
    t_far: float = 4.6
    background: tuple = (1.0, 1.0, 1.0)
    stratified: bool = True
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        if not self.t_near < self.t_far:
            raise ValueError("t_near must be < t_far")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.rays_per_batch < 1:
            raise ValueError("rays_per_batch must be >= 1")


@dataclass
class TrainReport:
    steps: list = dc_field(default_factory=list)
    mse: list = dc_field(default_factory=list)
    psnr: list = dc_field(default_factory=list)
    final_mse: float = float("nan")
    final_psnr: float = float("nan")
    seconds: float = 0.0


def psnr_from_mse(mse: float) -> float:
    return float("inf") if mse <= 0 else -10.0 * math.log10(mse)


@dataclass
class RayTrace:
    t: np.ndarray
    delta: np.ndarray
    sigma: np.ndarray
    color: np.ndarray
    weights: np.ndarray
    transmittance: np.ndarray  # T_1..T_{N+1}
    rgb: np.ndarray
    opacity: float


class RadianceField:
    """Dense grid of raw density/color with trilinear interpolation.

    ``params[ix, iy, iz]`` holds ``(raw_density, raw_r, raw_g, raw_b)`` at the
    lattice point ``lo + (ix, iy, iz) / (res - 1) * (hi - lo)``. The default raw
    density -6 (sigma ~ 0.0025) starts empty space almost transparent.
    """

    def __init__(self, lo=(-1.0, -1.0, -1.0), hi=(1.0, 1.0, 1.0), resolution=(32, 32, 32),
                 init_density=-6.0, init_color=0.0):
        self.lo = np.asarray(lo, dtype=np.float64).reshape(3)
        self.hi = np.asarray(hi, dtype=np.float64).reshape(3)
        if np.any(self.hi <= self.lo):
            raise ValueError("field bounds must have hi > lo")
        if isinstance(resolution, int):
            resolution = (resolution,) * 3
        self.resolution = tuple(int(r) for r in resolution)
        if min(self.resolution) < 2:
            raise ValueError("grid resolution must be >= 2 per axis")
        self.params = np.empty(self.resolution + (4,), dtype=np.float64)
        self.params[..., 0] = init_density
        self.params[..., 1:] = init_color

    @property
    def raw_density(self):
        return self.params[..., 0]

    @property
    def raw_color(self):
        return self.params[..., 1:]

    def copy(self) -> "RadianceField":
        other = RadianceField.__new__(RadianceField)
        other.lo, other.hi, other.resolution = self.lo.copy(), self.hi.copy(), self.resolution
        other.params = self.params.copy()
        return other

    def lattice_point(self, i, j, k) -> np.ndarray:
        n = np.array(self.resolution) - 1
        return self.lo + np.array([i, j, k]) / n * (self.hi - self.lo)

    def query(self, points) -> tuple[np.ndarray, np.ndarray]:
        points = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        return _kernels.query_points(self.flat, self.shape_arr, self.lo, self.hi, points)

    @property
    def flat(self) -> np.ndarray:
        return self.params.reshape(-1, 4)

    @property
    def shape_arr(self) -> np.ndarray:
        return np.array(self.resolution, dtype=np.int64)


def field_query(f: RadianceField, p) -> tuple[float, np.ndarray]:
    sigma, color = f.query(p)
    return float(sigma[0]), color[0]


def sample_depths(cfg: TrainConfig, n_rays: int, rng=None):
    """Bin-center (or jittered) sample depths and spacings, shape (n_rays, N).

    Spacing is the gap to the next sample; the last sample gets one bin width.
    """
    n = cfg.n_samples
    width = (cfg.t_far - cfg.t_near) / n
    offsets = np.full((n_rays, n), 0.5)
    if cfg.stratified and rng is not None:
        offsets = rng.random((n_rays, n))
    t = cfg.t_near + (np.arange(n) + offsets) * width
    delta = np.empty_like(t)
    delta[:, :-1] = t[:, 1:] - t[:, :-1]
    delta[:, -1] = width
    return t, delta


def composite(sigma, delta, color, background):
    """Quadrature compositing of one ray; returns (weights, T_1..T_{N+1}, rgb)."""
    sigma = np.asarray(sigma, dtype=np.float64)
    tau = sigma * np.asarray(delta, dtype=np.float64)
    trans = np.exp(-np.concatenate([[0.0], np.cumsum(tau)]))
    weights = trans[:-1] * -np.expm1(-tau)
    rgb = weights @ np.asarray(color) + trans[-1] * np.asarray(background, dtype=np.float64)
    return weights, trans, rgb


def render_ray(f: RadianceField, origin, direction, cfg: TrainConfig, rng=None) -> RayTrace:
    t, delta = sample_depths(cfg, 1, rng)
    t, delta = t[0], delta[0]
    pts = np.asarray(origin)[None, :] + t[:, None] * np.asarray(direction)[None, :]
    sigma, color = f.query(pts)
    weights, trans, rgb = composite(sigma, delta, color, cfg.background)
    return RayTrace(t, delta, sigma, color, weights, trans, rgb, float(weights.sum()))


def render_rays(f: RadianceField, rays: Rays, cfg: TrainConfig, rng=None, chunk: int = 65536):
    """Batched render; returns (rgb (R, 3), opacity (R,), weights (R, N)).

    Chunking only bounds memory; the output does not depend on it.
    """
    n = len(rays)
    rgb = np.empty((n, 3))
    opacity = np.empty(n)
    weights = np.empty((n, cfg.n_samples))
    bg = np.asarray(cfg.background, dtype=np.float64)
    for s in range(0, n, chunk):
        e = min(n, s + chunk)
        t, delta = sample_depths(cfg, e - s, rng)
        rgb[s:e], opacity[s:e] = _kernels.render_batch(
            f.flat, f.shape_arr, f.lo, f.hi, np.ascontiguousarray(rays.origins[s:e]),
            np.ascontiguousarray(rays.directions[s:e]), t, delta, bg, weights[s:e],
        )
    return rgb, opacity, weights


def render_image(f: RadianceField, cam: CameraIntrinsics, pose: Pose, cfg: TrainConfig, downsample: int = 1):
    rays = camera_rays(cam, pose, downsample)
    rgb, _, _ = render_rays(f, rays, replace(cfg, stratified=False))
    return rgb.reshape(cam.height // downsample, cam.width // downsample, 3)


def loss_and_gradients(f: RadianceField, rays: Rays, gt, cfg: TrainConfig, rng=None):
    """Photometric MSE over rays x channels and its gradient w.r.t. ``f.params``."""
    gt = np.ascontiguousarray(np.asarray(gt, dtype=np.float64).reshape(-1, 3))
    if len(rays) != gt.shape[0]:
        raise ValueError(f"{len(rays)} rays but {gt.shape[0]} target colors")
    if len(rays) == 0:
        raise ValueError("need at least one ray")
    t, delta = sample_depths(cfg, len(rays), rng)
    grad = np.zeros_like(f.params)
    mse = _kernels.loss_grad_batch(
        f.flat, f.shape_arr, f.lo, f.hi, np.ascontiguousarray(rays.origins), np.ascontiguousarray(rays.directions),
        t, delta, np.asarray(cfg.background, dtype=np.float64), gt, grad.reshape(-1, 4),
    )
    return float(mse), grad


class Adam:
    def __init__(self, shape, lr, beta1=0.9, beta2=0.99, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, params, grad):
        """In-place update of the contiguous array ``params``."""
        self.t += 1
        _kernels.adam_step(params.reshape(-1), grad.reshape(-1), self.m.reshape(-1), self.v.reshape(-1),
                           self.lr, self.beta1, self.beta2, self.eps, self.t)


def gather_training_rays(cam: CameraIntrinsics, images) -> tuple[Rays, np.ndarray]:
    """Stack all pixel rays and colors of ``[(pose, image), ...]`` at full resolution."""
    origins, dirs, colors = [], [], []
    for pose, img in images:
        img = np.asarray(img, dtype=np.float64)
        if img.shape != (cam.height, cam.width, 3):
            raise ValueError(f"image shape {img.shape} does not match camera {cam.width}x{cam.height}")
        rays = camera_rays(cam, pose, 1)
        origins.append(rays.origins)
        dirs.append(rays.directions)
        colors.append(img.reshape(-1, 3))
    return Rays(np.concatenate(origins), np.concatenate(dirs)), np.concatenate(colors)


def evaluate_mse(f: RadianceField, rays: Rays, gt, cfg: TrainConfig) -> float:
    rgb, _, _ = render_rays(f, rays, replace(cfg, stratified=False))
    return float(np.mean((rgb - gt) ** 2))


def train(f: RadianceField, cam: CameraIntrinsics, images, cfg: TrainConfig) -> TrainReport:
    """Adam on random ray batches drawn across all images; updates ``f`` in place.

    Passing an already-trained field continues from its parameters (warm start).
    """
    if len(images) == 0:
        raise ValueError("training needs at least one image")
    start = time.perf_counter()
    rays, colors = gather_training_rays(cam, images)
    report = TrainReport()
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(f.params.shape, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    for step in range(1, cfg.steps + 1):
        sel = rng.integers(0, len(rays), size=cfg.rays_per_batch)
        mse, grad = loss_and_gradients(f, rays[sel], colors[sel], cfg, rng)
        opt.step(f.params, grad)
        if step % cfg.log_every == 0 or step == 1 or step == cfg.steps:
            report.steps.append(step)
            report.mse.append(mse)
            report.psnr.append(psnr_from_mse(mse))
    report.final_mse = evaluate_mse(f, rays, colors, cfg)
    report.final_psnr = psnr_from_mse(report.final_mse)
    report.seconds = time.perf_counter() - start
    return report


@dataclass
class DensityGrid:
    """Scalar samples at voxel centers of an axis-aligned cube."""

    values: np.ndarray
    side: float
    center: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        if self.values.ndim != 3:
            raise ValueError("density grid values must be 3-D")
        if self.side <= 0:
            raise ValueError("grid side must be positive")

    @property
    def resolution(self):
        return self.values.shape

    @property
    def spacing(self) -> np.ndarray:
        return self.side / np.array(self.values.shape, dtype=np.float64)

    @property
    def origin(self) -> np.ndarray:
        """World position of sample (0, 0, 0)."""
        return self.center - 0.5 * self.side + 0.5 * self.spacing

    def positions(self):
        axes = [self.origin[a] + np.arange(self.values.shape[a]) * self.spacing[a] for a in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def density_grid_export(f: RadianceField, resolution: int = 256, side: float = 2.4, center=(0.0, 0.0, 0.0),
                        chunk: int = 1 << 20) -> DensityGrid:
    """Sample sigma at voxel centers of a cube of the given side length."""
    if resolution < 8:
        raise ValueError("resolution must be >= 8")
    grid = DensityGrid(np.zeros((resolution,) * 3), side, center)
    pts = grid.positions().reshape(-1, 3)
    out = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        out[s:s + chunk], _ = f.query(pts[s:s + chunk])
    grid.values = out.reshape((resolution,) * 3)
    return grid


def save_checkpoint(f: RadianceField, path) -> None:
    """Magic, bounds (6 x f64), resolution (3 x u32), then (density, r, g, b) f32 per lattice point, x fastest."""
    data = np.ascontiguousarray(f.params.transpose(2, 1, 0, 3), dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<6d", *f.lo, *f.hi))
        fh.write(struct.pack("<3I", *f.resolution))
        fh.write(data.tobytes())


def load_checkpoint(path) -> RadianceField:
    raw = Path(path).read_bytes()
    if raw[:8] != CKPT_MAGIC:
        raise ValueError(f"{path} is not a field checkpoint")
    bounds = struct.unpack_from("<6d", raw, 8)
    res = struct.unpack_from("<3I", raw, 56)
    f = RadianceField(bounds[:3], bounds[3:], res)
    expected = res[0] * res[1] * res[2] * 4
    data = np.frombuffer(raw, dtype="<f4", offset=68)
    if data.size != expected:
        raise ValueError(f"{path}: expected {expected} floats, found {data.size}")
    f.params = np.ascontiguousarray(data.reshape(res[2], res[1], res[0], 4).transpose(2, 1, 0, 3), dtype=np.float64)
    return f
