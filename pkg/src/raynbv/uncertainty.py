"""Per-ray entropy of the volume-rendering weight distribution, per-view maps and scores."""

from __future__ import annotations

from dataclasses import dataclass, replace
import math

import numpy as np

from .field import RadianceField, TrainConfig, render_rays
from .geometry import CameraIntrinsics, Pose, camera_rays

BACKGROUND_MODES = ("zero-entropy", "max-entropy", "exclude")
MEAN_MODES = ("all-pixels", "opacity-masked")


@dataclass(frozen=True)
class EntropyOptions:
    eps: float = 1e-10
    bg_opacity: float = 0.1
    background_mode: str = "zero-entropy"
    mean_mode: str = "all-pixels"

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not 0.0 <= self.bg_opacity <= 1.0:
            raise ValueError("bg_opacity must lie in [0, 1]")
        if self.background_mode not in BACKGROUND_MODES:
            raise ValueError(f"background_mode must be one of {BACKGROUND_MODES}")
        if self.mean_mode not in MEAN_MODES:
            raise ValueError(f"mean_mode must be one of {MEAN_MODES}")


@dataclass
class EntropyMap:
    entropy: np.ndarray  # (H, W) nats; NaN marks excluded background pixels
    opacity: np.ndarray  # (H, W)
    n_samples: int

    @property
    def width(self) -> int:
        return self.entropy.shape[1]

    @property
    def height(self) -> int:
        return self.entropy.shape[0]

    def normalized(self) -> np.ndarray:
        """Entropy divided by its upper bound ln N, background NaNs set to 0."""
        return np.nan_to_num(self.entropy / math.log(self.n_samples), nan=0.0)


def ray_entropies(weights, opts: EntropyOptions = EntropyOptions()) -> np.ndarray:
    """Entropy (nats) of each row of ``weights`` after normalising it to sum to one."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim == 1:
        w = w[None, :]
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    n = w.shape[1]
    mass = w.sum(axis=1)
    p = w / np.maximum(mass, opts.eps)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0, p * np.log(p), 0.0)
    h = np.clip(-plogp.sum(axis=1), 0.0, math.log(n))
    background = mass < opts.bg_opacity
    if opts.background_mode == "zero-entropy":
        h[background] = 0.0
    elif opts.background_mode == "max-entropy":
        h[background] = math.log(n)
    else:
        h[background] = np.nan
    return h


def ray_entropy(weights, opts: EntropyOptions = EntropyOptions()) -> float:
    return float(ray_entropies(np.asarray(weights, dtype=np.float64).reshape(1, -1), opts)[0])


def entropy_map(
    f: RadianceField,
    cam: CameraIntrinsics,
    pose: Pose,
    cfg: TrainConfig,
    downsample: int = 4,
    opts: EntropyOptions = EntropyOptions(),
) -> EntropyMap:
    """Render every downsampled pixel ray (no jitter) and take its weight entropy."""
    rays = camera_rays(cam, pose, downsample)
    _, opacity, weights = render_rays(f, rays, replace(cfg, stratified=False))
    shape = (cam.height // downsample, cam.width // downsample)
    return EntropyMap(ray_entropies(weights, opts).reshape(shape), opacity.reshape(shape), cfg.n_samples)


def view_mean_entropy(m: EntropyMap, opts: EntropyOptions = EntropyOptions()) -> float:
    """Mean pixel entropy of a view: over all pixels, or over pixels with opacity >= the floor."""
    if m.entropy.size == 0:
        raise ValueError("entropy map is empty")
    h = m.entropy
    if opts.mean_mode == "opacity-masked":
        sel = (m.opacity >= opts.bg_opacity) & ~np.isnan(h)
        return float(h[sel].mean()) if sel.any() else 0.0
    valid = ~np.isnan(h)
    return float(h[valid].mean()) if valid.any() else 0.0
