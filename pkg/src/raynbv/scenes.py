"""Analytic signed-distance scenes used as the ground-truth object and camera.

Shading uses a fixed world-space light so a surface point has the same color
from every view.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .field import DensityGrid
from .geometry import CameraIntrinsics, Pose, camera_rays
from .mesh import TriangleMesh, marching_cubes

SHAPES = ("sphere", "box", "torus", "capped_cylinder")
LIGHT_DIR = np.array([0.3, 0.2, 1.0]) / np.linalg.norm([0.3, 0.2, 1.0])
MAX_STEPS = 256
HIT_EPS = 1e-4
T_MIN = 0.05
POLISH_STEPS = 4


@dataclass(frozen=True)
class Primitive:
    """One shape in its local frame; ``rotation`` maps local to world.

    Size parameters: sphere (radius,), box (hx, hy, hz), torus (major, minor)
    with its axis along local z, capped_cylinder (radius, half_height) along z.
    """

    shape: str
    center: tuple
    size: tuple
    albedo: tuple
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}")
        if any(not 0.0 <= a <= 1.0 for a in self.albedo):
            raise ValueError("albedo channels must lie in [0, 1]")

    def local_extent(self) -> np.ndarray:
        s = self.size
        if self.shape == "sphere":
            return np.full(3, s[0])
        if self.shape == "box":
            return np.asarray(s, dtype=np.float64)
        if self.shape == "torus":
            return np.array([s[0] + s[1], s[0] + s[1], s[1]])
        return np.array([s[0], s[0], s[1]])

    def aabb(self):
        half = np.abs(np.asarray(self.rotation)) @ self.local_extent()
        c = np.asarray(self.center, dtype=np.float64)
        return c - half, c + half

    def sdf(self, p: np.ndarray) -> np.ndarray:
        q = (p - np.asarray(self.center)) @ np.asarray(self.rotation)
        s = self.size
        if self.shape == "sphere":
            return np.linalg.norm(q, axis=-1) - s[0]
        if self.shape == "box":
            d = np.abs(q) - np.asarray(s)
            outside = np.linalg.norm(np.maximum(d, 0.0), axis=-1)
            return outside + np.minimum(d.max(axis=-1), 0.0)
        if self.shape == "torus":
            ring = np.hypot(q[..., 0], q[..., 1]) - s[0]
            return np.hypot(ring, q[..., 2]) - s[1]
        d = np.stack([np.hypot(q[..., 0], q[..., 1]) - s[0], np.abs(q[..., 2]) - s[1]], axis=-1)
        return np.minimum(d.max(axis=-1), 0.0) + np.linalg.norm(np.maximum(d, 0.0), axis=-1)


@dataclass(frozen=True)
class SdfScene:
    primitives: tuple = ()
    half_extent: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        for prim in self.primitives:
            lo, hi = prim.aabb()
            if np.any(lo < -self.half_extent - 1e-12) or np.any(hi > self.half_extent + 1e-12):
                raise ValueError(f"{prim.shape} primitive leaves the scene bounds")

    def with_primitive(self, prim: Primitive) -> "SdfScene":
        return SdfScene(self.primitives + (prim,), self.half_extent, self.name)


def sdf_eval(scene: SdfScene, p) -> np.ndarray:
    """Union (min) of primitive distances; accepts a single point or an (..., 3) array."""
    p = np.asarray(p, dtype=np.float64)
    if not scene.primitives:
        return np.full(p.shape[:-1], np.inf)
    return np.min([prim.sdf(p) for prim in scene.primitives], axis=0)


def _closest_primitive(scene, p):
    return np.argmin([prim.sdf(p) for prim in scene.primitives], axis=0)


def _normals(scene, p, h=1e-5):
    grad = np.empty_like(p)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        grad[:, k] = sdf_eval(scene, p + e) - sdf_eval(scene, p - e)
    n = np.linalg.norm(grad, axis=1, keepdims=True)
    return grad / np.where(n > 0, n, 1.0)


def sphere_trace(scene: SdfScene, origins, directions, t_max: float, t_min: float = T_MIN):
    """March rays through the SDF; returns (hit mask, hit depth)."""
    n = origins.shape[0]
    t = np.full(n, t_min)
    hit = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)
    if not scene.primitives:
        return hit, t
    for _ in range(MAX_STEPS):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        d = sdf_eval(scene, origins[idx] + t[idx, None] * directions[idx])
        done = d < HIT_EPS
        hit[idx[done]] = True
        t[idx[~done]] += d[~done]
        escaped = t[idx] > t_max
        active[idx[done | escaped]] = False
    # a few more steps pull hits from within HIT_EPS onto the surface itself
    idx = np.flatnonzero(hit)
    for _ in range(POLISH_STEPS):
        if idx.size == 0:
            break
        t[idx] += sdf_eval(scene, origins[idx] + t[idx, None] * directions[idx])
    return hit, t


def shade(scene: SdfScene, points: np.ndarray) -> np.ndarray:
    """View-independent matte color: albedo * (0.5 + 0.5 * max(0, n . light))."""
    albedo = np.array([prim.albedo for prim in scene.primitives], dtype=np.float64)
    which = _closest_primitive(scene, points)
    lam = np.maximum(0.0, _normals(scene, points) @ LIGHT_DIR)
    return albedo[which] * (0.5 + 0.5 * lam)[:, None]


def render_rays(scene: SdfScene, origins, directions, background=(1.0, 1.0, 1.0), t_max: float = 12.0):
    colors = np.empty((origins.shape[0], 3))
    colors[:] = np.asarray(background, dtype=np.float64)
    hit, t = sphere_trace(scene, origins, directions, t_max)
    if hit.any():
        pts = origins[hit] + t[hit, None] * directions[hit]
        colors[hit] = shade(scene, pts)
    return np.clip(colors, 0.0, 1.0)


def render_ground_truth(
    scene: SdfScene, cam: CameraIntrinsics, pose: Pose, background=(1.0, 1.0, 1.0), downsample: int = 1
) -> np.ndarray:
    """Sphere-traced (H, W, 3) image in [0, 1]."""
    rays = camera_rays(cam, pose, downsample)
    t_max = 4.0 * max(float(np.linalg.norm(pose.position)), scene.half_extent)
    colors = render_rays(scene, rays.origins, rays.directions, background, t_max)
    return colors.reshape(cam.height // downsample, cam.width // downsample, 3)


def _unit_vectors(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sample_surface_points(scene: SdfScene, n: int, seed: int = 0, batch: int = 20000) -> np.ndarray:
    """First-hit points of isotropic random lines entering a bounding sphere.

    Origins are uniform on the sphere and directions cosine-weighted inward,
    which hits convex surfaces with uniform area density.
    """
    if not scene.primitives:
        raise ValueError("cannot sample the surface of an empty scene")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    radius = math.sqrt(3.0) * scene.half_extent * 1.05
    out = []
    total = 0
    while total < n:
        normal = _unit_vectors(rng, batch)
        origins = radius * normal
        # cosine-weighted hemisphere around -normal
        r1, r2 = rng.random(batch), rng.random(batch)
        phi = 2 * math.pi * r1
        sin_t = np.sqrt(r2)
        cos_t = np.sqrt(1.0 - r2)
        helper = np.where(np.abs(normal[:, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
        tangent = np.cross(normal, helper)
        tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
        bitangent = np.cross(normal, tangent)
        dirs = (
            -normal * cos_t[:, None]
            + tangent * (sin_t * np.cos(phi))[:, None]
            + bitangent * (sin_t * np.sin(phi))[:, None]
        )
        hit, t = sphere_trace(scene, origins, dirs, 4.0 * radius, t_min=0.0)
        pts = origins[hit] + t[hit, None] * dirs[hit]
        out.append(pts)
        total += len(pts)
    return np.concatenate(out)[:n]


def ground_truth_mesh(scene: SdfScene, resolution: int = 128, side: float = 2.4, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Marching cubes on the negated SDF at iso 0, sampled at voxel centers of a cube."""
    if resolution < 8:
        raise ValueError("resolution must be >= 8")
    grid = DensityGrid(np.zeros((resolution,) * 3), side, center)
    if not scene.primitives:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    grid.values = -sdf_eval(scene, grid.positions())
    return marching_cubes(grid, 0.0)


def _rot_x(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _presets():
    return {
        "sphere": SdfScene((Primitive("sphere", (0.0, 0.0, 0.0), (0.6,), (0.85, 0.25, 0.2)),), name="sphere"),
        "snowman": SdfScene(
            (
                Primitive("box", (0.0, 0.0, -0.35), (0.25, 0.25, 0.45), (0.25, 0.45, 0.8)),
                Primitive("sphere", (0.0, 0.0, 0.4), (0.3,), (0.9, 0.75, 0.3)),
            ),
            name="snowman",
        ),
        "loader": SdfScene(
            (
                Primitive("box", (0.0, 0.0, -0.4), (0.65, 0.35, 0.2), (0.9, 0.6, 0.1)),
                Primitive("torus", (0.35, 0.0, 0.05), (0.25, 0.08), (0.2, 0.2, 0.2), _rot_x(math.pi / 2)),
                Primitive("capped_cylinder", (-0.3, 0.0, 0.0), (0.15, 0.25), (0.3, 0.6, 0.3)),
            ),
            name="loader",
        ),
        "ficus": SdfScene(
            (
                Primitive("sphere", (0.0, 0.0, 0.45), (0.25,), (0.2, 0.65, 0.25)),
                Primitive("sphere", (0.35, 0.2, 0.1), (0.18,), (0.3, 0.75, 0.3)),
                Primitive("sphere", (-0.3, -0.25, 0.0), (0.2,), (0.15, 0.55, 0.2)),
                Primitive("capped_cylinder", (0.0, 0.0, -0.35), (0.05, 0.45), (0.45, 0.3, 0.15)),
            ),
            name="ficus",
        ),
    }


PRESET_NAMES = ("sphere", "snowman", "loader", "ficus")


def preset_scene(name: str) -> SdfScene:
    """Named scene preset.

    ``sphere``; ``snowman`` (sphere on a tall box); ``loader`` (torus and
    cylinder on a flat box); ``ficus`` (three small spheres on a thin stem).
    """
    presets = _presets()
    if name not in presets:
        raise KeyError(f"unknown scene preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    return presets[name]
