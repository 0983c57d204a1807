"""Camera model, look-at poses, the hemisphere view space and its region clustering."""

from __future__ import annotations

from dataclasses import dataclass
import math
from pathlib import Path
from typing import Sequence

import numpy as np

DEFAULT_ELEVATIONS_DEG = (15.0, 30.0, 45.0, 60.0, 75.0)


@dataclass(frozen=True)
class Pose:
    """World-from-camera rigid transform. The camera looks down its local -Z axis."""

    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64).reshape(3))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))

    @property
    def forward(self) -> np.ndarray:
        return -self.rotation[:, 2]


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int
    height: int
    fov_y: float = math.radians(45.0)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("camera width and height must be >= 1")
        if not 0.0 < self.fov_y < math.pi:
            raise ValueError("fov_y must lie in (0, pi)")

    @property
    def focal(self) -> float:
        return 0.5 * self.height / math.tan(0.5 * self.fov_y)


@dataclass(frozen=True)
class Rays:
    """A batch of rays; ``directions`` are unit length."""

    origins: np.ndarray
    directions: np.ndarray

    def __len__(self):
        return self.origins.shape[0]

    def __getitem__(self, idx):
        return Rays(self.origins[idx], self.directions[idx])


def _normalize(v):
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def look_at(position, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """Pose at ``position`` whose forward (-Z) axis points at ``target``.

    Falls back to +X as the up hint when the view direction is parallel to ``up``.
    """
    position = np.asarray(position, dtype=np.float64)
    forward = _normalize(np.asarray(target, dtype=np.float64) - position)
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(forward, np.array([1.0, 0.0, 0.0]))
    right = right / np.linalg.norm(right)
    cam_up = np.cross(right, forward)
    rotation = np.stack([right, cam_up, -forward], axis=1)
    return Pose(position, rotation)


@dataclass(frozen=True)
class CandidateView:
    id: int
    circle_index: int
    azimuth: float
    elevation: float
    pose: Pose


@dataclass(frozen=True)
class ViewSpace:
    views: list
    middle_circle: int
    radius: float
    target: np.ndarray
    n_circles: int
    poses_per_circle: int

    def __len__(self):
        return len(self.views)

    def view(self, view_id: int) -> CandidateView:
        return self.views[view_id]

    def circle_ids(self, circle: int) -> list[int]:
        return [v.id for v in self.views if v.circle_index == circle]


@dataclass(frozen=True)
class RegionClustering:
    sections: list  # list of (section id, tuple of member view ids)
    excluded: tuple

    def section_of(self) -> dict[int, int]:
        return {vid: sid for sid, members in self.sections for vid in members}


def hemisphere_position(elevation: float, azimuth: float, radius: float, target=(0.0, 0.0, 0.0)):
    ce = math.cos(elevation)
    return np.asarray(target, dtype=np.float64) + radius * np.array(
        [ce * math.cos(azimuth), ce * math.sin(azimuth), math.sin(elevation)]
    )


def generate_view_space(
    n_circles: int = 5,
    poses_per_circle: int = 30,
    elevations: Sequence[float] | None = None,
    radius: float = 2.8,
    target=(0.0, 0.0, 0.0),
) -> ViewSpace:
    """Look-at candidate poses on ``n_circles`` horizontal circles of a hemisphere.

    View ids run circle by circle (lowest elevation first), azimuths start at 0
    and are evenly spaced.
    """
    if elevations is None:
        elevations = [math.radians(e) for e in DEFAULT_ELEVATIONS_DEG]
    elevations = list(elevations)
    if len(elevations) == 0:
        raise ValueError("elevations must not be empty")
    if len(elevations) != n_circles:
        raise ValueError(f"expected {n_circles} elevations, got {len(elevations)}")
    if any(b <= a for a, b in zip(elevations, elevations[1:])):
        raise ValueError("elevations must be strictly increasing")
    if any(not 0.0 < e < math.pi / 2 for e in elevations):
        raise ValueError("elevations must lie in (0, pi/2)")
    if radius <= 0:
        raise ValueError("radius must be positive")
    if poses_per_circle < 1:
        raise ValueError("poses_per_circle must be >= 1")

    target = np.asarray(target, dtype=np.float64).reshape(3)
    views = []
    for c, elev in enumerate(elevations):
        for j in range(poses_per_circle):
            az = 2.0 * math.pi * j / poses_per_circle
            pos = hemisphere_position(elev, az, radius, target)
            views.append(CandidateView(len(views), c, az, elev, look_at(pos, target)))
    return ViewSpace(views, n_circles // 2, float(radius), target, n_circles, poses_per_circle)


def cluster_regions(vs: ViewSpace, n_azimuth_bins: int = 6) -> RegionClustering:
    """Split the non-middle circles into lower/upper halves times azimuth bins.

    Sections are numbered lower half first, then by increasing azimuth.
    """
    if vs.n_circles < 3:
        raise ValueError("region clustering needs at least 3 circles")
    if n_azimuth_bins < 1 or vs.poses_per_circle % n_azimuth_bins:
        raise ValueError("n_azimuth_bins must divide poses_per_circle")
    per_bin = vs.poses_per_circle // n_azimuth_bins
    members: dict[int, list[int]] = {s: [] for s in range(2 * n_azimuth_bins)}
    excluded = []
    for v in vs.views:
        if v.circle_index == vs.middle_circle:
            excluded.append(v.id)
            continue
        half = 0 if v.circle_index < vs.middle_circle else 1
        j = v.id - v.circle_index * vs.poses_per_circle
        members[half * n_azimuth_bins + j // per_bin].append(v.id)
    sections = [(s, tuple(sorted(m))) for s, m in members.items()]
    return RegionClustering(sections, tuple(excluded))


def camera_rays(cam: CameraIntrinsics, pose: Pose, downsample: int = 1) -> Rays:
    """One ray per pixel of the downsampled grid, row-major, through block centers."""
    if downsample < 1 or cam.width % downsample or cam.height % downsample:
        raise ValueError(f"downsample {downsample} must divide {cam.width}x{cam.height}")
    w, h = cam.width // downsample, cam.height // downsample
    u = (np.arange(w) + 0.5) * downsample
    v = (np.arange(h) + 0.5) * downsample
    uu, vv = np.meshgrid(u, v)
    f = cam.focal
    d_cam = np.stack(
        [(uu - 0.5 * cam.width) / f, -(vv - 0.5 * cam.height) / f, -np.ones_like(uu)], axis=-1
    ).reshape(-1, 3)
    d_world = d_cam @ pose.rotation.T
    d_world /= np.linalg.norm(d_world, axis=1, keepdims=True)
    origins = np.broadcast_to(pose.position, d_world.shape).copy()
    return Rays(origins, d_world)


def spherical_distance(a: Pose, b: Pose, target=(0.0, 0.0, 0.0)) -> float:
    """Great-circle angle between two camera positions seen from ``target``."""
    target = np.asarray(target, dtype=np.float64)
    da = a.position - target
    db = b.position - target
    na, nb = np.linalg.norm(da), np.linalg.norm(db)
    if na == 0.0 or nb == 0.0:
        raise ValueError("pose position coincides with target")
    cos = float(np.sum((da / na) * (db / nb)))
    return math.acos(min(1.0, max(-1.0, cos)))


def write_view_space(vs: ViewSpace, path) -> None:
    lines = [
        f"# radius {vs.radius:.9g} target {vs.target[0]:.9g} {vs.target[1]:.9g} {vs.target[2]:.9g} "
        f"circles {vs.n_circles} per_circle {vs.poses_per_circle}"
    ]
    for v in vs.views:
        vals = [v.azimuth, *v.pose.position, *v.pose.rotation.reshape(-1)]
        lines.append(f"{v.id} {v.circle_index} " + " ".join(f"{x:.9g}" for x in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def read_view_space(path) -> ViewSpace:
    """Inverse of :func:`write_view_space` (poses are read back at 9 significant digits)."""
    radius, target, n_circles, per_circle = None, np.zeros(3), None, None
    views = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            tok = line[1:].split()
            if "radius" in tok:
                radius = float(tok[tok.index("radius") + 1])
                i = tok.index("target")
                target = np.array([float(x) for x in tok[i + 1:i + 4]])
                n_circles = int(tok[tok.index("circles") + 1])
                per_circle = int(tok[tok.index("per_circle") + 1])
            continue
        tok = line.split()
        if len(tok) != 15:
            raise ValueError(f"malformed view line: {line!r}")
        vid, circle = int(tok[0]), int(tok[1])
        az = float(tok[2])
        pos = np.array([float(x) for x in tok[3:6]])
        rot = np.array([float(x) for x in tok[6:15]]).reshape(3, 3)
        rel = pos - target
        elev = math.asin(max(-1.0, min(1.0, rel[2] / np.linalg.norm(rel))))
        views.append(CandidateView(vid, circle, az, elev, Pose(pos, rot)))
    if not views:
        raise ValueError(f"no views in {path}")
    if n_circles is None:
        n_circles = max(v.circle_index for v in views) + 1
        per_circle = len(views) // n_circles
    if radius is None:
        radius = float(np.linalg.norm(views[0].pose.position - target))
    return ViewSpace(views, n_circles // 2, radius, target, n_circles, per_circle)
