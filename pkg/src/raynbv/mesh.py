"""Marching cubes, surface point sampling and the F-score metric."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ._mc_table import CORNER_OFFSETS, EDGE_CORNERS, TRIANGLES
from .field import DensityGrid

_CORNERS = np.array(CORNER_OFFSETS, dtype=np.int64)
_EDGE_A = np.array([a for a, _ in EDGE_CORNERS])
_EDGE_B = np.array([b for _, b in EDGE_CORNERS])
# each cube edge as (start lattice offset, axis)
_EDGE_START = np.minimum(_CORNERS[_EDGE_A], _CORNERS[_EDGE_B])
_EDGE_AXIS = np.argmax(np.abs(_CORNERS[_EDGE_B] - _CORNERS[_EDGE_A]), axis=1)

_TRI_TABLE = np.full((256, 15), -1, dtype=np.int64)
for _case, _row in enumerate(TRIANGLES):
    _TRI_TABLE[_case, : len(_row)] = _row
_TRI_COUNT = np.array([len(r) // 3 for r in TRIANGLES])


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)

    def __len__(self):
        return len(self.triangles)

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)


def marching_cubes(grid: DensityGrid, iso: float) -> TriangleMesh:
    """Lookup-table marching cubes over the voxel-center samples of ``grid``.

    Vertices are shared between neighbouring cells (one per crossed lattice edge)
    and placed by linear interpolation, in world coordinates.
    """
    vals = grid.values
    if min(vals.shape) < 2:
        raise ValueError("marching cubes needs at least 2 samples per axis")
    nx, ny, nz = vals.shape
    below = vals < iso
    case = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.int64)
    for c, (dx, dy, dz) in enumerate(CORNER_OFFSETS):
        case |= below[dx:nx - 1 + dx, dy:ny - 1 + dy, dz:nz - 1 + dz].astype(np.int64) << c
    cells = np.argwhere(_TRI_COUNT[case] > 0)
    if len(cells) == 0:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    cell_case = case[cells[:, 0], cells[:, 1], cells[:, 2]]
    rows = _TRI_TABLE[cell_case]
    valid = rows >= 0
    cell_idx = np.repeat(np.arange(len(cells)), valid.sum(axis=1))
    local_edge = rows[valid]

    # global edge key: axis * n_points + linear index of the edge start point
    start = cells[cell_idx] + _EDGE_START[local_edge]
    axis = _EDGE_AXIS[local_edge]
    n_points = nx * ny * nz
    key = axis * n_points + (start[:, 0] * ny + start[:, 1]) * nz + start[:, 2]
    uniq, inverse = np.unique(key, return_inverse=True)

    ax = uniq // n_points
    lin = uniq % n_points
    p0 = np.stack([lin // (ny * nz), (lin // nz) % ny, lin % nz], axis=1)
    p1 = p0.copy()
    p1[np.arange(len(ax)), ax] += 1
    v0 = vals[p0[:, 0], p0[:, 1], p0[:, 2]]
    v1 = vals[p1[:, 0], p1[:, 1], p1[:, 2]]
    denom = v1 - v0
    frac = np.where(denom != 0, (iso - v0) / np.where(denom != 0, denom, 1.0), 0.5)
    idx_pos = p0 + frac[:, None] * (p1 - p0)
    verts = grid.origin + idx_pos * grid.spacing
    tris = inverse.reshape(-1, 3)
    return TriangleMesh(verts, tris)


def sample_mesh_points(mesh: TriangleMesh, n: int, seed: int = 0) -> np.ndarray:
    """Area-weighted triangle choice followed by uniform barycentric sampling."""
    if mesh.is_empty:
        raise ValueError("cannot sample points from an empty mesh")
    rng = np.random.default_rng(seed)
    areas = mesh.areas()
    total = areas.sum()
    if total <= 0:
        raise ValueError("mesh has zero surface area")
    tri = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    v = mesh.vertices[mesh.triangles[tri]]
    return (
        (1 - r1)[:, None] * v[:, 0]
        + (r1 * (1 - r2))[:, None] * v[:, 1]
        + (r1 * r2)[:, None] * v[:, 2]
    )


def nearest_distances(query, reference) -> np.ndarray:
    """Distance from every query point to its nearest reference point (k-d tree)."""
    reference = np.asarray(reference, dtype=np.float64).reshape(-1, 3)
    query = np.asarray(query, dtype=np.float64).reshape(-1, 3)
    if len(reference) == 0:
        raise ValueError("reference cloud is empty")
    if len(query) == 0:
        return np.zeros(0)
    _, idx = cKDTree(reference).query(query, k=1)
    diff = query - reference[idx]
    return np.sqrt(np.sum(diff * diff, axis=1))


@dataclass
class FScoreReport:
    precision: float
    recall: float
    fscore: float
    threshold: float
    n_pred_within: int
    n_gt_within: int
    n_pred: int
    n_gt: int


def fscore_from_distances(d_pred, d_gt, threshold: float) -> FScoreReport:
    n_p = int(np.count_nonzero(d_pred <= threshold))
    n_g = int(np.count_nonzero(d_gt <= threshold))
    precision = n_p / len(d_pred) if len(d_pred) else 0.0
    recall = n_g / len(d_gt) if len(d_gt) else 0.0
    f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return FScoreReport(precision, recall, f, threshold, n_p, n_g, len(d_pred), len(d_gt))


def fscore(pred, gt, threshold: float) -> FScoreReport:
    """Precision, recall and their harmonic mean at distance ``threshold``."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 3)
    if len(gt) == 0:
        raise ValueError("ground-truth cloud is empty")
    if len(pred) == 0:
        return FScoreReport(0.0, 0.0, 0.0, threshold, 0, 0, 0, len(gt))
    return fscore_from_distances(nearest_distances(pred, gt), nearest_distances(gt, pred), threshold)


def edge_usage(mesh: TriangleMesh) -> np.ndarray:
    """How many triangles use each undirected edge (2 everywhere for a closed manifold)."""
    t = mesh.triangles
    edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    edges.sort(axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return counts
