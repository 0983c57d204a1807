"""Next-best-view selection policies behind a single dispatch function."""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .field import RadianceField, TrainConfig, render_image
from .geometry import CameraIntrinsics, RegionClustering, ViewSpace, hemisphere_position, spherical_distance
from .scenes import SdfScene, render_ground_truth
from .uncertainty import EntropyOptions, entropy_map, view_mean_entropy

POLICIES = (
    "region-entropy",
    "random-section",
    "heuristic",
    "similarity",
    "similarity-gt",
    "pure-random",
    "topk-entropy",
    "entropy-distance",
)
PER_SECTION = {"region-entropy", "random-section", "heuristic", "similarity", "similarity-gt"}
TIE_TOL = 1e-12


@dataclass
class PolicyState:
    field: RadianceField
    view_space: ViewSpace
    clustering: RegionClustering
    training_ids: frozenset
    candidate_ids: frozenset
    seed: int = 0
    scene: SdfScene | None = None
    camera: CameraIntrinsics = field(default_factory=lambda: CameraIntrinsics(100, 100))
    render_cfg: TrainConfig = field(default_factory=lambda: TrainConfig(stratified=False))
    entropy_opts: EntropyOptions = field(default_factory=EntropyOptions)
    downsample: int = 4
    # precomputed view_mean_entropy per candidate id; filled lazily
    entropy_scores: dict = field(default_factory=dict)

    def __post_init__(self):
        self.training_ids = frozenset(self.training_ids)
        self.candidate_ids = frozenset(self.candidate_ids)
        if self.training_ids & self.candidate_ids:
            raise ValueError("training and candidate ids overlap")
        all_ids = {v.id for v in self.view_space.views}
        if self.training_ids | self.candidate_ids != all_ids:
            raise ValueError("training and candidate ids must cover the view space")

    def sections(self):
        """Candidate members of each section, in section order."""
        return [(sid, [v for v in members if v in self.candidate_ids]) for sid, members in self.clustering.sections]


@dataclass
class Selection:
    policy: str
    chosen: list
    scores: dict = field(default_factory=dict)


def _argbest(ids, scores, maximize=True):
    """Best-scoring id; scores within TIE_TOL of the best tie and go to the lowest id."""
    vals = np.array([scores[i] for i in ids], dtype=np.float64)
    best = vals.max() if maximize else vals.min()
    near = np.abs(vals - best) <= TIE_TOL
    return min(i for i, ok in zip(ids, near) if ok)


def _check_sections(state: PolicyState):
    sections = state.sections()
    for sid, members in sections:
        if not members:
            raise ValueError(f"section {sid} has no remaining candidates")
    return sections


def candidate_entropy_scores(state: PolicyState, ids=None) -> dict:
    """Mean entropy of each requested candidate view (cached on the state)."""
    ids = sorted(state.candidate_ids if ids is None else ids)
    for vid in ids:
        if vid not in state.entropy_scores:
            m = entropy_map(state.field, state.camera, state.view_space.view(vid).pose,
                            state.render_cfg, state.downsample, state.entropy_opts)
            state.entropy_scores[vid] = view_mean_entropy(m, state.entropy_opts)
    return {vid: state.entropy_scores[vid] for vid in ids}


def policy_region_entropy(state: PolicyState) -> Selection:
    sections = _check_sections(state)
    scores = candidate_entropy_scores(state, [v for _, m in sections for v in m])
    chosen = [_argbest(members, scores) for _, members in sections]
    return Selection("region-entropy", chosen, scores)


def policy_pure_random(state: PolicyState, k: int = 12) -> Selection:
    pool = sorted(state.candidate_ids)
    if not 0 <= k <= len(pool):
        raise ValueError(f"k={k} outside [0, {len(pool)}]")
    rng = np.random.default_rng(state.seed)
    chosen = [int(v) for v in rng.choice(pool, size=k, replace=False)] if k else []
    return Selection("pure-random", chosen)


def policy_random_per_section(state: PolicyState) -> Selection:
    sections = _check_sections(state)
    rng = np.random.default_rng(state.seed)
    chosen = [int(members[rng.integers(len(members))]) for _, members in sections]
    return Selection("random-section", chosen)


def policy_heuristic_middle(state: PolicyState) -> Selection:
    """Per section, the candidate closest to the section's (mean elevation, circular-mean azimuth)."""
    sections = _check_sections(state)
    vs = state.view_space
    chosen, scores = [], {}
    for sid, _ in sections:
        all_members = dict(state.clustering.sections)[sid]
        views = [vs.view(v) for v in all_members]
        elev = float(np.mean([v.elevation for v in views]))
        az = math.atan2(np.mean([math.sin(v.azimuth) for v in views]), np.mean([math.cos(v.azimuth) for v in views]))
        centre = hemisphere_position(elev, az, 1.0)
        for vid in all_members:
            if vid in state.candidate_ids:
                p = vs.view(vid).pose.position - vs.target
                cos = float(np.dot(p / np.linalg.norm(p), centre))
                scores[vid] = math.acos(min(1.0, max(-1.0, cos)))
        members = [v for v in all_members if v in state.candidate_ids]
        chosen.append(_argbest(members, scores, maximize=False))
    return Selection("heuristic", chosen, scores)


def _block_means(img, cells=8):
    h, w, _ = img.shape

    def spans(n):
        # each cell covers at least one pixel, so images smaller than the grid still pool
        lo = (np.arange(cells) * n) // cells
        hi = np.maximum(((np.arange(cells) + 1) * n) // cells, lo + 1)
        return list(zip(lo, hi))

    return np.array([[img[r0:r1, c0:c1].mean(axis=(0, 1)) for c0, c1 in spans(w)] for r0, r1 in spans(h)])


@dataclass
class ImageFeature:
    vector: np.ndarray
    blank: bool = False


def image_feature(img, bins: int = 16) -> ImageFeature:
    """8x8 mean-pooled RGB cells followed by per-channel 16-bin histograms, L2-normalised."""
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    pooled = _block_means(img).reshape(-1)
    flat = img.reshape(-1, 3)
    hist = np.concatenate([
        np.histogram(flat[:, c], bins=bins, range=(0.0, 1.0))[0] / len(flat) for c in range(3)
    ])
    vec = np.concatenate([pooled, hist])
    norm = np.linalg.norm(vec)
    if norm == 0:
        return ImageFeature(vec, blank=True)
    return ImageFeature(vec / norm)


def cosine(a, b) -> float:
    a = a.vector if isinstance(a, ImageFeature) else np.asarray(a, dtype=np.float64)
    b = b.vector if isinstance(b, ImageFeature) else np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def _view_image(state: PolicyState, vid: int, ground_truth: bool):
    pose = state.view_space.view(vid).pose
    if ground_truth:
        if state.scene is None:
            raise ValueError("ground-truth rendering needs a scene")
        return render_ground_truth(state.scene, state.camera, pose, state.render_cfg.background, state.downsample)
    return render_image(state.field, state.camera, pose, state.render_cfg, state.downsample)


def policy_similarity(state: PolicyState, use_ground_truth: bool = False) -> Selection:
    """Per section, the candidate least similar (max cosine over training images) to the training set.

    Training images are the acquired ground-truth views; candidates are rendered
    from the field, or from the scene when ``use_ground_truth``.
    """
    sections = _check_sections(state)
    train_feats = [image_feature(_view_image(state, v, True)) for v in sorted(state.training_ids)]
    scores = {}
    chosen = []
    for _, members in sections:
        for vid in members:
            feat = image_feature(_view_image(state, vid, use_ground_truth))
            scores[vid] = max(cosine(feat, t) for t in train_feats)
        chosen.append(_argbest(members, scores, maximize=False))
    return Selection("similarity-gt" if use_ground_truth else "similarity", chosen, scores)


def _global_ranking(scores):
    return sorted(scores, key=lambda v: (-scores[v], v))


def policy_topk_entropy(state: PolicyState, k: int = 12) -> Selection:
    if not 0 <= k <= len(state.candidate_ids):
        raise ValueError(f"k={k} exceeds the {len(state.candidate_ids)} candidates")
    scores = candidate_entropy_scores(state)
    return Selection("topk-entropy", _global_ranking(scores)[:k], scores)


def policy_entropy_distance(state: PolicyState, k: int = 12, lam: float = 0.5) -> Selection:
    """Greedy picks maximising h / ln N + lam * (min spherical distance to picked views) / pi."""
    if not 0 <= k <= len(state.candidate_ids):
        raise ValueError(f"k={k} exceeds the {len(state.candidate_ids)} candidates")
    scores = candidate_entropy_scores(state)
    if k == 0 or lam == 0:
        # without the distance term the greedy fold reduces to the global ranking
        return Selection("entropy-distance", _global_ranking(scores)[:k], scores)
    vs = state.view_space
    log_n = math.log(state.render_cfg.n_samples)
    order = sorted(scores)
    chosen = [_global_ranking(scores)[0]]
    min_dist = {v: math.inf for v in order}
    while len(chosen) < k:
        last = vs.view(chosen[-1]).pose
        gains = {}
        for v in order:
            if v in chosen:
                continue
            min_dist[v] = min(min_dist[v], spherical_distance(vs.view(v).pose, last, vs.target))
            gains[v] = scores[v] / log_n + lam * min_dist[v] / math.pi
        chosen.append(_argbest(sorted(gains), gains))
    return Selection("entropy-distance", chosen, scores)


def select_next_views(name: str, state: PolicyState, k: int = 12, lam: float = 0.5) -> Selection:
    """Run the named policy; ``k`` applies to the global policies only."""
    if name == "region-entropy":
        sel = policy_region_entropy(state)
    elif name == "random-section":
        sel = policy_random_per_section(state)
    elif name == "heuristic":
        sel = policy_heuristic_middle(state)
    elif name == "similarity":
        sel = policy_similarity(state, False)
    elif name == "similarity-gt":
        sel = policy_similarity(state, True)
    elif name == "pure-random":
        sel = policy_pure_random(state, k)
    elif name == "topk-entropy":
        sel = policy_topk_entropy(state, k)
    elif name == "entropy-distance":
        sel = policy_entropy_distance(state, k, lam)
    else:
        raise ValueError(f"unknown policy {name!r}; choose from {', '.join(POLICIES)}")
    assert not set(sel.chosen) & state.training_ids
    return sel
