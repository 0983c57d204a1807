"""Active reconstruction loop: acquire, train, score candidates, select, refine, evaluate."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
import hashlib
import logging
import math
from pathlib import Path
import time

import numpy as np

from . import io
from .field import (RadianceField, TrainConfig, density_grid_export, load_checkpoint, save_checkpoint, train)
from .geometry import (CameraIntrinsics, cluster_regions, generate_view_space, write_view_space)
from .mesh import TriangleMesh, fscore, marching_cubes, sample_mesh_points
from .policy import POLICIES, PolicyState, select_next_views
from .scenes import preset_scene, render_ground_truth, sample_surface_points
from .uncertainty import EntropyOptions, entropy_map, view_mean_entropy

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("iter", "n_images", "policy", "selected_ids", "mean_entropy", "psnr", "fscore", "seconds")


@dataclass
class ExperimentConfig:
    scene: str = "snowman"
    width: int = 100
    height: int = 100
    fov_deg: float = 45.0
    n_circles: int = 5
    poses_per_circle: int = 30
    elevations_deg: str = "15,30,45,60,75"
    radius: float = 2.8
    n_azimuth_bins: int = 6
    initial_views: int = 6
    policy: str = "region-entropy"
    k: int = 12
    lam: float = 0.5
    iterations: int = 1
    grid_resolution: int = 32
    field_half_extent: float = 1.0
    init_density: float = -6.0
    init_steps: int = 3000
    refine_steps: int = 3000
    rays_per_batch: int = 512
    lr: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.99
    adam_eps: float = 1e-8
    n_samples: int = 64
    t_near: float = 1.0
    t_far: float = 4.6
    background: str = "1,1,1"
    stratified: bool = True
    entropy_downsample: int = 4
    entropy_eps: float = 1e-10
    bg_opacity: float = 0.1
    background_mode: str = "zero-entropy"
    mean_mode: str = "all-pixels"
    mesh_resolution: int = 128
    mesh_side: float = 2.4
    mesh_iso: float = 10.0
    fscore_threshold: float = 0.03
    eval_points: int = 100000
    seed: int = 0
    out: str = "runs/default"
    write_entropy_maps: bool = True
    write_figures: bool = True
    report_wall_time: bool = False

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not 1 <= self.initial_views <= self.poses_per_circle:
            raise ValueError("initial_views must be between 1 and the poses on the middle circle")
        if len(self.elevations()) != self.n_circles:
            raise ValueError("elevations_deg must list one elevation per circle")
        if len(self.background_rgb()) != 3:
            raise ValueError("background must have 3 channels")

    def elevations(self) -> list[float]:
        return [math.radians(float(e)) for e in str(self.elevations_deg).split(",") if e.strip()]

    def background_rgb(self) -> tuple:
        return tuple(float(c) for c in str(self.background).split(","))

    def camera(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.width, self.height, math.radians(self.fov_deg))

    def train_config(self, steps: int, seed: int) -> TrainConfig:
        return TrainConfig(
            steps=steps, rays_per_batch=self.rays_per_batch, lr=self.lr, beta1=self.beta1, beta2=self.beta2,
            eps=self.adam_eps, n_samples=self.n_samples, t_near=self.t_near, t_far=self.t_far,
            background=self.background_rgb(), stratified=self.stratified, seed=seed,
        )

    def entropy_options(self) -> EntropyOptions:
        return EntropyOptions(self.entropy_eps, self.bg_opacity, self.background_mode, self.mean_mode)

    def new_field(self) -> RadianceField:
        h = self.field_half_extent
        return RadianceField((-h, -h, -h), (h, h, h), self.grid_resolution, init_density=self.init_density)

    def to_text(self) -> str:
        lines = ["# raynbv experiment configuration (key = value)"]
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
        return "\n".join(lines) + "\n"


def _coerce(name: str, value: str, kind):
    if kind in (bool, "bool"):
        low = value.strip().lower()
        if low not in ("true", "false", "1", "0", "yes", "no", "on", "off"):
            raise ValueError(f"{name}: expected a boolean, got {value!r}")
        return low in ("true", "1", "yes", "on")
    if kind in (int, "int"):
        return int(value)
    if kind in (float, "float"):
        return float(value)
    return value.strip()


def parse_overrides(pairs) -> dict:
    """``key=value`` strings (or lines) to typed keyword arguments for :class:`ExperimentConfig`."""
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    out = {}
    for raw in pairs:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ValueError(f"unknown configuration key {key!r}")
        out[key] = _coerce(key, value, types[key])
    return out


def load_config(path=None, **overrides) -> ExperimentConfig:
    values = {}
    if path is not None:
        values.update(parse_overrides(Path(path).read_text().splitlines()))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def sub_seed(master: int, label: str, index: int = 0) -> int:
    """Deterministic 63-bit seed for one labelled random stream."""
    digest = hashlib.sha256(f"{master}:{label}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & ((1 << 63) - 1)


def initial_view_ids(vs, count: int) -> list[int]:
    """``count`` views evenly spaced around the middle circle."""
    ring = vs.circle_ids(vs.middle_circle)
    return [ring[(i * len(ring)) // count] for i in range(count)]


@dataclass
class Setup:
    """Everything a run derives from its configuration."""

    cfg: ExperimentConfig
    scene: object
    view_space: object
    clustering: object
    camera: CameraIntrinsics

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "Setup":
        vs = generate_view_space(cfg.n_circles, cfg.poses_per_circle, cfg.elevations(), cfg.radius)
        return cls(cfg, preset_scene(cfg.scene), vs, cluster_regions(vs, cfg.n_azimuth_bins), cfg.camera())

    def acquire(self, view_id: int) -> np.ndarray:
        pose = self.view_space.view(view_id).pose
        return render_ground_truth(self.scene, self.camera, pose, self.cfg.background_rgb())

    def training_images(self, ids, cache=None):
        cache = {} if cache is None else cache
        for vid in ids:
            if vid not in cache:
                cache[vid] = self.acquire(vid)
        return [(self.view_space.view(v).pose, cache[v]) for v in sorted(ids)]

    def train_phase(self, ids, iteration: int, warm: RadianceField | None = None, image_cache=None):
        """Train from scratch (iteration 0) or refine ``warm``; returns (field, report)."""
        cfg = self.cfg
        steps = cfg.init_steps if warm is None else cfg.refine_steps
        f = cfg.new_field() if warm is None else warm.copy()
        report = train(f, self.camera, self.training_images(ids, image_cache),
                       cfg.train_config(steps, sub_seed(cfg.seed, "train", iteration)))
        return f, report

    def policy_state(self, f, training_ids, iteration: int) -> PolicyState:
        all_ids = {v.id for v in self.view_space.views}
        cfg = self.cfg
        return PolicyState(
            f, self.view_space, self.clustering, frozenset(training_ids), frozenset(all_ids - set(training_ids)),
            seed=sub_seed(cfg.seed, "policy", iteration), scene=self.scene, camera=self.camera,
            render_cfg=replace(cfg.train_config(0, 0), stratified=False),
            entropy_opts=cfg.entropy_options(), downsample=cfg.entropy_downsample,
        )

    def ground_truth_points(self) -> np.ndarray:
        return sample_surface_points(self.scene, self.cfg.eval_points, sub_seed(self.cfg.seed, "gt-points"))

    def extract_mesh(self, f: RadianceField) -> TriangleMesh:
        grid = density_grid_export(f, self.cfg.mesh_resolution, self.cfg.mesh_side)
        return marching_cubes(grid, self.cfg.mesh_iso)

    def evaluate_mesh(self, mesh: TriangleMesh, gt_points, iteration: int):
        if mesh.is_empty:
            pred = np.zeros((0, 3))
        else:
            pred = sample_mesh_points(mesh, self.cfg.eval_points, sub_seed(self.cfg.seed, "pred-points", iteration))
        return fscore(pred, gt_points, self.cfg.fscore_threshold)


def score_candidates(setup: Setup, state: PolicyState, out_dir: Path | None, iteration: int) -> dict:
    """Entropy-map every candidate, fill ``state.entropy_scores`` and optionally write maps."""
    cfg = setup.cfg
    opts = cfg.entropy_options()
    for vid in sorted(state.candidate_ids):
        m = entropy_map(state.field, setup.camera, setup.view_space.view(vid).pose, state.render_cfg,
                        cfg.entropy_downsample, opts)
        state.entropy_scores[vid] = view_mean_entropy(m, opts)
        if out_dir is not None and cfg.write_entropy_maps:
            io.write_pgm(out_dir / f"entropy_{iteration:03d}_{vid}.pgm", m.normalized())
    return dict(state.entropy_scores)


def write_scores(path, setup: Setup, scores: dict) -> None:
    section = setup.clustering.section_of()
    io.write_csv(path, ("view_id", "section", "score"),
                 [(v, section.get(v, -1), f"{s:.9g}") for v, s in sorted(scores.items())])


@dataclass
class IterationRow:
    iteration: int
    n_images: int
    policy: str
    selected: list
    mean_entropy: float
    psnr: float
    fscore: float
    seconds: float

    def csv_row(self, wall_time: bool):
        return (self.iteration, self.n_images, self.policy, ";".join(str(v) for v in self.selected),
                f"{self.mean_entropy:.6f}", f"{self.psnr:.4f}", f"{self.fscore:.6f}",
                f"{self.seconds:.2f}" if wall_time else "")


@dataclass
class ExperimentReport:
    rows: list
    mesh_path: str
    status: str = "ok"
    fscore_reports: list = None


def _init_key(cfg: ExperimentConfig):
    shared = replace(cfg, policy="region-entropy", k=12, lam=0.5, iterations=0, out="", refine_steps=0,
                     write_entropy_maps=False, write_figures=False, report_wall_time=False)
    return tuple(asdict(shared).items())


def run_active_loop(cfg: ExperimentConfig, cache: dict | None = None) -> ExperimentReport:
    """Run the full loop and write every artifact into ``cfg.out``.

    ``cache`` (optional, in-memory) shares the initial training and ground-truth
    points between runs that differ only in policy or iteration count.
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    setup = Setup.from_config(cfg)
    write_view_space(setup.view_space, out / "views.txt")

    key = _init_key(cfg)
    cached = cache.get(key) if cache is not None else None
    image_cache = cached["images"] if cached else {}
    train_ids = initial_view_ids(setup.view_space, cfg.initial_views)
    start = time.perf_counter()
    if cached:
        (out / "ckpt_000.bin").write_bytes(cached["ckpt"])
        psnr, gt_points = cached["psnr"], cached["gt_points"]
    else:
        f, report = setup.train_phase(train_ids, 0, image_cache=image_cache)
        save_checkpoint(f, out / "ckpt_000.bin")
        psnr, gt_points = report.final_psnr, setup.ground_truth_points()
        if cache is not None:
            cache[key] = {"ckpt": (out / "ckpt_000.bin").read_bytes(), "psnr": psnr,
                          "gt_points": gt_points, "images": image_cache}
    # continue from the stored checkpoint so step-by-step replays see identical parameters
    f = load_checkpoint(out / "ckpt_000.bin")

    rows, f_reports = [], []
    selected = list(train_ids)
    status = "ok"
    mesh_path = out / "mesh_000.ply"
    for it in range(cfg.iterations + 1):
        state = setup.policy_state(f, train_ids, it)
        scores = score_candidates(setup, state, out, it)
        write_scores(out / f"scores_{it:03d}.csv", setup, scores)
        mesh = setup.extract_mesh(f)
        mesh_path = out / f"mesh_{it:03d}.ply"
        io.write_ply(mesh_path, mesh)
        fs = setup.evaluate_mesh(mesh, gt_points, it)
        f_reports.append(fs)
        mean_h = float(np.mean(list(scores.values()))) if scores else float("nan")
        rows.append(IterationRow(it, len(train_ids), cfg.policy, selected, mean_h,
                                 psnr, fs.fscore, time.perf_counter() - start))
        log.info("iter %d: %d images, mean entropy %.4f, psnr %.2f, F %.4f",
                 it, len(train_ids), rows[-1].mean_entropy, psnr, fs.fscore)
        if it == cfg.iterations:
            break
        start = time.perf_counter()
        try:
            selection = select_next_views(cfg.policy, state, cfg.k, cfg.lam)
        except ValueError as exc:
            status = f"truncated after iteration {it}: {exc}"
            log.warning(status)
            break
        if cfg.write_figures:
            from .plots import plot_selection
            plot_selection(setup.view_space, setup.clustering, train_ids, selection.chosen,
                           out / f"selection_{it:03d}.png")
        selected = list(selection.chosen)
        train_ids = sorted(set(train_ids) | set(selected))
        f, report = setup.train_phase(train_ids, it + 1, warm=f, image_cache=image_cache)
        save_checkpoint(f, out / f"ckpt_{it + 1:03d}.bin")
        f = load_checkpoint(out / f"ckpt_{it + 1:03d}.bin")
        psnr = report.final_psnr

    io.write_csv(out / "report.csv", REPORT_COLUMNS, [r.csv_row(cfg.report_wall_time) for r in rows])
    io.write_csv(out / "timing.csv", ("iter", "seconds"), [(r.iteration, f"{r.seconds:.3f}") for r in rows])
    (out / "status.txt").write_text(status + "\n")
    if cfg.write_figures:
        from .plots import plot_report
        plot_report(rows, out / "report.png")
    return ExperimentReport(rows, str(mesh_path), status, f_reports)
