"""Command-line interface. Each subcommand wraps one library step so a loop can be replayed by hand.

    raynbv viewspace --out views.txt
    raynbv init-train --out ckpt_000.bin
    raynbv select --ckpt ckpt_000.bin --train-ids initial --iter 0
    raynbv init-train --warm ckpt_000.bin --ids 0,5,... --iter 1 --out ckpt_001.bin
    raynbv mesh --ckpt ckpt_001.bin --out mesh_001.ply
    raynbv eval --pred mesh_001.ply --iter 1
    raynbv loop --policy region-entropy --iterations 3 --out runs/demo
"""

from __future__ import annotations

import argparse
import logging
from pathlib import Path
import sys

import numpy as np

from . import io
from .experiment import (REPORT_COLUMNS, Setup, initial_view_ids, load_config, parse_overrides, run_active_loop,
                         sub_seed, write_scores)
from .field import load_checkpoint, save_checkpoint
from .geometry import write_view_space
from .mesh import fscore, sample_mesh_points
from .policy import POLICIES, select_next_views
from .scenes import PRESET_NAMES, ground_truth_mesh
from .uncertainty import entropy_map, view_mean_entropy

log = logging.getLogger("raynbv")

NEEDS_FIELD = {"region-entropy", "similarity", "topk-entropy", "entropy-distance"}


def _config(args):
    overrides = parse_overrides(args.set or [])
    for key in ("scene", "policy", "iterations", "seed"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    if args.command == "loop" and args.out is not None:
        overrides["out"] = args.out
    return load_config(args.config, **overrides)


def _ids(text, setup):
    if text in (None, "", "initial"):
        return initial_view_ids(setup.view_space, setup.cfg.initial_views)
    ids = sorted({int(t) for t in text.replace(";", ",").split(",") if t.strip()})
    known = {v.id for v in setup.view_space.views}
    bad = [v for v in ids if v not in known]
    if bad:
        raise ValueError(f"unknown view ids: {bad}")
    return ids


def _need(path, what):
    if path is None:
        raise ValueError(f"{what} is required")
    if not Path(path).is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def cmd_viewspace(args, setup):
    out = args.out or "views.txt"
    write_view_space(setup.view_space, out)
    print(f"wrote {len(setup.view_space.views)} views to {out}")


def cmd_render(args, setup):
    img = setup.acquire(args.view)
    out = args.out or f"view_{args.view}.ppm"
    io.write_ppm(out, img)
    print(f"wrote {out}")


def cmd_init_train(args, setup):
    ids = _ids(args.ids, setup)
    warm = load_checkpoint(_need(args.warm, "--warm checkpoint")) if args.warm else None
    f, report = setup.train_phase(ids, args.iter, warm=warm)
    out = args.out or f"ckpt_{args.iter:03d}.bin"
    save_checkpoint(f, out)
    print(f"images={len(ids)} steps={report.steps[-1] if report.steps else 0} psnr={report.final_psnr:.4f} ckpt={out}")


def cmd_entropy_map(args, setup):
    f = load_checkpoint(_need(args.ckpt, "--ckpt"))
    cfg = setup.cfg
    m = entropy_map(f, setup.camera, setup.view_space.view(args.view).pose, cfg.train_config(0, 0),
                    cfg.entropy_downsample, cfg.entropy_options())
    out = args.out or f"entropy_{args.view}.pgm"
    io.write_pgm(out, m.normalized())
    if args.raw:
        io.write_float_map(args.raw, m.entropy, m.n_samples)
    print(f"view={args.view} mean_entropy={view_mean_entropy(m, cfg.entropy_options()):.6f}")


def cmd_select(args, setup):
    cfg = setup.cfg
    ids = _ids(args.train_ids, setup)
    if args.ckpt:
        f = load_checkpoint(_need(args.ckpt, "--ckpt"))
    elif cfg.policy in NEEDS_FIELD:
        raise ValueError(f"policy {cfg.policy} needs --ckpt")
    else:
        f = cfg.new_field()
    state = setup.policy_state(f, ids, args.iter)
    sel = select_next_views(cfg.policy, state, args.k if args.k is not None else cfg.k,
                            args.lam if args.lam is not None else cfg.lam)
    if args.scores:
        write_scores(args.scores, setup, sel.scores)
    print(",".join(str(v) for v in sel.chosen))


def cmd_mesh(args, setup):
    cfg = setup.cfg
    if args.ground_truth:
        mesh = ground_truth_mesh(setup.scene, cfg.mesh_resolution, cfg.mesh_side)
    else:
        mesh = setup.extract_mesh(load_checkpoint(_need(args.ckpt, "--ckpt")))
    out = args.out or "mesh.ply"
    io.write_ply(out, mesh)
    print(f"vertices={len(mesh.vertices)} triangles={len(mesh.triangles)} mesh={out}")


def _points(path, n, seed):
    """Point file as is, or ``n`` samples from a PLY mesh (none for an empty mesh)."""
    if str(path).lower().endswith(".ply"):
        mesh = io.read_ply(path)
        return np.zeros((0, 3)) if mesh.is_empty else sample_mesh_points(mesh, n, seed)
    return io.read_points(path)


def cmd_eval(args, setup):
    cfg = setup.cfg
    pred = _points(_need(args.pred, "--pred"), cfg.eval_points, sub_seed(cfg.seed, "pred-points", args.iter))
    if args.gt:
        gt = _points(_need(args.gt, "--gt"), cfg.eval_points, sub_seed(cfg.seed, "gt-points"))
    else:
        gt = setup.ground_truth_points()
    rep = fscore(pred, gt, args.threshold if args.threshold is not None else cfg.fscore_threshold)
    print("precision,recall,fscore,threshold")
    print(f"{rep.precision:.6f},{rep.recall:.6f},{rep.fscore:.6f},{rep.threshold:g}")


def cmd_loop(args, setup):
    report = run_active_loop(setup.cfg)
    print(",".join(REPORT_COLUMNS))
    for row in report.rows:
        print(",".join(str(v) for v in row.csv_row(setup.cfg.report_wall_time)))
    if report.status != "ok":
        print(report.status, file=sys.stderr)


def cmd_plot(args, setup):
    from .plots import plot_report

    rows = io.read_csv(_need(args.report, "--report"))
    if not rows:
        raise ValueError(f"{args.report} has no rows")
    out = args.out or str(Path(args.report).with_suffix(".png"))
    plot_report(rows, out)
    print(f"wrote {out}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--scene", choices=PRESET_NAMES)
    common.add_argument("--policy", choices=POLICIES)
    common.add_argument("--iterations", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output file (run directory for loop)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one configuration key")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="raynbv", description="Entropy-guided next-best-view reconstruction.")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("viewspace", parents=[common], help="write the candidate view file")
    p = sub.add_parser("render", parents=[common], help="ground-truth render of one view (PPM)")
    p.add_argument("--view", type=int, required=True)
    p = sub.add_parser("init-train", parents=[common], help="train (or refine with --warm) a field checkpoint")
    p.add_argument("--ids", help="comma-separated training view ids, or 'initial'")
    p.add_argument("--warm", help="checkpoint to refine")
    p.add_argument("--iter", type=int, default=0, help="iteration index for the training seed")
    p = sub.add_parser("entropy-map", parents=[common], help="entropy map of one view (PGM)")
    p.add_argument("--ckpt")
    p.add_argument("--view", type=int, required=True)
    p.add_argument("--raw", help="also write raw entropies as a float map")
    p = sub.add_parser("select", parents=[common], help="run a policy and print the chosen ids")
    p.add_argument("--ckpt")
    p.add_argument("--train-ids", help="comma-separated acquired view ids, or 'initial'")
    p.add_argument("--k", type=int)
    p.add_argument("--lam", type=float)
    p.add_argument("--iter", type=int, default=0, help="iteration index for the policy seed")
    p.add_argument("--scores", help="write view_id,section,score CSV")
    p = sub.add_parser("mesh", parents=[common], help="marching-cubes mesh of a checkpoint (PLY)")
    p.add_argument("--ckpt")
    p.add_argument("--ground-truth", action="store_true", help="mesh the scene SDF instead")
    p = sub.add_parser("eval", parents=[common], help="F-score of predicted vs ground-truth points")
    p.add_argument("--pred", help="PLY mesh or xyz point file")
    p.add_argument("--gt", help="PLY mesh or xyz point file (default: sampled from the scene)")
    p.add_argument("--threshold", type=float)
    p.add_argument("--iter", type=int, default=0, help="iteration index for the mesh sampling seed")
    sub.add_parser("loop", parents=[common], help="full active reconstruction run")
    p = sub.add_parser("plot", parents=[common], help="figure from a report.csv")
    p.add_argument("--report", required=True)
    return parser


COMMANDS = {
    "viewspace": cmd_viewspace, "render": cmd_render, "init-train": cmd_init_train,
    "entropy-map": cmd_entropy_map, "select": cmd_select, "mesh": cmd_mesh, "eval": cmd_eval,
    "loop": cmd_loop, "plot": cmd_plot,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        setup = Setup.from_config(_config(args))
        COMMANDS[args.command](args, setup)
    except (ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"raynbv {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
