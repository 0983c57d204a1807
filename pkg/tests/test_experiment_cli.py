import numpy as np
import pytest

from raynbv import io
from raynbv.cli import main
from raynbv.experiment import (ExperimentConfig, load_config, parse_overrides, run_active_loop, sub_seed)

SMALL = ["width=24", "height=24", "grid_resolution=8", "init_steps=40", "refine_steps=20", "n_samples=16",
         "rays_per_batch=128", "mesh_resolution=24", "eval_points=2000", "write_figures=false",
         "write_entropy_maps=false"]


def small_cfg(tmp_path, **kw):
    return load_config(None, **parse_overrides(SMALL), out=str(tmp_path / "run"), **kw)


def cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def sets():
    return [a for s in SMALL for a in ("--set", s)]


def test_config_parsing(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("# comment\nscene = loader\niterations = 3  # trailing\nstratified = false\nlam=0.25\n")
    cfg = load_config(path, seed=4)
    assert (cfg.scene, cfg.iterations, cfg.stratified, cfg.lam, cfg.seed) == ("loader", 3, False, 0.25, 4)
    assert load_config(None, **parse_overrides(cfg.to_text().splitlines())) == cfg
    with pytest.raises(ValueError):
        parse_overrides(["nonsense = 1"])
    with pytest.raises(ValueError):
        parse_overrides(["stratified = maybe"])
    with pytest.raises(ValueError):
        ExperimentConfig(policy="oracle")
    with pytest.raises(ValueError):
        ExperimentConfig(iterations=-1)


def test_sub_seed_stable():
    assert sub_seed(0, "train", 1) == sub_seed(0, "train", 1)
    assert len({sub_seed(0, "train", 0), sub_seed(0, "train", 1), sub_seed(1, "train", 0),
                sub_seed(0, "policy", 0)}) == 4
    assert 0 <= sub_seed(123, "x") < 2 ** 63


def test_viewspace_command(tmp_path, capsys):
    code, out, _ = cli(capsys, "viewspace", "--out", tmp_path / "v.txt")
    assert code == 0
    lines = (tmp_path / "v.txt").read_text().strip().splitlines()
    assert len([ln for ln in lines if not ln.startswith("#")]) == 150


def test_eval_identical_points(tmp_path, capsys):
    pts = np.random.default_rng(0).random((200, 3))
    io.write_points(tmp_path / "p.xyz", pts)
    code, out, _ = cli(capsys, "eval", "--pred", tmp_path / "p.xyz", "--gt", tmp_path / "p.xyz")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "precision,recall,fscore,threshold"
    assert lines[1].startswith("1.000000,1.000000,1.000000,")


def test_select_random_reproducible(capsys):
    runs = [cli(capsys, "select", "--policy", "pure-random", "--k", 12, "--seed", 7) for _ in range(2)]
    assert runs[0][0] == 0 and runs[0][1] == runs[1][1]
    ids = [int(v) for v in runs[0][1].strip().split(",")]
    assert len(set(ids)) == 12


def test_missing_inputs_fail_cleanly(tmp_path, capsys):
    code, _, err = cli(capsys, "mesh", "--ckpt", tmp_path / "nope.bin")
    assert code != 0 and "not found" in err
    code, _, err = cli(capsys, "select", "--policy", "region-entropy")
    assert code != 0 and "--ckpt" in err
    code, _, err = cli(capsys, "viewspace", "--set", "bogus=1")
    assert code != 0 and "bogus" in err


def test_loop_zero_iterations(tmp_path):
    report = run_active_loop(small_cfg(tmp_path, iterations=0))
    assert [r.iteration for r in report.rows] == [0]
    rows = io.read_csv(tmp_path / "run" / "report.csv")
    assert len(rows) == 1 and rows[0]["n_images"] == "6" and rows[0]["seconds"] == ""
    assert (tmp_path / "run" / "mesh_000.ply").is_file()
    assert (tmp_path / "run" / "scores_000.csv").is_file()


def test_loop_one_iteration_adds_twelve(tmp_path):
    report = run_active_loop(small_cfg(tmp_path, iterations=1, policy="random-section"))
    assert [r.n_images for r in report.rows] == [6, 18]
    assert len(report.rows[1].selected) == 12
    assert report.status == "ok"


def test_loop_truncates_when_pool_exhausted(tmp_path):
    # 6 poses per circle: the initial views take the whole middle circle and every section holds 2 views
    report = run_active_loop(small_cfg(tmp_path, iterations=4, poses_per_circle=6, policy="random-section"))
    assert [r.n_images for r in report.rows] == [6, 18, 30]
    assert report.status.startswith("truncated after iteration 2")
    assert (tmp_path / "run" / "status.txt").read_text().startswith("truncated")
    # no candidates are left to score after the last acquisition
    assert np.isnan(report.rows[-1].mean_entropy)


def test_replay_matches_loop(tmp_path, capsys):
    cfg = small_cfg(tmp_path, iterations=1, seed=3)
    report = run_active_loop(cfg)
    common = sets() + ["--seed", 3]
    d = tmp_path
    assert cli(capsys, "init-train", "--ids", "initial", "--out", d / "c0.bin", *common)[0] == 0
    code, out, _ = cli(capsys, "select", "--ckpt", d / "c0.bin", "--train-ids", "initial", "--iter", 0, *common)
    assert code == 0
    chosen = [int(v) for v in out.strip().split(",")]
    assert chosen == report.rows[1].selected
    ids = sorted(set(chosen) | set(report.rows[0].selected))
    assert cli(capsys, "init-train", "--warm", d / "c0.bin", "--ids", ",".join(map(str, ids)), "--iter", 1,
               "--out", d / "c1.bin", *common)[0] == 0
    assert cli(capsys, "mesh", "--ckpt", d / "c1.bin", "--out", d / "m1.ply", *common)[0] == 0
    code, out, _ = cli(capsys, "eval", "--pred", d / "m1.ply", "--iter", 1, *common)
    assert code == 0
    assert float(out.strip().splitlines()[1].split(",")[2]) == pytest.approx(report.rows[1].fscore, abs=1e-6)


def test_plot_command(tmp_path, capsys):
    run_active_loop(small_cfg(tmp_path, iterations=0))
    code, out, _ = cli(capsys, "plot", "--report", tmp_path / "run" / "report.csv", "--out", tmp_path / "r.png")
    assert code == 0 and (tmp_path / "r.png").stat().st_size > 0
