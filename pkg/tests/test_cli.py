import os
import shutil

import numpy as np
import pytest

from liodom.cli import main


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    """A short stationary dataset shared by the CLI tests."""
    d = str(tmp_path_factory.mktemp("ds") / "stationary")
    assert main(["sim", "--preset", "stationary", "--seed", "1",
                 "--out", d]) == 0
    scans = sorted(os.listdir(os.path.join(d, "scans")),
                   key=lambda s: int(s.split(".")[0]))
    for f in scans[25:]:
        os.remove(os.path.join(d, "scans", f))
    return d


def test_usage_errors_exit_1():
    assert main(["sim", "--preset", "warehouse", "--out", "/tmp/x"]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["run"]) == 1


def test_missing_dataset_exits_nonzero(tmp_path):
    missing = str(tmp_path / "nope")
    assert main(["run", missing, "--out", str(tmp_path / "out")]) == 1


def test_broken_dataset_exits_2(tmp_path):
    broken = tmp_path / "broken"
    broken.mkdir()
    assert main(["run", str(broken), "--out", str(tmp_path / "out")]) == 2


def test_bad_config_exits_2(dataset, tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("frontend:\n  voxels: 0.1\n")
    assert main(["run", dataset, "--config", str(cfg),
                 "--out", str(tmp_path / "out")]) == 2


def test_sim_run_eval_obs_pipeline(dataset, tmp_path):
    out = str(tmp_path / "run")
    assert main(["run", dataset, "--out", out]) == 0
    for f in ("trajectory_lio.txt", "trajectory_scan_to_scan.txt",
              "trajectory_unified.txt", "observability.csv",
              "switches.csv", "extrinsics.csv"):
        assert os.path.isfile(os.path.join(out, f)), f

    ev_out = str(tmp_path / "eval")
    assert main(["eval", os.path.join(out, "trajectory_lio.txt"),
                 os.path.join(dataset, "ground_truth.csv"),
                 "--out", ev_out, "--max-dt", "0.06"]) == 0
    assert os.path.isfile(os.path.join(ev_out, "eval.csv"))
    assert os.path.isfile(os.path.join(ev_out, "errors.csv"))

    obs_out = str(tmp_path / "obs")
    assert main(["obs", dataset, "--out", obs_out]) == 0
    assert os.path.isfile(os.path.join(obs_out, "observability.csv"))
    assert os.path.isfile(os.path.join(obs_out, "obs_summary.csv"))


def test_run_supervisor_off(dataset, tmp_path):
    out = str(tmp_path / "run_nosup")
    assert main(["run", dataset, "--out", out, "--supervisor", "off"]) == 0
    switches = open(os.path.join(out, "switches.csv")).read().strip()
    assert switches.splitlines() == ["time,from,to,reason"]


def test_stationary_estimate_stays_put(dataset, tmp_path):
    from liodom.evalkit import load_tum
    out = str(tmp_path / "run_stat")
    assert main(["run", dataset, "--out", out]) == 0
    traj = load_tum(os.path.join(out, "trajectory_lio.txt"))
    drift = max(np.linalg.norm(p.translation - traj[0][1].translation)
                for _, p in traj)
    assert drift < 0.05
