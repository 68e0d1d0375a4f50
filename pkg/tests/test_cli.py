import json

import numpy as np
import pytest

from sysfair.cli import main
from sysfair.experiment import read_trials
from sysfair.worldgen import ingest_score_table

SMALL = """\
# a quick run
n_trials = 2
n_iterations = 6
batch_size = 40
n_items = 50
pool_size = 32
n_mc = 16
"""


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(SMALL)
    return path


def test_generate_writes_table_and_sidecar(tmp_path, cfg):
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "w")]) == 0
    world = ingest_score_table(tmp_path / "w" / "world.csv")
    assert world.shape == (20, 50, 2)
    assert (tmp_path / "w" / "world.cfg").exists()


def test_run_outputs_and_seed_flag(tmp_path, cfg):
    out = tmp_path / "run"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    for name in ("trials.csv", "summary.json", "pareto.svg", "fronts.csv", "strategies.csv"):
        assert (out / name).exists()
    log = read_trials(out / "trials.csv")
    assert len(log.records) == 3 * 2 * 6
    assert json.loads((out / "summary.json").read_text())["n_records"] == 36

    assert main(["--seed", "7", "run", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "7", "--threads", "2"]) == 0
    a = (tmp_path / "a" / "trials.csv").read_bytes()
    assert a == (tmp_path / "b" / "trials.csv").read_bytes()
    assert a != (out / "trials.csv").read_bytes()


def test_run_from_ingested_world(tmp_path, cfg):
    main(["generate", "--config", str(cfg), "--out", str(tmp_path / "w")])
    exp = tmp_path / "ingest.cfg"
    exp.write_text("world_path = w/world.csv\nn_trials = 1\nn_iterations = 6\nbatch_size = 30\n"
                   "pool_size = 32\nn_mc = 16\nstrategies = random\n")
    assert main(["run", "--config", str(exp), "--out", str(tmp_path / "r")]) == 0
    assert len(read_trials(tmp_path / "r" / "trials.csv").records) == 6


def test_report_rebuilds_summary(tmp_path, cfg):
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "run")])
    assert main(["report", "--log", str(tmp_path / "run"), "--out", str(tmp_path / "rep")]) == 0
    assert (tmp_path / "rep" / "summary.json").read_bytes() == (tmp_path / "run" / "summary.json").read_bytes()


def test_diagnose(tmp_path, cfg):
    assert main(["diagnose", "--config", str(cfg), "--alpha", "0.5,0.5", "--out", str(tmp_path / "d")]) == 0
    out = json.loads((tmp_path / "d" / "diagnostics.json").read_text())
    assert out["alpha"] == [0.5, 0.5]
    terms = out["term_x_shift_1"] + out["term_preference"] + out["term_x_shift_2"]
    assert np.isclose(terms, out["total_gap"], atol=1e-10)
    assert (tmp_path / "d" / "grid_scan.csv").exists()


def test_config_error_reports_field(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("group_prevalence = 0.5, 0.6\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "group_prevalence" in capsys.readouterr().err


def test_bad_alpha(tmp_path, cfg, capsys):
    assert main(["diagnose", "--config", str(cfg), "--alpha", "0,0", "--out", str(tmp_path / "d")]) == 2
    assert "alpha" in capsys.readouterr().err


def test_seed_must_be_u64(cfg):
    with pytest.raises(SystemExit):
        main(["--seed", "-1", "run", "--config", str(cfg), "--out", "x"])
