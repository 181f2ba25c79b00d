import csv
import json

import numpy as np
import pytest

from adaptive_resampling.cli import WORKERS_ENV, format_report, main, read_log

COSTS = [2.0 ** (e / 2) for e in range(-4, 17)]


@pytest.fixture
def data_csv(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(80, 4))
    y = x[:, 0] - x[:, 1] + 0.5 * rng.normal(size=80)
    path = tmp_path / "train.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a", "b", "c", "d", "y"])
        w.writerows(np.column_stack([x, y]).tolist())
    return path


def _config(tmp_path, name="tune.json", **overrides):
    cfg = {"target": "y", "learner": {"kind": "ridge"}, "grid": {"lambda": COSTS},
           "resampling": {"method": "bootstrap", "times": 30}, "analyzer": "gls",
           "B_min": 5, "seed": 4}
    cfg.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


class TestTune:
    def test_cost_grid_profile(self, tmp_path, data_csv, capsys):
        out = tmp_path / "out"
        assert main(["tune", "--data", str(data_csv), "--config", str(_config(tmp_path)),
                     "--out", str(out)]) == 0
        with open(out / "profile.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 21
        eliminated = [r for r in rows if r["status"] == "eliminated"]
        assert eliminated and all(int(r["n"]) < 30 for r in eliminated)
        result = json.loads((out / "result.json").read_text())
        assert result["fits_performed"] < 21 * 30
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "tune" and manifest["seed"] == 4
        assert "selected candidate" in capsys.readouterr().out

    def test_no_analyzer_logs_no_decisions(self, tmp_path, data_csv):
        out = tmp_path / "out"
        cfg = _config(tmp_path, analyzer="none")
        assert main(["tune", "--data", str(data_csv), "--config", str(cfg), "--out", str(out)]) == 0
        log = read_log(out / "tuning_log.jsonl")
        assert log["decisions"] == []
        assert log["result"]["fits_performed"] == 21 * 30

    def test_profile_csv_is_reproducible(self, tmp_path, data_csv):
        cfg = _config(tmp_path)
        for name in ("a", "b"):
            main(["tune", "--data", str(data_csv), "--config", str(cfg), "--out", str(tmp_path / name)])
        assert (tmp_path / "a" / "profile.csv").read_bytes() == (tmp_path / "b" / "profile.csv").read_bytes()

    def test_missing_target(self, tmp_path, data_csv, capsys):
        cfg = _config(tmp_path, target="outcome")
        assert main(["tune", "--data", str(data_csv), "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 2
        assert "outcome" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path, data_csv, capsys):
        cfg = _config(tmp_path, alpah=0.05)
        assert main(["tune", "--data", str(data_csv), "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 2
        assert "alpah" in capsys.readouterr().err

    def test_non_numeric_data(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("a,y\nred,1\nblue,2\n")
        assert main(["tune", "--data", str(path), "--config", str(_config(tmp_path)),
                     "--out", str(tmp_path / "o")]) == 2

    def test_tuning_failure_exit_code(self, tmp_path, data_csv):
        cfg = _config(tmp_path, learner={"kind": "knn"}, grid={"K": [500]}, analyzer="none")
        assert main(["tune", "--data", str(data_csv), "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 3

    def test_worker_env_override(self, tmp_path, data_csv, monkeypatch):
        monkeypatch.setenv(WORKERS_ENV, "3")
        out = tmp_path / "out"
        assert main(["tune", "--data", str(data_csv), "--config", str(_config(tmp_path)),
                     "--out", str(out)]) == 0
        assert read_log(out / "tuning_log.jsonl")["start"]["config"]["workers"] == 3
        monkeypatch.setenv(WORKERS_ENV, "zero")
        assert main(["tune", "--data", str(data_csv), "--config", str(_config(tmp_path)),
                     "--out", str(out)]) == 2


def _sim_config(tmp_path, **overrides):
    cfg = {"n_train": 60, "n_test": 1000, "n_sims": 1, "B": 10, "B_min": 4, "folds": 5,
           "grid": {"lambda": [0.1, 10.0], "gamma": [0.001, 0.01]}, "seed": 2}
    cfg.update(overrides)
    path = tmp_path / "sim.json"
    path.write_text(json.dumps(cfg))
    return path


class TestSimulate:
    def test_no_analyzer_single_replicate(self, tmp_path):
        out = tmp_path / "s"
        assert main(["simulate", "--config", str(_sim_config(tmp_path, analyzers=["none"])),
                     "--out", str(out)]) == 0
        (row,) = list(csv.DictReader(open(out / "report.csv")))
        assert float(row["match_rate"]) == 1.0 and row["n_sims"] == "1"

    def test_two_analyzers_two_rows(self, tmp_path):
        out = tmp_path / "s"
        assert main(["simulate", "--config", str(_sim_config(tmp_path, analyzers=["gls", "bt"])),
                     "--out", str(out)]) == 0
        rows = list(csv.DictReader(open(out / "report.csv")))
        assert [r["analyzer"] for r in rows] == ["gls", "bt"]
        assert (out / "manifest.json").exists() and (out / "timing.csv").exists()

    def test_same_seed_same_bytes(self, tmp_path):
        cfg = _sim_config(tmp_path)
        for name in ("a", "b"):
            assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
        assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()

    def test_bad_config(self, tmp_path):
        assert main(["simulate", "--config", str(_sim_config(tmp_path, B=12)),
                     "--out", str(tmp_path / "s")]) == 2
        assert main(["simulate", "--config", str(_sim_config(tmp_path, n_trian=5)),
                     "--out", str(tmp_path / "s")]) == 2


def _timeline_log(removals, fits=299, nominal=1050):
    cands = [{"id": j, "params": {"cost": c}} for j, c in enumerate(COSTS)]
    active = list(range(21))
    decisions = []
    for it in range(10, 16):
        gone = removals.get(it, [])
        decisions.append({"type": "decision", "iteration": it, "removed": gone,
                          "kept": [j for j in active if j not in gone]})
        active = [j for j in active if j not in gone]
    profile = [{"id": j, "mean": 0.8, "std_error": 0.01, "n": 50, "status": "active"} for j in range(21)]
    return {
        "start": {"type": "start", "mode": "adaptive", "metric": "roc_auc", "candidates": cands},
        "fits": [], "merges": [], "decisions": decisions,
        "result": {"type": "result", "selected": 20, "fits_performed": fits,
                   "fits_nominal": nominal, "profile": profile, "wall_time": 2.0},
    }


class TestReport:
    def test_timeline(self):
        removals = {10: list(range(15)), 11: [15, 16], 13: [17], 14: [18]}
        text = format_report(_timeline_log(removals))
        events = [line for line in text.splitlines() if line.startswith("  i=")]
        assert [e.split(":")[0].strip() for e in events] == ["i=10", "i=11", "i=13", "i=14"]
        assert "removed 15 (" in events[0] and "removed 2 (" in events[1]
        assert "cost=0.25" in events[0]

    def test_no_eliminations(self):
        assert "no eliminations" in format_report(_timeline_log({}))

    def test_speedup(self):
        text = format_report(_timeline_log({}), baseline=_timeline_log({}, fits=1050))
        assert "fit-count speed-up: 3.51" in text

    def test_unreadable_log(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{not json\n")
        assert main(["report", "--log", str(bad)]) == 2
        assert main(["report", "--log", str(tmp_path / "missing.jsonl")]) == 2

    def test_round_trip_from_tune(self, tmp_path, data_csv, capsys):
        ada, nom = tmp_path / "ada", tmp_path / "nom"
        main(["tune", "--data", str(data_csv), "--config", str(_config(tmp_path)), "--out", str(ada)])
        main(["tune", "--data", str(data_csv), "--config",
              str(_config(tmp_path, "n.json", analyzer="none")), "--out", str(nom)])
        capsys.readouterr()
        assert main(["report", "--log", str(ada / "tuning_log.jsonl"),
                     "--baseline", str(nom / "tuning_log.jsonl")]) == 0
        text = capsys.readouterr().out
        result = json.loads((ada / "result.json").read_text())
        assert f"fits performed: {result['fits_performed']} of 630" in text
        expected = 630 / result["fits_performed"]
        assert f"fit-count speed-up: {expected:.2f}" in text
        removed = sum(len(d["removed"]) for d in result["eliminations"])
        assert text.count("removed") >= (1 if removed else 0)
