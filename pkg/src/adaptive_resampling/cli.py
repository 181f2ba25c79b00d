"""Command-line front end.

    adaptive-resampling tune --data train.csv --config tune.json --out results/
    adaptive-resampling simulate --config sim.json --out sim/
    adaptive-resampling report --log results/tuning_log.jsonl [--baseline nominal.jsonl]

Exit codes: 0 success, 2 malformed input or config, 3 tuning failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import math
import os
import platform
import sys
import tempfile
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .core import GridError, SelectionRule, build_grid
from .engine import (
    AlphaSchedule,
    Analyzer,
    StopRule,
    TuneConfig,
    TuningError,
    run_adaptive,
    run_nominal,
)
from .learners import Dataset, LearnerError, LearnerSpec, Task
from .metrics import Metric
from .resampling import InvalidPlanError, make_plan, method_from_dict
from .simulation import SimConfig, run_sim_study

WORKERS_ENV = "ADAPTIVE_RESAMPLING_WORKERS"

TUNE_KEYS = {"target", "task", "learner", "grid", "resampling", "metric", "analyzer", "B",
             "B_min", "alpha", "selection", "dedupe", "stop_on_single", "workers", "seed"}
SIM_KEYS = {"n_train", "n_test", "n_sims", "B", "B_min", "alpha", "analyzers", "learner",
            "grid", "folds", "noise_sd", "selection", "seed", "workers"}


class InputError(Exception):
    """Malformed data or configuration (exit code 2)."""


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise InputError(f"config {path} must be a JSON object")
    return data


def _check_keys(cfg: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise InputError(f"unknown {where} key(s): {', '.join(unknown)}")


def _workers(cfg_value) -> int:
    env = os.environ.get(WORKERS_ENV)
    value = env if env is not None else cfg_value
    try:
        workers = int(value)
    except (TypeError, ValueError):
        raise InputError(f"bad worker count {value!r}") from None
    if workers < 1:
        raise InputError("worker count must be >= 1")
    return workers


def read_csv(path, target: str) -> Dataset:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read data {path}: {exc}") from None
    if not rows:
        raise InputError(f"{path} is empty")
    header, body = rows[0], [r for r in rows[1:] if r]
    if target not in header:
        raise InputError(f"target column {target!r} not found in {path}")
    if not body:
        raise InputError(f"{path} has no data rows")
    try:
        values = np.array([[float(v) for v in r] for r in body])
    except ValueError as exc:
        raise InputError(f"non-numeric value in {path}: {exc}") from None
    if values.shape[1] != len(header) or any(len(r) != len(header) for r in body):
        raise InputError(f"ragged rows in {path}")
    t = header.index(target)
    feats = [k for k in range(len(header)) if k != t]
    if not feats:
        raise InputError("no feature columns")
    try:
        return Dataset(values[:, feats], values[:, t], tuple(header[k] for k in feats))
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _enum(cls, value, what):
    try:
        return cls(value)
    except ValueError:
        options = ", ".join(m.value for m in cls)
        raise InputError(f"bad {what} {value!r}; expected one of {options}") from None


def parse_tune_config(cfg: dict):
    _check_keys(cfg, TUNE_KEYS, "config")
    if "target" not in cfg or "grid" not in cfg or "resampling" not in cfg:
        raise InputError("config needs 'target', 'grid' and 'resampling'")
    task = _enum(Task, cfg.get("task", "regression"), "task")
    learner_cfg = dict(cfg.get("learner", {"kind": "knn"}))
    _check_keys(learner_cfg, {"kind", "standardize"}, "learner")
    try:
        learner = LearnerSpec.from_dict({**learner_cfg, "task": task.value})
        grid = build_grid(cfg["grid"])
        method = method_from_dict(cfg["resampling"])
    except (LearnerError, GridError, InvalidPlanError, TypeError, AttributeError) as exc:
        raise InputError(str(exc)) from None
    default_metric = "rmse" if task is Task.REGRESSION else "roc_auc"
    metric = _enum(Metric, cfg.get("metric", default_metric), "metric")
    alpha = cfg.get("alpha", 0.01)
    try:
        if isinstance(alpha, dict):
            _check_keys(alpha, {"start", "end"}, "alpha")
            alpha = AlphaSchedule(float(alpha["start"]), float(alpha["end"]))
        settings = dict(
            B_min=int(cfg.get("B_min", 10)), alpha=alpha,
            analyzer=_enum(Analyzer, cfg.get("analyzer", "gls"), "analyzer"),
            selection=_enum(SelectionRule, cfg.get("selection", "pick_winner"), "selection"),
            dedupe=bool(cfg.get("dedupe", False)),
            stop_on_single=_enum(StopRule, cfg.get("stop_on_single", "full_precision"),
                                 "stop_on_single"),
            workers=_workers(cfg.get("workers", 1)), seed=int(cfg.get("seed", 0)),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"bad config: {exc}") from None
    return learner, grid, method, metric, settings


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _manifest(command: str, config: dict, seed, started: str, outputs: list[Path]) -> dict:
    return {
        "command": command,
        "config": config,
        "seed": seed,
        "versions": {"adaptive_resampling": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "started": started,
        "finished": dt.datetime.now(dt.timezone.utc).isoformat(),
        "outputs": [str(p) for p in outputs],
    }


def _profile_csv(result) -> str:
    names = list(result.candidates[0].params)
    lines = [",".join(["id", *names, "mean", "std_error", "n", "status"])]
    for row in result.profile:
        c = result.candidates[row.candidate_id]
        fields = [str(c.id), *(repr(c.params[k]) if isinstance(c.params[k], float)
                               else str(c.params[k]) for k in names),
                  "" if math.isnan(row.mean) else repr(row.mean),
                  "" if math.isnan(row.std_error) else repr(row.std_error),
                  str(row.n), c.status.value]
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"


def cmd_tune(data_path, config_path, out_dir) -> int:
    started = dt.datetime.now(dt.timezone.utc).isoformat()
    try:
        cfg = _load_json(config_path)
        learner, grid, method, metric, settings = parse_tune_config(cfg)
        data = read_csv(data_path, cfg["target"])
        plan = make_plan(method, data.n, settings["seed"])
        if "B" in cfg and int(cfg["B"]) != plan.B:
            raise InputError(f"config B={cfg['B']} but the resampling plan has B={plan.B}")
        if plan.B < 2:
            raise InputError("resampling plan must have at least two resamples")
        if settings["analyzer"] is Analyzer.NONE:
            # B_min is irrelevant for a nominal run
            settings["B_min"] = min(settings["B_min"], plan.B - 1)
        config = TuneConfig(B=plan.B, **settings)
    except (InputError, InvalidPlanError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        runner = run_nominal if config.analyzer is Analyzer.NONE else run_adaptive
        result = runner(grid, plan, learner, metric, config, data)
    except (TuningError, LearnerError) as exc:
        print(f"tuning failed: {exc}", file=sys.stderr)
        return 3
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "result.json", out / "tuning_log.jsonl", out / "profile.csv"]
    _atomic_write(paths[0], json.dumps(result.to_dict(), indent=2, default=_json_default) + "\n")
    _atomic_write(paths[1], "".join(json.dumps(rec, default=_json_default) + "\n"
                                    for rec in result.log))
    _atomic_write(paths[2], _profile_csv(result))
    manifest = _manifest("tune", {**cfg, "data": str(data_path)}, settings["seed"], started, paths)
    _atomic_write(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    sel = result.candidates[result.selected]
    print(f"selected candidate {sel.id} ({sel.label()}); "
          f"{result.fits_performed} of {result.fits_nominal} fits")
    return 0


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def parse_sim_config(cfg: dict) -> SimConfig:
    _check_keys(cfg, SIM_KEYS, "config")
    kw = {}
    try:
        for key in ("n_train", "B", "B_min"):
            if key in cfg:
                kw[key] = tuple(int(v) for v in _as_list(cfg[key]))
        if "alpha" in cfg:
            kw["alpha"] = tuple(float(v) for v in _as_list(cfg["alpha"]))
        if "analyzers" in cfg:
            kw["analyzers"] = tuple(_enum(Analyzer, a, "analyzer") for a in _as_list(cfg["analyzers"]))
        if "learner" in cfg:
            _check_keys(cfg["learner"], {"kind", "standardize"}, "learner")
            kw["learner"] = LearnerSpec.from_dict(cfg["learner"])
        if "grid" in cfg:
            build_grid(cfg["grid"])
            kw["grid"] = {k: list(v) for k, v in cfg["grid"].items()}
        if "selection" in cfg:
            kw["selection"] = _enum(SelectionRule, cfg["selection"], "selection")
        for key in ("n_test", "n_sims", "folds", "seed"):
            if key in cfg:
                kw[key] = int(cfg[key])
        if "noise_sd" in cfg:
            kw["noise_sd"] = float(cfg["noise_sd"])
        kw["workers"] = _workers(cfg.get("workers", 1))
        return SimConfig(**kw)
    except (ValueError, TypeError, AttributeError, LearnerError, GridError) as exc:
        raise InputError(f"bad simulation config: {exc}") from None


def _as_list(v):
    return v if isinstance(v, list) else [v]


def cmd_simulate(config_path, out_dir) -> int:
    started = dt.datetime.now(dt.timezone.utc).isoformat()
    try:
        cfg = _load_json(config_path)
        sim = parse_sim_config(cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report = run_sim_study(sim)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "report.csv", out / "timing.csv", out / "replicates.jsonl"]
    _atomic_write(paths[0], report.to_csv())
    _atomic_write(paths[1], report.timing_csv())
    _atomic_write(paths[2], "".join(json.dumps(r, default=_json_default) + "\n"
                                    for r in report.replicates))
    manifest = _manifest("simulate", sim.to_dict(), sim.seed, started, paths)
    _atomic_write(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    sys.stdout.write(report.to_csv())
    return 0


def read_log(path) -> dict:
    """Split a tuning log into its start, fit, decision, merge and result records."""
    parsed = {"start": None, "fits": [], "decisions": [], "merges": [], "result": None}
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                kind = rec.get("type")
                if kind in ("start", "result"):
                    parsed[kind] = rec
                elif kind == "fit":
                    parsed["fits"].append(rec)
                elif kind == "decision":
                    parsed["decisions"].append(rec)
                elif kind == "merge":
                    parsed["merges"].append(rec)
    except (OSError, json.JSONDecodeError, AttributeError) as exc:
        raise InputError(f"cannot read log {path}: {exc}") from None
    if parsed["start"] is None or parsed["result"] is None:
        raise InputError(f"{path} is not a complete tuning log")
    return parsed


def _label(params: dict) -> str:
    return ", ".join(f"{k}={v}" for k, v in params.items())


def format_report(log: dict, baseline: dict | None = None) -> str:
    params = {c["id"]: c["params"] for c in log["start"]["candidates"]}
    out = [f"mode: {log['start']['mode']}  metric: {log['start']['metric']}", "",
           "elimination timeline:"]
    events = [d for d in log["decisions"] if d["removed"]]
    for m in log["merges"]:
        out.append(f"  i={m['iteration']}: merged [{_label(params[m['merged']])}] "
                   f"into [{_label(params[m['into']])}]")
    if not events:
        out.append("  no eliminations")
    for d in events:
        removed = "; ".join(_label(params[j]) for j in d["removed"])
        out.append(f"  i={d['iteration']}: removed {len(d['removed'])} ({removed})")
    res = log["result"]
    out += ["", "final profile:"]
    for row in res["profile"]:
        mean = "nan" if row["mean"] is None else f"{row['mean']:.6g}"
        se = "nan" if row["std_error"] is None else f"{row['std_error']:.3g}"
        mark = " *" if row["id"] == res["selected"] else ""
        out.append(f"  [{_label(params[row['id']])}] mean={mean} se={se} "
                   f"n={row['n']} {row['status']}{mark}")
    out += ["", f"selected: {_label(params[res['selected']])}",
            f"fits performed: {res['fits_performed']} of {res['fits_nominal']}"]
    if baseline is not None:
        base = baseline["result"]
        out.append(f"fit-count speed-up: {base['fits_performed'] / res['fits_performed']:.2f}")
        if base.get("wall_time") and res.get("wall_time"):
            out.append(f"wall-clock speed-up: {base['wall_time'] / res['wall_time']:.2f}")
    return "\n".join(out) + "\n"


def cmd_report(log_path, baseline_path=None) -> int:
    try:
        log = read_log(log_path)
        baseline = read_log(baseline_path) if baseline_path else None
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(format_report(log, baseline))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="adaptive-resampling", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    tune = sub.add_parser("tune", help="tune a learner on a CSV dataset")
    tune.add_argument("--data", required=True)
    tune.add_argument("--config", required=True)
    tune.add_argument("--out", required=True)
    sim = sub.add_parser("simulate", help="run the simulation study")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)
    rep = sub.add_parser("report", help="summarize a tuning log")
    rep.add_argument("--log", required=True)
    rep.add_argument("--baseline")
    args = parser.parse_args(argv)
    if args.command == "tune":
        return cmd_tune(args.data, args.config, args.out)
    if args.command == "simulate":
        return cmd_simulate(args.config, args.out)
    return cmd_report(args.log, args.baseline)


if __name__ == "__main__":
    sys.exit(main())
