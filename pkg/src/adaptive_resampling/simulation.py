"""Simulation study: adaptive versus full resampling on synthetic regressions."""

from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import SelectionRule, build_grid
from .engine import Analyzer, TuneConfig, run_adaptive, run_nominal, speedup
from .learners import Dataset, Kind, Learner, LearnerSpec
from .metrics import Metric
from .resampling import RepeatedKFold, make_plan

N_NOISE = 46
X_RANGES = ((0.0, 100.0), (40 * math.pi, 560 * math.pi), (0.0, 1.0), (1.0, 11.0))

DEFAULT_GRID = {
    "lambda": [0.01, 0.1, 1.0, 10.0],
    "gamma": [0.0005, 0.001, 0.003, 0.01, 0.03, 0.1],
}


def friedman_signal(x: np.ndarray) -> np.ndarray:
    x1, x2, x3, x4 = x[:, 0], x[:, 1], x[:, 2], x[:, 3]
    return np.arctan((x2 * x3 - 1.0 / (x2 * x4)) / x1)


def gen_friedman(n: int, seed, noise_sd: float = 0.1) -> Dataset:
    """Four uniform informative predictors, 46 standard normal noise columns.

    ``seed`` is anything :func:`numpy.random.default_rng` accepts.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    informative = np.column_stack([rng.uniform(lo, hi, n) for lo, hi in X_RANGES])
    noise = rng.standard_normal((n, N_NOISE))
    y = friedman_signal(informative) + noise_sd * rng.standard_normal(n)
    names = [f"X{k}" for k in range(1, 5)] + [f"N{k}" for k in range(1, N_NOISE + 1)]
    return Dataset(np.hstack([informative, noise]), y, tuple(names))


def evaluate_final(theta: Mapping, learner: Learner, train: Dataset, test: Dataset,
                   metric: Metric = Metric.RMSE) -> float:
    """Fit on the whole training set at ``theta`` and score the test set."""
    model = learner.fit(theta, train)
    return float(metric(model.predict(test.features), test.target))


@dataclass(frozen=True)
class SimConfig:
    n_train: tuple[int, ...] = (400,)
    n_test: int = 10_000
    n_sims: int = 50
    B: tuple[int, ...] = (50,)
    B_min: tuple[int, ...] = (10,)
    alpha: tuple[float, ...] = (0.01,)
    analyzers: tuple[Analyzer, ...] = (Analyzer.GLS, Analyzer.BRADLEY_TERRY)
    learner: LearnerSpec = LearnerSpec(Kind.RBF_KERNEL_RIDGE)
    grid: Mapping[str, Sequence] = field(default_factory=lambda: dict(DEFAULT_GRID))
    folds: int = 10
    noise_sd: float = 0.1
    selection: SelectionRule = SelectionRule.PICK_WINNER
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.n_test < 1000:
            raise ValueError("n_test must be >= 1000")
        if self.n_sims < 1:
            raise ValueError("n_sims must be >= 1")
        for b in self.B:
            if b % self.folds:
                raise ValueError(f"B={b} is not a multiple of {self.folds} folds")
            for b_min in self.B_min:
                if not 1 <= b_min < b:
                    raise ValueError(f"B_min={b_min} must lie in [1, B={b})")
        for a in self.alpha:
            if not 0 < a < 0.5:
                raise ValueError("alpha must lie in (0, 0.5)")
        if not self.analyzers:
            raise ValueError("no analyzers given")

    def to_dict(self) -> dict:
        return {
            "n_train": list(self.n_train), "n_test": self.n_test, "n_sims": self.n_sims,
            "B": list(self.B), "B_min": list(self.B_min), "alpha": list(self.alpha),
            "analyzers": [a.value for a in self.analyzers], "learner": self.learner.to_dict(),
            "grid": {k: list(v) for k, v in self.grid.items()}, "folds": self.folds,
            "noise_sd": self.noise_sd, "selection": self.selection.value,
            "seed": self.seed, "workers": self.workers,
        }


@dataclass(frozen=True)
class SimRow:
    n_train: int
    B: int
    B_min: int
    alpha: float
    analyzer: str
    n_sims: int
    n_failed: int
    match_rate: float
    at_least_as_good_rate: float
    median_fit_ratio: float
    median_wall_ratio: float


@dataclass
class SimReport:
    rows: list[SimRow]
    replicates: list[dict]

    DETERMINISTIC = ("n_train", "B", "B_min", "alpha", "analyzer", "n_sims", "n_failed",
                     "match_rate", "at_least_as_good_rate", "median_fit_ratio")

    def to_csv(self) -> str:
        """Deterministic summary; wall-clock ratios live in :meth:`timing_csv`."""
        return _csv(self.DETERMINISTIC, self.rows)

    def timing_csv(self) -> str:
        return _csv(("n_train", "B", "B_min", "alpha", "analyzer", "median_wall_ratio"), self.rows)


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(getattr(row, c)) for c in columns])
    return buf.getvalue()


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def _seed(*key: int) -> int:
    return int(np.random.SeedSequence(list(key)).generate_state(1, np.uint64)[0])


def run_replicate(config: SimConfig, n_train: int, rep: int) -> list[dict]:
    """All conditions for one simulated data set; one record per adaptive arm."""
    train = gen_friedman(n_train, [config.seed, n_train, rep, 0], config.noise_sd)
    test = gen_friedman(config.n_test, [config.seed, n_train, rep, 1], config.noise_sd)
    grid = build_grid(config.grid)
    test_rmse: dict[int, float] = {}

    def rmse_of(j: int) -> float:
        if j not in test_rmse:
            test_rmse[j] = evaluate_final(grid[j].params, config.learner, train, test)
        return test_rmse[j]

    records = []
    for b in config.B:
        base = {"n_train": n_train, "rep": rep, "B": b}
        plan = make_plan(RepeatedKFold(config.folds, b // config.folds), n_train,
                         _seed(config.seed, n_train, rep, b))
        try:
            nominal = run_nominal(grid, plan, config.learner, Metric.RMSE,
                                  TuneConfig(B=b, B_min=min(config.B_min), analyzer=Analyzer.NONE,
                                             selection=config.selection), train)
        except Exception as exc:
            for b_min, alpha, analyzer in itertools.product(config.B_min, config.alpha,
                                                            config.analyzers):
                records.append({**base, "B_min": b_min, "alpha": alpha,
                                "analyzer": analyzer.value, "failed": repr(exc)})
            continue
        for b_min, alpha, analyzer in itertools.product(config.B_min, config.alpha,
                                                        config.analyzers):
            rec = {**base, "B_min": b_min, "alpha": alpha, "analyzer": analyzer.value}
            try:
                adaptive = run_adaptive(grid, plan, config.learner, Metric.RMSE,
                                        TuneConfig(B=b, B_min=b_min, alpha=alpha,
                                                   analyzer=analyzer, selection=config.selection),
                                        train)
                wall_ratio, fit_ratio = speedup(nominal, adaptive)
                rec.update(
                    nominal_selected=nominal.selected, adaptive_selected=adaptive.selected,
                    nominal_test_rmse=rmse_of(nominal.selected),
                    adaptive_test_rmse=rmse_of(adaptive.selected),
                    fits_nominal=nominal.fits_performed, fits_adaptive=adaptive.fits_performed,
                    fit_ratio=fit_ratio, wall_ratio=wall_ratio,
                )
                rec["match"] = rec["nominal_selected"] == rec["adaptive_selected"]
                rec["at_least_as_good"] = rec["match"] or (
                    rec["adaptive_test_rmse"] < rec["nominal_test_rmse"])
            except Exception as exc:
                rec["failed"] = repr(exc)
            records.append(rec)
    return records


def _replicate_job(args):
    return run_replicate(*args)


def summarize(config: SimConfig, replicates: Sequence[dict]) -> SimReport:
    rows = []
    for n_train, b, b_min, alpha, analyzer in itertools.product(
            config.n_train, config.B, config.B_min, config.alpha, config.analyzers):
        cell = [r for r in replicates
                if (r["n_train"], r["B"], r["B_min"], r["alpha"], r["analyzer"])
                == (n_train, b, b_min, alpha, analyzer.value)]
        ok = [r for r in cell if "failed" not in r]
        n = len(ok)
        rows.append(SimRow(
            n_train=n_train, B=b, B_min=b_min, alpha=alpha, analyzer=analyzer.value,
            n_sims=n, n_failed=len(cell) - n,
            match_rate=sum(r["match"] for r in ok) / n if n else math.nan,
            at_least_as_good_rate=sum(r["at_least_as_good"] for r in ok) / n if n else math.nan,
            median_fit_ratio=float(np.median([r["fit_ratio"] for r in ok])) if n else math.nan,
            median_wall_ratio=float(np.median([r["wall_ratio"] for r in ok])) if n else math.nan,
        ))
    return SimReport(rows, list(replicates))


def run_sim_study(config: SimConfig) -> SimReport:
    jobs = [(config, n, r) for n in config.n_train for r in range(config.n_sims)]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(_replicate_job, jobs))
    else:
        results = [_replicate_job(j) for j in jobs]
    records = sorted((rec for recs in results for rec in recs),
                     key=lambda r: (r["n_train"], r["rep"], r["B"], r["B_min"], r["alpha"],
                                    r["analyzer"]))
    return summarize(config, records)
