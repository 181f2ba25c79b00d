"""Nominal and adaptive tuning loops.

Fits within a resample are independent and run on a thread pool. Before
the first futility analysis all resamples may run at once; after it, each
analysis is a barrier and resample ``i + 1`` waits for the decision made
at ``i``. Results are recorded in ``(i, j)`` order, so the outcome does not
depend on the number of workers.
"""

from __future__ import annotations

import enum
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .core import (
    CandidateSet,
    FitnessMatrix,
    FutilityDecision,
    ProfileRow,
    SelectionRule,
    Status,
    profile,
    select_winner,
)
from .futility import AnalysisSkipped, bt_eliminate, bt_fit, gls_eliminate, gls_fit, tabulate_wins
from .learners import Dataset, Learner
from .metrics import Metric, UndefinedMetricError
from .resampling import ResamplePlan

DEDUPE_TOL = 1e-12


class TuningError(RuntimeError):
    pass


class Analyzer(enum.Enum):
    GLS = "gls"
    BRADLEY_TERRY = "bt"
    NONE = "none"


class StopRule(enum.Enum):
    CHOICE_ONLY = "choice_only"
    FULL_PRECISION = "full_precision"


@dataclass(frozen=True)
class AlphaSchedule:
    """Linear ramp of the removal level from ``start`` at B_min to ``end`` at B."""

    start: float
    end: float

    def __post_init__(self):
        if not (0 < self.start < 0.5 and 0 < self.end < 0.5):
            raise ValueError("alpha must lie in (0, 0.5)")
        if self.start > self.end:
            raise ValueError("alpha schedule must be non-decreasing")

    def at(self, i: int, b_min: int, b: int) -> float:
        if b <= b_min:
            return self.end
        frac = min(max((i - b_min) / (b - b_min), 0.0), 1.0)
        return self.start + (self.end - self.start) * frac


@dataclass(frozen=True)
class TuneConfig:
    B: int
    B_min: int = 10
    alpha: Union[float, AlphaSchedule] = 0.01
    analyzer: Analyzer = Analyzer.GLS
    selection: SelectionRule = SelectionRule.PICK_WINNER
    dedupe: bool = False
    stop_on_single: StopRule = StopRule.FULL_PRECISION
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.B_min < self.B:
            raise ValueError(f"need 1 <= B_min < B, got B_min={self.B_min}, B={self.B}")
        if isinstance(self.alpha, (int, float)) and not 0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 0.5)")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def alpha_at(self, i: int) -> float:
        if isinstance(self.alpha, AlphaSchedule):
            return self.alpha.at(i, self.B_min, self.B)
        return float(self.alpha)

    def to_dict(self) -> dict:
        alpha = self.alpha
        if isinstance(alpha, AlphaSchedule):
            alpha = {"start": alpha.start, "end": alpha.end}
        return {
            "B": self.B, "B_min": self.B_min, "alpha": alpha,
            "analyzer": self.analyzer.value, "selection": self.selection.value,
            "dedupe": self.dedupe, "stop_on_single": self.stop_on_single.value,
            "workers": self.workers, "seed": self.seed,
        }


@dataclass
class TuneResult:
    selected: int
    profile: list[ProfileRow]
    eliminations: list[FutilityDecision]
    merges: dict[int, int]
    fits_performed: int
    fits_nominal: int
    final_iteration: int
    wall_time: float
    fit_counts: list[int]
    candidates: CandidateSet
    fitness: FitnessMatrix
    log: list[dict] = field(default_factory=list)
    merge_iteration: int | None = None

    def to_dict(self, include_timing: bool = True) -> dict:
        log = self.log
        if not include_timing:
            log = [{k: v for k, v in rec.items() if k not in ("duration", "wall_time")}
                   for rec in log]
        out = {
            "selected": self.selected,
            "selected_params": self.candidates[self.selected].params,
            "profile": [
                {"id": r.candidate_id, "params": self.candidates[r.candidate_id].params,
                 "mean": _num(r.mean), "std_error": _num(r.std_error), "n": r.n,
                 "status": self.candidates[r.candidate_id].status.value}
                for r in self.profile
            ],
            "eliminations": [d.to_dict() for d in self.eliminations],
            "merges": {str(k): v for k, v in self.merges.items()},
            "fits_performed": self.fits_performed,
            "fits_nominal": self.fits_nominal,
            "final_iteration": self.final_iteration,
            "fit_counts": list(self.fit_counts),
            "log": log,
        }
        if include_timing:
            out["wall_time"] = self.wall_time
        return out


def _num(x: float):
    return None if math.isnan(x) else x


def reconstruct_fit_count(result: TuneResult) -> int:
    """Fit count implied by the elimination log alone."""
    last = {c.id: result.final_iteration for c in result.candidates}
    for j in result.merges:
        last[j] = result.merge_iteration
    for d in result.eliminations:
        for j in d.removed:
            last[j] = d.iteration
    return sum(last.values())


def speedup(nominal: TuneResult, adaptive: TuneResult) -> tuple[float, float]:
    """Return ``(wall_ratio, fit_ratio)`` of a nominal over an adaptive run."""
    wall = nominal.wall_time / adaptive.wall_time if adaptive.wall_time > 0 else math.inf
    return wall, nominal.fits_performed / adaptive.fits_performed


def _evaluate(learner: Learner, metric: Metric, data: Dataset, plan: ResamplePlan,
              theta: dict, i: int, j: int, keep_pred: bool):
    train, hold = plan.split(i)
    start = time.perf_counter()
    q = pred = error = None
    try:
        model = learner.fit(theta, data.subset(train))
        pred = np.asarray(model.predict(data.features[hold]), dtype=float)
        q = float(metric(pred, data.target[hold]))
        if not math.isfinite(q):
            q, error = None, "non-finite metric"
    except UndefinedMetricError as exc:
        error = f"undefined metric: {exc}"
    except Exception as exc:  # learner failures mark the cell missing
        error = f"{type(exc).__name__}: {exc}"
    return i, j, q, time.perf_counter() - start, (pred if keep_pred else None), error


class _Run:
    def __init__(self, grid: CandidateSet, plan: ResamplePlan, learner: Learner,
                 metric: Metric, config: TuneConfig, data: Dataset, mode: str):
        if plan.B != config.B:
            raise ValueError(f"plan has B={plan.B} but config says B={config.B}")
        if plan.n != data.n:
            raise ValueError(f"plan built for n={plan.n} but dataset has {data.n} rows")
        if len(grid) == 0:
            raise ValueError("empty grid")
        self.grid = grid.copy()
        self.plan, self.learner, self.metric = plan, learner, metric
        self.config, self.data = config, data
        self.fm = FitnessMatrix(plan.B, len(grid), metric.orientation)
        self.preds: dict[tuple[int, int], np.ndarray] = {}
        self.log: list[dict] = [{
            "type": "start", "mode": mode, "metric": metric.value,
            "orientation": metric.orientation.value, "config": config.to_dict(),
            "plan": plan.to_dict(),
            "candidates": [{"id": c.id, "params": c.params} for c in grid],
        }]
        self.eliminations: list[FutilityDecision] = []
        self.merges: dict[int, int] = {}
        self.merge_iteration: int | None = None
        self.pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()

    def run_cells(self, iterations: Iterable[int], ids: Sequence[int], keep_pred: bool = False):
        tasks = [(i, j) for i in iterations for j in ids]
        args = [(self.learner, self.metric, self.data, self.plan,
                 self.grid[j].params, i, j, keep_pred) for i, j in tasks]
        if self.pool is None:
            results = [_evaluate(*a) for a in args]
        else:
            results = list(self.pool.map(lambda a: _evaluate(*a), args))
        for i, j, q, duration, pred, error in sorted(results, key=lambda r: (r[0], r[1])):
            self.fm.record(i, j, q)
            if pred is not None:
                self.preds[i, j] = pred
            rec = {"type": "fit", "i": i, "j": j, "q": q, "duration": duration}
            if error:
                rec["error"] = error
            self.log.append(rec)
        self.fm.i_completed = max(self.fm.i_completed, max((i for i, _ in tasks), default=0))

    def dedupe(self, iteration: int):
        active = self.grid.active_ids()
        rows = range(1, iteration + 1)
        merged = set()
        for a, j in enumerate(active):
            if j in merged:
                continue
            pj = [self.preds.get((i, j)) for i in rows]
            if any(p is None for p in pj):
                continue
            for k in active[a + 1:]:
                if k in merged:
                    continue
                pk = [self.preds.get((i, k)) for i in rows]
                if any(p is None for p in pk):
                    continue
                if all(np.max(np.abs(x - y), initial=0.0) <= DEDUPE_TOL for x, y in zip(pj, pk)):
                    self.grid.merge(k, j)
                    self.merges[k] = j
                    merged.add(k)
                    self.log.append({"type": "merge", "iteration": iteration, "merged": k, "into": j})
        self.merge_iteration = iteration
        self.preds.clear()

    def analyze(self, i: int) -> FutilityDecision:
        active = self.grid.active_ids()
        alpha = self.config.alpha_at(i)
        block = self.fm.completed()[:, active]
        block = block[~np.isnan(block).any(axis=1)]
        analyzer = self.config.analyzer
        try:
            if block.shape[0] < 1:
                raise AnalysisSkipped("no complete resamples")
            if analyzer is Analyzer.GLS:
                decision = gls_eliminate(gls_fit(block, self.fm.orientation, active), alpha, i)
            else:
                means = self.fm.orientation.sign() * block.mean(axis=0)
                ref = active[int(np.argmax(means))]
                fit = bt_fit(tabulate_wins(block, self.fm.orientation, active), ref)
                decision = bt_eliminate(fit, alpha, i, active)
        except AnalysisSkipped as exc:
            decision = FutilityDecision(analyzer.value, i, alpha, list(active), [],
                                        skipped=True, note=str(exc))
        decision.statistics["complete_rows"] = int(block.shape[0])
        if decision.reference_id is not None and decision.reference_id in decision.removed:
            raise TuningError("analyzer removed its own reference candidate")
        self.grid.eliminate(decision.removed, i)
        self.eliminations.append(decision)
        self.log.append({"type": "decision", **decision.to_dict()})
        return decision

    def finish(self, selected: int, final_iteration: int, started: float) -> TuneResult:
        self.fm.i_completed = final_iteration
        rows = profile(self.fm)
        self.grid[selected].status = Status.SELECTED
        counts = [int(c) for c in self.fm.fitted.sum(axis=0)]
        fits = sum(counts)
        wall = time.perf_counter() - started
        result = TuneResult(
            selected=selected, profile=rows, eliminations=self.eliminations,
            merges=dict(self.merges), fits_performed=fits, fits_nominal=self.plan.B * len(self.grid),
            final_iteration=final_iteration, wall_time=wall, fit_counts=counts,
            candidates=self.grid, fitness=self.fm, log=self.log,
            merge_iteration=self.merge_iteration,
        )
        self.log.append({
            "type": "result", "selected": selected, "fits_performed": fits,
            "fits_nominal": result.fits_nominal, "final_iteration": final_iteration,
            "fit_counts": counts, "wall_time": wall,
            "profile": [{"id": r.candidate_id, "mean": _num(r.mean),
                         "std_error": _num(r.std_error), "n": r.n,
                         "status": self.grid[r.candidate_id].status.value} for r in rows],
        })
        return result

    def choose(self, eligible: Sequence[int]) -> int:
        try:
            return select_winner(profile(self.fm), self.config.selection,
                                 self.fm.orientation, eligible)
        except ValueError as exc:
            raise TuningError(f"cannot select a winner: {exc}") from None


def run_nominal(grid: CandidateSet, plan: ResamplePlan, learner: Learner, metric: Metric,
                config: TuneConfig, data: Dataset) -> TuneResult:
    """Resample every candidate on every split, then pick the winner."""
    started = time.perf_counter()
    run = _Run(grid, plan, learner, metric, config, data, "nominal")
    try:
        ids = list(range(len(run.grid)))
        run.run_cells(range(1, plan.B + 1), ids)
        return run.finish(run.choose(ids), plan.B, started)
    finally:
        run.close()


def run_adaptive(grid: CandidateSet, plan: ResamplePlan, learner: Learner, metric: Metric,
                 config: TuneConfig, data: Dataset) -> TuneResult:
    """Resample with futility analysis after every resample from ``B_min`` on."""
    started = time.perf_counter()
    run = _Run(grid, plan, learner, metric, config, data, "adaptive")
    try:
        b, b_min = plan.B, config.B_min
        run.run_cells(range(1, b_min + 1), run.grid.active_ids(), keep_pred=config.dedupe)
        if config.dedupe:
            run.dedupe(b_min)
        analyzing = config.analyzer is not Analyzer.NONE
        i = b_min
        while True:
            if analyzing and run.grid.active_count > 1:
                run.analyze(i)
            if run.grid.active_count == 1 and config.stop_on_single is StopRule.CHOICE_ONLY:
                break
            if i == b:
                break
            i += 1
            run.run_cells([i], run.grid.active_ids())
        active = run.grid.active_ids()
        selected = active[0] if len(active) == 1 else run.choose(active)
        return run.finish(selected, i, started)
    finally:
        run.close()
