"""Candidate grids, fitness bookkeeping and winner selection."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

ParamValue = Union[float, int, str]


class GridError(ValueError):
    """Raised when a tuning grid cannot be constructed."""


class Orientation(enum.Enum):
    LARGER_IS_BETTER = "larger"
    SMALLER_IS_BETTER = "smaller"

    def sign(self) -> float:
        return 1.0 if self is Orientation.LARGER_IS_BETTER else -1.0


class SelectionRule(enum.Enum):
    PICK_WINNER = "pick_winner"
    ONE_STD_ERROR = "one_std_error"


class Status(enum.Enum):
    ACTIVE = "active"
    ELIMINATED = "eliminated"
    MERGED = "merged"
    SELECTED = "selected"


@dataclass
class Candidate:
    id: int
    params: dict[str, ParamValue]
    status: Status = Status.ACTIVE
    eliminated_at: int | None = None
    merged_into: int | None = None

    def label(self) -> str:
        return ", ".join(f"{k}={v}" for k, v in self.params.items())


@dataclass
class CandidateSet:
    candidates: list[Candidate]

    @property
    def p(self) -> int:
        return len(self.candidates)

    @property
    def active_count(self) -> int:
        return sum(c.status is Status.ACTIVE for c in self.candidates)

    def active_ids(self) -> list[int]:
        return [c.id for c in self.candidates if c.status is Status.ACTIVE]

    def __getitem__(self, j: int) -> Candidate:
        return self.candidates[j]

    def __iter__(self):
        return iter(self.candidates)

    def __len__(self) -> int:
        return len(self.candidates)

    def eliminate(self, ids: Iterable[int], iteration: int) -> None:
        for j in ids:
            c = self.candidates[j]
            if c.status is not Status.ACTIVE:
                raise ValueError(f"candidate {j} is not active")
            c.status = Status.ELIMINATED
            c.eliminated_at = iteration

    def merge(self, j: int, target: int) -> None:
        c = self.candidates[j]
        if self.candidates[target].status not in (Status.ACTIVE, Status.SELECTED):
            raise ValueError(f"merge target {target} is not active")
        c.status = Status.MERGED
        c.merged_into = target

    def copy(self) -> "CandidateSet":
        return CandidateSet([
            Candidate(c.id, dict(c.params), c.status, c.eliminated_at, c.merged_into)
            for c in self.candidates
        ])


def _check_value(name: str, value: ParamValue) -> ParamValue:
    if isinstance(value, str):
        if not value:
            raise GridError(f"parameter {name!r} has an empty categorical value")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
        raise GridError(f"parameter {name!r} has unsupported value {value!r}")
    if not math.isfinite(float(value)):
        raise GridError(f"parameter {name!r} has non-finite value {value!r}")
    return value.item() if isinstance(value, np.generic) else value


def build_grid(param_specs: Mapping[str, Sequence[ParamValue]]) -> CandidateSet:
    """Materialize the cross-product of per-parameter value lists.

    Candidate ids follow row-major order over ``param_specs`` (the last
    parameter varies fastest), which is also the complexity order used by
    the one-standard-error rule.
    """
    if not param_specs:
        raise GridError("no tuning parameters given")
    names = list(param_specs)
    columns = []
    for name in names:
        values = list(param_specs[name])
        if not values:
            raise GridError(f"parameter {name!r} has no values")
        columns.append([_check_value(name, v) for v in values])
    return CandidateSet([
        Candidate(j, dict(zip(names, combo)))
        for j, combo in enumerate(itertools.product(*columns))
    ])


class FitnessMatrix:
    """Per-resample, per-candidate fitness values.

    ``values`` holds NaN where no value exists: either the candidate was not
    fit on that resample, or the fit happened but the metric was undefined.
    ``fitted`` distinguishes the two.
    """

    def __init__(self, n_resamples: int, p: int, orientation: Orientation):
        self.values = np.full((n_resamples, p), np.nan)
        self.fitted = np.zeros((n_resamples, p), dtype=bool)
        self.orientation = orientation
        self.i_completed = 0

    @classmethod
    def from_array(cls, values, orientation: Orientation) -> "FitnessMatrix":
        values = np.asarray(values, dtype=float)
        if values.ndim != 2:
            raise ValueError("fitness values must be a 2-d array")
        fm = cls(*values.shape, orientation)
        fm.values[:] = values
        fm.fitted[:] = True
        fm.i_completed = values.shape[0]
        return fm

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def record(self, i: int, j: int, q: float | None) -> None:
        """Store the value for 1-based resample ``i`` and candidate ``j``."""
        self.fitted[i - 1, j] = True
        if q is not None:
            if not math.isfinite(q):
                raise ValueError(f"non-finite fitness at ({i}, {j})")
            self.values[i - 1, j] = q

    def completed(self) -> np.ndarray:
        return self.values[: self.i_completed]

    def oriented(self, ids: Sequence[int]) -> np.ndarray:
        """Completed rows for ``ids`` with larger-is-better orientation."""
        return self.orientation.sign() * self.completed()[:, list(ids)]


@dataclass(frozen=True)
class ProfileRow:
    candidate_id: int
    mean: float
    std_error: float
    n: int


def profile(fm: FitnessMatrix) -> list[ProfileRow]:
    """Mean fitness and standard error per candidate over its present rows."""
    if fm.i_completed < 1:
        raise ValueError("no completed resamples")
    rows = []
    for j, col in enumerate(fm.completed().T):
        present = col[~np.isnan(col)]
        n = present.size
        mean = float(present.mean()) if n else math.nan
        se = float(present.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
        rows.append(ProfileRow(j, mean, se, n))
    return rows


def select_winner(
    rows: Sequence[ProfileRow],
    rule: SelectionRule,
    orientation: Orientation,
    eligible: Iterable[int] | None = None,
) -> int:
    """Return the id of the chosen candidate among ``eligible`` rows.

    Ties on the mean go to the lowest id. The one-SE rule picks the lowest
    id whose mean is within one standard error of the best.
    """
    allowed = None if eligible is None else set(eligible)
    pool = [r for r in rows
            if (allowed is None or r.candidate_id in allowed) and not math.isnan(r.mean)]
    if not pool:
        raise ValueError("no eligible candidates with fitness values")
    pool.sort(key=lambda r: r.candidate_id)
    sign = orientation.sign()
    best = pool[0]
    for r in pool[1:]:
        if sign * r.mean > sign * best.mean:
            best = r
    if rule is SelectionRule.PICK_WINNER:
        return best.candidate_id
    se = 0.0 if math.isnan(best.std_error) else best.std_error
    threshold = sign * best.mean - se
    for r in pool:
        if sign * r.mean >= threshold:
            return r.candidate_id
    return best.candidate_id


@dataclass
class FutilityDecision:
    analyzer: str
    iteration: int
    alpha: float
    kept: list[int]
    removed: list[int]
    reference_id: int | None = None
    bounds: dict[int, float] = field(default_factory=dict)
    statistics: dict = field(default_factory=dict)
    skipped: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "analyzer": self.analyzer,
            "iteration": self.iteration,
            "alpha": self.alpha,
            "kept": list(self.kept),
            "removed": list(self.removed),
            "reference_id": self.reference_id,
            "bounds": {str(k): v for k, v in self.bounds.items()},
            "statistics": self.statistics,
            "skipped": self.skipped,
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FutilityDecision":
        return cls(
            analyzer=d["analyzer"],
            iteration=d["iteration"],
            alpha=d["alpha"],
            kept=list(d["kept"]),
            removed=list(d["removed"]),
            reference_id=d.get("reference_id"),
            bounds={int(k): v for k, v in d.get("bounds", {}).items()},
            statistics=d.get("statistics", {}),
            skipped=d.get("skipped", False),
            note=d.get("note", ""),
        )
