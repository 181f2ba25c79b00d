"""Train/holdout index splits for the common resampling schemes.

Every split draws its randomness from a generator seeded by ``(seed, i)``
(or ``(seed, repeat)`` for fold-based schemes, since the folds of one
repeat share a permutation), so a plan does not depend on the order in
which its splits are generated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np


class InvalidPlanError(ValueError):
    pass


@dataclass(frozen=True)
class Bootstrap:
    times: int

    def __post_init__(self):
        if self.times < 1:
            raise InvalidPlanError("bootstrap needs at least one resample")


@dataclass(frozen=True)
class KFold:
    k: int

    def __post_init__(self):
        if self.k < 2:
            raise InvalidPlanError("k-fold needs k >= 2")


@dataclass(frozen=True)
class RepeatedKFold:
    k: int
    repeats: int

    def __post_init__(self):
        if self.k < 2:
            raise InvalidPlanError("k-fold needs k >= 2")
        if self.repeats < 1:
            raise InvalidPlanError("repeats must be >= 1")


@dataclass(frozen=True)
class MonteCarloCV:
    train_fraction: float
    times: int

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidPlanError("train_fraction must lie in (0, 1)")
        if self.times < 1:
            raise InvalidPlanError("Monte Carlo CV needs at least one resample")


@dataclass(frozen=True)
class LeaveOneOut:
    pass


ResampleMethod = Union[Bootstrap, KFold, RepeatedKFold, MonteCarloCV, LeaveOneOut]

_KINDS = {
    "bootstrap": Bootstrap,
    "kfold": KFold,
    "repeated_kfold": RepeatedKFold,
    "monte_carlo": MonteCarloCV,
    "loo": LeaveOneOut,
}


def method_to_dict(method: ResampleMethod) -> dict:
    kind = next(k for k, cls in _KINDS.items() if isinstance(method, cls))
    return {"method": kind, **method.__dict__}


def method_from_dict(d: dict) -> ResampleMethod:
    d = dict(d)
    kind = d.pop("method", None)
    if kind not in _KINDS:
        raise InvalidPlanError(f"unknown resampling method {kind!r}")
    try:
        return _KINDS[kind](**d)
    except TypeError as exc:
        raise InvalidPlanError(f"bad arguments for {kind}: {exc}") from None


def _rng(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(key,)))


@dataclass(frozen=True)
class ResamplePlan:
    method: ResampleMethod
    n: int
    seed: int
    splits: tuple[tuple[np.ndarray, np.ndarray], ...]

    @property
    def B(self) -> int:
        return len(self.splits)

    def split(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return split(self, i)

    def to_dict(self) -> dict:
        return {**method_to_dict(self.method), "n": self.n, "seed": self.seed, "B": self.B}

    @classmethod
    def from_dict(cls, d: dict) -> "ResamplePlan":
        d = dict(d)
        n, seed, B = d.pop("n"), d.pop("seed"), d.pop("B", None)
        plan = make_plan(method_from_dict(d), n, seed)
        if B is not None and B != plan.B:
            raise InvalidPlanError(f"stored B={B} does not match regenerated B={plan.B}")
        return plan


def _folds(n: int, k: int, seed: int, repeat: int):
    perm = _rng(seed, repeat).permutation(n)
    everything = np.arange(n)
    for hold in np.array_split(perm, k):
        hold = np.sort(hold)
        yield np.setdiff1d(everything, hold, assume_unique=True), hold


def _bootstrap_split(n: int, seed: int, i: int):
    rng = _rng(seed, i)
    while True:
        train = rng.integers(0, n, size=n)
        hold = np.setdiff1d(np.arange(n), train)
        if hold.size:
            return np.sort(train), hold


def make_plan(method: ResampleMethod, n: int, seed: int) -> ResamplePlan:
    """Materialize every split of ``method`` for a dataset of ``n`` rows."""
    if n < 2:
        raise InvalidPlanError("need at least two rows to resample")
    if isinstance(method, (KFold, RepeatedKFold)) and n < method.k:
        raise InvalidPlanError(f"n={n} is smaller than k={method.k}")
    seed = int(seed)
    if isinstance(method, Bootstrap):
        splits = [_bootstrap_split(n, seed, i) for i in range(method.times)]
    elif isinstance(method, KFold):
        splits = list(_folds(n, method.k, seed, 0))
    elif isinstance(method, RepeatedKFold):
        splits = [s for r in range(method.repeats) for s in _folds(n, method.k, seed, r)]
    elif isinstance(method, MonteCarloCV):
        n_train = min(max(int(method.train_fraction * n), 1), n - 1)
        splits = []
        for i in range(method.times):
            perm = _rng(seed, i).permutation(n)
            splits.append((np.sort(perm[:n_train]), np.sort(perm[n_train:])))
    elif isinstance(method, LeaveOneOut):
        everything = np.arange(n)
        splits = [(np.delete(everything, i), np.array([i])) for i in range(n)]
    else:
        raise InvalidPlanError(f"unknown resampling method {method!r}")
    for train, hold in splits:
        train.flags.writeable = False
        hold.flags.writeable = False
    return ResamplePlan(method, n, seed, tuple(splits))


def split(plan: ResamplePlan, i: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(train, holdout)`` indices of the 1-based split ``i``."""
    if not 1 <= i <= plan.B:
        raise IndexError(f"split {i} out of range 1..{plan.B}")
    return plan.splits[i - 1]
