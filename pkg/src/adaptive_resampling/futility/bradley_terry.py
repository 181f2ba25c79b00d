"""Futility analysis from pairwise win/loss/tie records.

Within each resample every pair of active candidates plays one game; the
better fitness wins and an exact tie gives each side half a win. Abilities
follow ``logit P(j beats k) = lambda_j - lambda_k`` and are estimated by
maximum likelihood with the reference candidate pinned at zero.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.sparse import csgraph

from ..core import FutilityDecision, Orientation

MAX_ITER = 100
GRAD_TOL = 1e-8
MAX_ABILITY = 30.0


@dataclass(frozen=True)
class WinTable:
    """Pairwise win totals; ``wins[a, b]`` is what ``ids[a]`` scored against ``ids[b]``."""

    ids: tuple[int, ...]
    wins: np.ndarray
    n_games: int

    @property
    def pairs(self) -> list[tuple[int, int, float, float]]:
        return [(self.ids[a], self.ids[b], float(self.wins[a, b]), float(self.wins[b, a]))
                for a, b in itertools.combinations(range(len(self.ids)), 2)]

    def pair(self, j: int, k: int) -> tuple[float, float]:
        a, b = self.ids.index(j), self.ids.index(k)
        return float(self.wins[a, b]), float(self.wins[b, a])

    def total_wins(self) -> dict[int, float]:
        return {j: float(self.wins[a].sum()) for a, j in enumerate(self.ids)}

    @classmethod
    def from_pairs(cls, ids: Sequence[int], pairs: dict, n_games: int) -> "WinTable":
        """Build from ``{(j, k): wins_of_j}``; ``k`` gets the remainder."""
        ids = tuple(ids)
        w = np.zeros((len(ids), len(ids)))
        for (j, k), wins_j in pairs.items():
            a, b = ids.index(j), ids.index(k)
            w[a, b] = wins_j
            w[b, a] = n_games - wins_j
        return cls(ids, w, n_games)


def tabulate_wins(values, orientation: Orientation, ids: Sequence[int] | None = None) -> WinTable:
    y = orientation.sign() * np.asarray(values, dtype=float)
    i, p = y.shape
    ids = tuple(range(p)) if ids is None else tuple(ids)
    if p < 2:
        raise ValueError("need at least two candidates")
    a = y[:, :, None]
    b = y[:, None, :]
    wins = (a > b).sum(axis=0) + 0.5 * (a == b).sum(axis=0)
    np.fill_diagonal(wins, 0.0)
    return WinTable(ids, wins.astype(float), i)


@dataclass
class BtFit:
    reference_id: int
    lambda_hat: dict[int, float]
    se_lambda: dict[int, float]
    zero_win_ids: list[int]
    converged: bool
    iterations: int
    log_likelihood: float = math.nan
    note: str = ""
    fitted_ids: list[int] = field(default_factory=list)

    def statistics(self) -> dict:
        return {
            "lambda_hat": {str(j): v for j, v in self.lambda_hat.items()},
            "se_lambda": {str(j): v for j, v in self.se_lambda.items()},
            "zero_win_ids": list(self.zero_win_ids),
            "converged": self.converged,
            "iterations": self.iterations,
            "log_likelihood": self.log_likelihood,
        }


def log_likelihood(lam: np.ndarray, wins: np.ndarray, n_games: float) -> float:
    diff = lam[:, None] - lam[None, :]
    iu = np.triu_indices(len(lam), 1)
    d = diff[iu]
    # w * d - n * log(1 + e^d) is the full binomial term for the pair
    return float((wins[iu] * d - n_games * np.logaddexp(0.0, d)).sum())


def _grad_hess(lam: np.ndarray, wins: np.ndarray, n_games: float):
    diff = lam[:, None] - lam[None, :]
    prob = 1.0 / (1.0 + np.exp(-diff))
    np.fill_diagonal(prob, 0.0)
    grad = wins.sum(axis=1) - n_games * prob.sum(axis=1)
    v = n_games * prob * prob.T
    hess = v.copy()
    np.fill_diagonal(hess, -v.sum(axis=1))
    return grad, hess


def _strongly_connected(wins: np.ndarray) -> bool:
    n, labels = csgraph.connected_components(wins > 0, directed=True, connection="strong")
    return n == 1


def bt_fit(table: WinTable, reference_id: int) -> BtFit:
    """Maximum likelihood abilities relative to ``reference_id``.

    Candidates with no wins at all are set aside first. When the remaining
    win graph is not strongly connected the likelihood has no finite
    maximizer; the fit then reports ``converged=False``.
    """
    totals = table.total_wins()
    zero = [j for j in table.ids if totals[j] == 0 and j != reference_id]
    keep = [a for a, j in enumerate(table.ids) if j not in zero]
    ids = [table.ids[a] for a in keep]
    wins = table.wins[np.ix_(keep, keep)]
    fit = BtFit(reference_id, {reference_id: 0.0}, {reference_id: 0.0}, zero, False, 0,
                fitted_ids=ids)
    if totals[reference_id] == 0:
        fit.note = "reference has no wins"
        return fit
    if len(ids) == 1:
        fit.converged = True
        return fit
    if not _strongly_connected(wins):
        fit.note = "separation: win graph not strongly connected"
        return fit

    ref = ids.index(reference_id)
    free = [a for a in range(len(ids)) if a != ref]
    lam = np.zeros(len(ids))
    n = float(table.n_games)
    ll = log_likelihood(lam, wins, n)
    for it in range(1, MAX_ITER + 1):
        grad, hess = _grad_hess(lam, wins, n)
        g, h = grad[free], hess[np.ix_(free, free)]
        fit.iterations = it
        if np.max(np.abs(g)) < GRAD_TOL:
            fit.converged = True
            break
        step = np.linalg.solve(h, -g)
        t = 1.0
        while True:
            trial = lam.copy()
            trial[free] += t * step
            trial_ll = log_likelihood(trial, wins, n)
            if trial_ll >= ll or t < 1e-10:
                break
            t *= 0.5
        lam, ll = trial, trial_ll
        if np.max(np.abs(lam)) > MAX_ABILITY:
            fit.note = "separation: unbounded ability drift"
            break
    else:
        fit.note = "iteration cap reached"
    if not fit.converged and not fit.note:
        fit.note = "line search stalled"
    fit.log_likelihood = ll
    if fit.converged:
        _, hess = _grad_hess(lam, wins, n)
        cov = np.linalg.inv(-hess[np.ix_(free, free)])
        se = np.sqrt(np.diag(cov))
        for pos, a in enumerate(free):
            fit.lambda_hat[ids[a]] = float(lam[a])
            fit.se_lambda[ids[a]] = float(se[pos])
    return fit


def bt_eliminate(fit: BtFit, alpha: float, iteration: int = 0,
                 active: Sequence[int] | None = None) -> FutilityDecision:
    """Drop zero-win candidates and those whose upper ability bound is not above zero."""
    if not 0.0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 0.5)")
    active = list(active) if active is not None else sorted(set(fit.fitted_ids) | set(fit.zero_win_ids))
    z = float(stats.norm.isf(alpha))
    removed = set(fit.zero_win_ids)
    bounds = {}
    if fit.converged:
        for j, lam in fit.lambda_hat.items():
            upper = lam + z * fit.se_lambda[j]
            bounds[j] = upper
            if j != fit.reference_id and upper <= 0:
                removed.add(j)
    removed.discard(fit.reference_id)
    return FutilityDecision(
        analyzer="bt", iteration=iteration, alpha=alpha,
        kept=[j for j in active if j not in removed],
        removed=[j for j in active if j in removed],
        reference_id=fit.reference_id, bounds=bounds,
        statistics={**fit.statistics(), "quantile": z},
        note=fit.note,
    )
