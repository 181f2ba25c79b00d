"""Futility analysis with a compound-symmetric linear model.

Model: ``Q[k, j] = mu + tau_j + e[k, j]`` where errors sharing a resample
``k`` are exchangeable (common correlation ``rho``) and independent across
resamples. In the balanced layout the generalized least squares estimates
of the ``tau_j`` are the column-mean contrasts, and the two variance
components follow from the two-way ANOVA mean squares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from ..core import FutilityDecision, Orientation

MIN_RESAMPLES = 3


class AnalysisSkipped(Exception):
    """Too little data for the model; the round removes nothing."""


@dataclass(frozen=True)
class GlsFit:
    ids: tuple[int, ...]
    reference_id: int
    tau_hat: dict[int, float]
    se_tau: dict[int, float]
    rho_hat: float
    sigma_between2: float
    sigma_resid2: float
    df: int
    n_resamples: int

    def statistics(self) -> dict:
        return {
            "rho_hat": self.rho_hat,
            "sigma_between2": self.sigma_between2,
            "sigma_resid2": self.sigma_resid2,
            "df": self.df,
            "n_resamples": self.n_resamples,
            "tau_hat": {str(j): v for j, v in self.tau_hat.items()},
            "se_tau": {str(j): v for j, v in self.se_tau.items()},
        }


def gls_fit(values, orientation: Orientation, ids: Sequence[int] | None = None) -> GlsFit:
    """Fit the exchangeable-error model to a complete ``i x p_i`` block.

    ``values`` rows are resamples and columns the active candidates, listed
    in ``ids`` order (defaults to ``0..p_i-1``). Raises
    :class:`AnalysisSkipped` below three resamples.
    """
    y = np.asarray(values, dtype=float)
    if y.ndim != 2:
        raise ValueError("fitness block must be 2-d")
    i, p = y.shape
    ids = tuple(range(p)) if ids is None else tuple(ids)
    if len(ids) != p:
        raise ValueError("ids do not match the number of columns")
    if p < 2:
        raise ValueError("need at least two candidates")
    if np.isnan(y).any():
        raise ValueError("fitness block is unbalanced (missing cells)")
    if i < MIN_RESAMPLES:
        raise AnalysisSkipped(f"only {i} complete resamples")
    y = orientation.sign() * y

    grand = y.mean()
    row_means = y.mean(axis=1)
    col_means = y.mean(axis=0)
    resid = y - row_means[:, None] - col_means[None, :] + grand
    df = (i - 1) * (p - 1)
    mse = float((resid ** 2).sum() / df)
    ms_resample = float(p * ((row_means - grand) ** 2).sum() / (i - 1))
    sigma_between2 = max(0.0, (ms_resample - mse) / p)
    total = sigma_between2 + mse
    rho = sigma_between2 / total if total > 0 else 0.0

    # reference: best mean, first (lowest id) on ties
    order = np.argsort(ids, kind="stable")
    ref_pos = int(order[np.argmax(col_means[order])])
    se = math.sqrt(2.0 * mse / i)
    tau = {ids[c]: float(col_means[ref_pos] - col_means[c]) for c in range(p)}
    tau[ids[ref_pos]] = 0.0
    se_tau = {ids[c]: (0.0 if c == ref_pos else se) for c in range(p)}
    return GlsFit(ids, ids[ref_pos], tau, se_tau, rho, sigma_between2, mse, df, i)


def gls_eliminate(fit: GlsFit, alpha: float, iteration: int = 0) -> FutilityDecision:
    """Remove every candidate whose one-sided lower bound on its loss exceeds zero."""
    if not 0.0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 0.5)")
    q = float(stats.t.isf(alpha, fit.df))
    bounds, removed = {}, []
    for j in fit.ids:
        lower = fit.tau_hat[j] - q * fit.se_tau[j]
        bounds[j] = lower
        if j != fit.reference_id and lower > 0:
            removed.append(j)
    kept = [j for j in fit.ids if j not in removed]
    return FutilityDecision(
        analyzer="gls", iteration=iteration, alpha=alpha, kept=kept, removed=removed,
        reference_id=fit.reference_id, bounds=bounds,
        statistics={**fit.statistics(), "quantile": q},
    )
