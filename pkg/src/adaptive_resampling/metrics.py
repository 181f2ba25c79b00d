"""Fitness statistics computed on holdout predictions."""

from __future__ import annotations

import enum
import math

import numpy as np

from .core import Orientation


class UndefinedMetricError(ValueError):
    """The metric has no value for this input (e.g. a single-class holdout)."""


def _pair(pred, obs) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=float).ravel()
    obs = np.asarray(obs, dtype=float).ravel()
    if pred.shape != obs.shape:
        raise ValueError(f"length mismatch: {pred.size} vs {obs.size}")
    if pred.size == 0:
        raise ValueError("empty input")
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(obs))):
        raise ValueError("non-finite values")
    return pred, obs


def rmse(pred, obs) -> float:
    pred, obs = _pair(pred, obs)
    return float(math.sqrt(np.mean((pred - obs) ** 2)))


def r_squared(pred, obs) -> float:
    """Squared Pearson correlation between predictions and observations."""
    pred, obs = _pair(pred, obs)
    dp = pred - pred.mean()
    do = obs - obs.mean()
    sp, so = float(dp @ dp), float(do @ do)
    if sp == 0.0 or so == 0.0:
        raise UndefinedMetricError("R^2 is undefined for constant predictions or observations")
    return min(1.0, float(dp @ do) ** 2 / (sp * so))


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via Mann-Whitney pair counting.

    Each positive/negative pair counts 1 when the positive scores higher and
    0.5 on a tie.
    """
    scores, labels = _pair(scores, labels)
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0 or 1")
    pos = scores[labels == 1]
    neg = np.sort(scores[labels == 0])
    if pos.size == 0 or neg.size == 0:
        raise UndefinedMetricError("ROC AUC needs both classes in the holdout")
    below = np.searchsorted(neg, pos, side="left")
    tied = np.searchsorted(neg, pos, side="right") - below
    greater, ties = int(below.sum()), int(tied.sum())
    return (greater + 0.5 * ties) / (pos.size * neg.size)


def error_rate(pred_labels, labels) -> float:
    pred_labels, labels = _pair(pred_labels, labels)
    return float(np.mean(pred_labels != labels))


class Metric(enum.Enum):
    RMSE = "rmse"
    R_SQUARED = "r_squared"
    ROC_AUC = "roc_auc"
    ERROR_RATE = "error_rate"

    @property
    def orientation(self) -> Orientation:
        if self in (Metric.RMSE, Metric.ERROR_RATE):
            return Orientation.SMALLER_IS_BETTER
        return Orientation.LARGER_IS_BETTER

    def __call__(self, pred, obs) -> float:
        """Score predictions; classification scores are cut at 0.5 for error rate."""
        if self is Metric.RMSE:
            return rmse(pred, obs)
        if self is Metric.R_SQUARED:
            return r_squared(pred, obs)
        if self is Metric.ROC_AUC:
            return roc_auc(pred, obs)
        return error_rate((np.asarray(pred, dtype=float) > 0.5).astype(float), obs)
