"""Learner interface plus three small built-in learners.

Anything with a ``fit(theta, train)`` method returning an object with
``predict(rows)`` can be tuned by the engine; :class:`LearnerSpec` is the
built-in implementation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, Protocol

import numpy as np
from scipy import linalg


class LearnerError(ValueError):
    pass


class Task(enum.Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"


class Kind(enum.Enum):
    K_NEAREST = "knn"
    RIDGE = "ridge"
    RBF_KERNEL_RIDGE = "rbf_kernel_ridge"


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    target: np.ndarray
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        y = np.asarray(self.target, dtype=float).ravel()
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError("features must be a non-empty n x d matrix")
        if y.shape[0] != x.shape[0]:
            raise ValueError(f"{x.shape[0]} feature rows but {y.shape[0]} targets")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite values")
        names = tuple(self.feature_names) or tuple(f"x{k + 1}" for k in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise ValueError("feature_names length does not match column count")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "target", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=int)
        return Dataset(self.features[rows], self.target[rows], self.feature_names)


class Model(Protocol):
    def predict(self, rows) -> np.ndarray: ...


class Learner(Protocol):
    task: Task

    def fit(self, theta: Mapping[str, object], train: Dataset) -> Model: ...


@dataclass(frozen=True)
class _Scaler:
    center: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray, enabled: bool) -> "_Scaler":
        if not enabled:
            return cls(np.zeros(x.shape[1]), np.ones(x.shape[1]))
        scale = x.std(axis=0)
        scale[scale == 0] = 1.0
        return cls(x.mean(axis=0), scale)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return (x - self.center) / self.scale


def _rows(rows, d: int) -> np.ndarray:
    x = np.asarray(rows, dtype=float)
    if x.size == 0:
        return np.empty((0, d))
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[1] != d:
        raise LearnerError(f"expected {d} columns, got {x.shape[1]}")
    return x


def _sq_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d, 0.0)


@dataclass(frozen=True)
class KNearestModel:
    train_x: np.ndarray
    train_y: np.ndarray
    k: int
    scaler: _Scaler
    chunk: int = 128

    def predict(self, rows) -> np.ndarray:
        x = self.scaler(_rows(rows, self.train_x.shape[1]))
        out = np.empty(x.shape[0])
        for start in range(0, x.shape[0], self.chunk):
            block = x[start:start + self.chunk]
            # exact differences so self-distances are exactly zero
            dist = (((block[:, None, :] - self.train_x[None, :, :]) ** 2).sum(-1))
            nearest = np.argsort(dist, axis=1, kind="stable")[:, : self.k]
            out[start:start + self.chunk] = self.train_y[nearest].mean(axis=1)
        return out


@dataclass(frozen=True)
class RidgeModel:
    coef: np.ndarray
    intercept: float
    scaler: _Scaler | None = None

    def predict(self, rows) -> np.ndarray:
        x = _rows(rows, self.coef.shape[0])
        if self.scaler is not None:
            x = self.scaler(x)
        return x @ self.coef + self.intercept


@dataclass(frozen=True)
class KernelRidgeModel:
    dual_coef: np.ndarray
    train_x: np.ndarray
    gamma: float
    intercept: float
    scaler: _Scaler

    def predict(self, rows) -> np.ndarray:
        x = self.scaler(_rows(rows, self.train_x.shape[1]))
        if x.shape[0] == 0:
            return np.empty(0)
        return np.exp(-self.gamma * _sq_dist(x, self.train_x)) @ self.dual_coef + self.intercept


def _real(theta: Mapping[str, object], name: str) -> float:
    if name not in theta:
        raise LearnerError(f"missing tuning parameter {name!r}")
    try:
        value = float(theta[name])
    except (TypeError, ValueError):
        raise LearnerError(f"tuning parameter {name!r} must be numeric") from None
    if not math.isfinite(value):
        raise LearnerError(f"tuning parameter {name!r} is not finite")
    return value


@dataclass(frozen=True)
class LearnerSpec:
    kind: Kind
    task: Task = Task.REGRESSION
    standardize: bool = True

    def __post_init__(self):
        if self.kind is not Kind.K_NEAREST and self.task is not Task.REGRESSION:
            raise LearnerError(f"{self.kind.value} supports regression only")

    def fit(self, theta: Mapping[str, object], train: Dataset) -> Model:
        x, y = train.features, train.target
        if self.task is Task.CLASSIFICATION and not np.all((y == 0) | (y == 1)):
            raise LearnerError("classification targets must be 0 or 1")
        scaler = _Scaler.fit(x, self.standardize)
        xs = scaler(x)
        if self.kind is Kind.K_NEAREST:
            k = _real(theta, "K")
            if k != int(k) or k < 1:
                raise LearnerError("K must be a positive integer")
            if k > train.n:
                raise LearnerError(f"K={int(k)} exceeds the {train.n} training rows")
            return KNearestModel(xs, y.copy(), int(k), scaler)
        if self.kind is Kind.RIDGE:
            lam = _real(theta, "lambda")
            if lam < 0:
                raise LearnerError("lambda must be >= 0")
            coef, intercept = _ridge(xs, y, lam)
            return RidgeModel(coef, intercept, scaler)
        lam, gamma = _real(theta, "lambda"), _real(theta, "gamma")
        if lam <= 0 or gamma <= 0:
            raise LearnerError("kernel ridge needs lambda > 0 and gamma > 0")
        intercept = float(y.mean())
        gram = np.exp(-gamma * _sq_dist(xs, xs))
        gram[np.diag_indices_from(gram)] += lam
        try:
            dual = linalg.cho_solve(linalg.cho_factor(gram), y - intercept)
        except linalg.LinAlgError as exc:
            raise LearnerError(f"kernel system is not positive definite: {exc}") from None
        return KernelRidgeModel(dual, xs, gamma, intercept, scaler)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "task": self.task.value, "standardize": self.standardize}

    @classmethod
    def from_dict(cls, d: Mapping) -> "LearnerSpec":
        try:
            return cls(Kind(d["kind"]), Task(d.get("task", "regression")),
                       bool(d.get("standardize", True)))
        except (KeyError, ValueError) as exc:
            raise LearnerError(f"bad learner spec: {exc}") from None


def _ridge(x: np.ndarray, y: np.ndarray, lam: float) -> tuple[np.ndarray, float]:
    # intercept is left unpenalized by centering
    xm, ym = x.mean(axis=0), y.mean()
    xc, yc = x - xm, y - ym
    gram = xc.T @ xc
    if lam == 0 and np.linalg.matrix_rank(xc) < x.shape[1]:
        raise LearnerError("singular least-squares system (collinear features, lambda = 0)")
    gram[np.diag_indices_from(gram)] += lam
    try:
        coef = np.linalg.solve(gram, xc.T @ yc)
    except np.linalg.LinAlgError:
        raise LearnerError("singular ridge system") from None
    return coef, float(ym - xm @ coef)


def fit(spec: Learner, theta: Mapping[str, object], train: Dataset) -> Model:
    return spec.fit(theta, train)


def predict(model: Model, rows) -> np.ndarray:
    return np.asarray(model.predict(rows), dtype=float)
