"""Source-domain probability models.

Three kinds of source model are supported: a logistic regression over a
:class:`~linshift.features.FeatureMap` (:class:`CoefficientModel`), a
Gaussian Nadaraya-Watson smoother (:class:`KernelModel`) and a table of
probabilities produced elsewhere, keyed by row id (:class:`ExternalModel`).
All of them expose ``predict_proba(X, row_ids=None)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from .errors import ConfigError, DataError
from .features import FeatureMap, build_design
from .solver import FitReport, fit_design

__all__ = [
    "Dataset",
    "Penalty",
    "FitReport",
    "CoefficientModel",
    "KernelModel",
    "ExternalModel",
    "balanced_weights",
    "fit_logistic",
    "fit_kernel",
    "predict_proba",
    "source_model_from_dict",
    "load_external_csv",
]


@dataclass
class Dataset:
    """Rows ``(x, y, w)`` from one domain.

    ``row_id`` is only needed when scoring with an :class:`ExternalModel`;
    it defaults to the row position as a string.
    """

    X: np.ndarray
    y: np.ndarray
    w: Optional[np.ndarray] = None
    row_id: Optional[np.ndarray] = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X.reshape(-1, 1) if self.X.size else self.X.reshape(0, 0)
        if self.X.ndim != 2:
            raise DataError(f"X must be 2-D, got shape {self.X.shape}")
        n = self.X.shape[0]
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.y.shape != (n,):
            raise DataError(f"y has {self.y.size} entries for {n} rows")
        if self.w is None:
            self.w = np.ones(n)
        else:
            self.w = np.asarray(self.w, dtype=float).reshape(-1)
            if self.w.shape != (n,):
                raise DataError(f"w has {self.w.size} entries for {n} rows")
            if np.any(self.w <= 0):
                raise DataError("sample weights must be strictly positive")
        if self.row_id is None:
            self.row_id = np.array([str(i) for i in range(n)], dtype=object)
        else:
            self.row_id = np.asarray([str(r) for r in self.row_id], dtype=object)
            if self.row_id.shape != (n,):
                raise DataError(f"row_id has {self.row_id.size} entries for {n} rows")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def check_binary(self):
        if not np.all((self.y == 0) | (self.y == 1)):
            raise DataError("labels must be 0 or 1 for classification")

    def subset(self, idx):
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.y[idx], self.w[idx], self.row_id[idx])

    def with_weights(self, w):
        return Dataset(self.X, self.y, w, self.row_id)


@dataclass(frozen=True)
class Penalty:
    lam: float = 0.0
    kind: str = "none"

    def __post_init__(self):
        if self.kind not in ("none", "l1"):
            raise ConfigError("penalty.kind", f"expected 'none' or 'l1', got {self.kind!r}")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ConfigError("penalty.lambda", "must be a finite non-negative number")
        if self.kind == "none" and self.lam != 0:
            raise ConfigError("penalty.lambda", "kind 'none' requires lambda = 0")

    @classmethod
    def l1(cls, lam):
        return cls(float(lam), "l1")

    @property
    def strength(self):
        return self.lam if self.kind == "l1" else 0.0

    def to_dict(self):
        return {"lambda": self.lam, "kind": self.kind}

    @classmethod
    def from_dict(cls, obj, path="penalty"):
        if obj is None:
            return cls()
        if not isinstance(obj, dict):
            raise ConfigError(path, "must be an object")
        lam = obj.get("lambda", 0.0)
        if not isinstance(lam, (int, float)) or isinstance(lam, bool):
            raise ConfigError(f"{path}.lambda", "must be a number")
        kind = obj.get("kind", "l1" if lam > 0 else "none")
        return cls(float(lam), kind)


def balanced_weights(y):
    """Inverse class-frequency weights.

    >>> balanced_weights([1, 0, 0, 0]).tolist()
    [4.0, 1.3333333333333333, 1.3333333333333333, 1.3333333333333333]
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    n = y.size
    n1 = int(np.sum(y == 1))
    n0 = int(np.sum(y == 0))
    if n1 + n0 != n:
        raise DataError("labels must be 0 or 1")
    if n1 == 0 or n0 == 0:
        raise DataError("balanced weights need both classes present")
    return np.where(y == 1, n / n1, n / n0)


# ---------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class CoefficientModel:
    fmap: FeatureMap
    theta: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).reshape(-1)
        if theta.size != self.fmap.width:
            raise DataError(f"theta has {theta.size} entries, map width is {self.fmap.width}")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    def linear_predictor(self, X):
        return build_design(self.fmap, X) @ self.theta

    def predict_proba(self, X, row_ids=None):
        return expit(self.linear_predictor(X))

    def predict(self, X, row_ids=None):
        return (self.linear_predictor(X) > 0).astype(int)

    def restrict(self, fmap):
        """Sub-model keeping only the columns of ``fmap`` (a sub-map of ours)."""
        names = self.fmap.column_names()
        index = {name: i for i, name in enumerate(names)}
        try:
            cols = [index[name] for name in fmap.column_names()]
        except KeyError as exc:
            raise ConfigError("map", f"column {exc.args[0]} is not part of the fitted map") from None
        return CoefficientModel(fmap, self.theta[cols], dict(self.meta))

    def to_dict(self):
        return {"map": self.fmap.to_dict(), "theta": self.theta.tolist(), "meta": dict(self.meta)}


@dataclass(frozen=True)
class KernelModel:
    """Gaussian-kernel Nadaraya-Watson estimate of ``P(y=1 | x)``."""

    bandwidth: float
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ConfigError("bandwidth", "must be positive")

    def predict_proba(self, X, row_ids=None, chunk=2048):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.X.shape[1]:
            raise DataError(f"query has shape {X.shape}, model expects {self.X.shape[1]} columns")
        fallback = float(np.mean(self.y))
        out = np.empty(X.shape[0])
        sq_train = np.sum(self.X**2, axis=1)
        for start in range(0, X.shape[0], chunk):
            Q = X[start:start + chunk]
            d2 = np.sum(Q**2, axis=1)[:, None] + sq_train[None, :] - 2.0 * Q @ self.X.T
            K = np.exp(-0.5 * np.maximum(d2, 0.0) / self.bandwidth**2)
            # same reduction for numerator and mass so constant labels are exact
            mass = K @ np.ones_like(self.y)
            num = K @ self.y
            with np.errstate(invalid="ignore", divide="ignore"):
                est = num / mass
            out[start:start + chunk] = np.where(mass > 0, est, fallback)
        return np.clip(out, 0.0, 1.0)

    def to_dict(self):
        return {
            "kind": "kernel",
            "bandwidth": self.bandwidth,
            "X": self.X.tolist(),
            "y": self.y.tolist(),
        }


@dataclass(frozen=True)
class ExternalModel:
    """Probabilities computed outside this package, looked up by row id."""

    probabilities: dict
    path: Optional[str] = None

    def __post_init__(self):
        table = {str(k): float(v) for k, v in self.probabilities.items()}
        bad = [k for k, v in table.items() if not 0.0 <= v <= 1.0]
        if bad:
            raise DataError(f"probabilities outside [0, 1] for row ids {bad[:10]}")
        object.__setattr__(self, "probabilities", table)

    def missing(self, row_ids):
        return [str(r) for r in row_ids if str(r) not in self.probabilities]

    def predict_proba(self, X=None, row_ids=None):
        if row_ids is None:
            raise DataError("external source model needs row ids to look up probabilities")
        missing = self.missing(row_ids)
        if missing:
            raise DataError(f"row ids missing from external probabilities: {missing[:20]}"
                            + (" ..." if len(missing) > 20 else ""))
        return np.array([self.probabilities[str(r)] for r in row_ids], dtype=float)

    def to_dict(self):
        out = {"kind": "external", "probabilities": dict(self.probabilities)}
        if self.path is not None:
            out["path"] = self.path
        return out


def load_external_csv(path):
    """Read a ``row_id,probability`` CSV into an :class:`ExternalModel`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"row_id", "probability"} <= set(reader.fieldnames):
            raise DataError(f"{path}: header must contain row_id,probability")
        table = {}
        for lineno, row in enumerate(reader, start=2):
            try:
                table[row["row_id"]] = float(row["probability"])
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad probability {row['probability']!r}") from None
    return ExternalModel(table, path=str(path))


def source_model_from_dict(obj, path="source"):
    if not isinstance(obj, dict):
        raise ConfigError(path, "source model must be a JSON object")
    kind = obj.get("kind", "coefficients")
    if kind == "coefficients":
        if "map" not in obj or "theta" not in obj:
            raise ConfigError(path, "coefficient model needs 'map' and 'theta'")
        fmap = FeatureMap.from_dict(obj["map"], f"{path}.map")
        return CoefficientModel(fmap, np.asarray(obj["theta"], dtype=float), dict(obj.get("meta", {})))
    if kind == "kernel":
        return KernelModel(float(obj["bandwidth"]), np.asarray(obj["X"], dtype=float),
                           np.asarray(obj["y"], dtype=float))
    if kind == "external":
        if "probabilities" in obj:
            return ExternalModel(obj["probabilities"], obj.get("path"))
        if "path" in obj:
            return load_external_csv(obj["path"])
        raise ConfigError(path, "external model needs 'probabilities' or 'path'")
    raise ConfigError(f"{path}.kind", f"unknown source model kind {kind!r}")


def predict_proba(model, X=None, row_ids=None):
    """Source probability for each row. ``X`` may be a single vector."""
    if X is not None:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            return float(model.predict_proba(X[None, :], row_ids)[0])
    return model.predict_proba(X, row_ids)


# ---------------------------------------------------------------------------
# fitting


def _standardize(Phi, intercept_mask):
    mu = np.zeros(Phi.shape[1])
    sd = np.ones(Phi.shape[1])
    scalable = ~intercept_mask
    if Phi.shape[0] > 1:
        sd_raw = Phi[:, scalable].std(axis=0)
        sd[scalable] = np.where(sd_raw > 0, sd_raw, 1.0)
    if intercept_mask.any():
        mu[scalable] = Phi[:, scalable].mean(axis=0)
    return (Phi - mu) / sd, mu, sd


def fit_logistic(data, fmap, penalty=None, offset=None, standardize=False, **solver_kw):
    """Weighted, offset, optionally lasso-penalized logistic regression.

    Minimizes ``(1/n) sum_i w_i loss(y_i, offset_i + theta . phi(x_i))
    + lam * ||theta_non_intercept||_1``.

    With ``standardize=True`` the non-intercept columns are z-scored before
    fitting (which changes what the penalty means) and the coefficients are
    mapped back to the original column scale. Centering is only applied when
    the map has an intercept to absorb it.

    Returns ``(CoefficientModel, FitReport)``. Non-convergence is reported in
    the ``FitReport``, never raised.
    """
    penalty = penalty or Penalty()
    data.check_binary()
    if data.n < 1:
        raise DataError("cannot fit a model on an empty dataset")
    Phi = build_design(fmap, data.X)
    if offset is not None:
        offset = np.asarray(offset, dtype=float)
        if offset.shape != (data.n,):
            raise DataError(f"offset has shape {offset.shape}, expected ({data.n},)")
    icpt = fmap.intercept_mask()
    if standardize:
        Phi, mu, sd = _standardize(Phi, icpt)
    theta, report = fit_design(
        Phi, data.y, data.w, offset, lam=penalty.strength, penalized=~icpt, **solver_kw
    )
    if standardize:
        theta = theta / sd
        if icpt.any():
            theta[icpt] -= float(np.sum(theta[~icpt] * mu[~icpt]))
    meta = {"lambda": penalty.strength, "converged": report.converged, "iterations": report.iterations}
    return CoefficientModel(fmap, theta, meta), report


def default_bandwidth(m, d, smoothness=2.0):
    return float(m ** (-1.0 / (2.0 * smoothness + d)))


def fit_kernel(data, bandwidth=None):
    """Nadaraya-Watson smoother; bandwidth defaults to ``m**(-1/(4 + d))``."""
    if data.n < 1:
        raise DataError("kernel smoother needs at least one training row")
    h = default_bandwidth(data.n, data.d) if bandwidth is None else float(bandwidth)
    return KernelModel(h, data.X.copy(), data.y.copy())
