"""Linear-shift transfer of a source model to a target domain.

The target log-odds are modeled as the source log-odds plus ``beta . T(x)``.
``beta`` is fitted on target rows by logistic regression with the (clamped)
source log-odds as a fixed offset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import expit

from .errors import ConfigError, DataError, RankDeficientError
from .features import FeatureMap, build_design
from .glm_core import logit
from .solver import fit_design
from .source_fit import (
    Penalty,
    fit_logistic,
    source_model_from_dict,
)

DEFAULT_CLAMP = 1e-6


def clamp(p, eps):
    return np.clip(np.asarray(p, dtype=float), eps, 1.0 - eps)


def source_logits(source, X, row_ids=None, eps=DEFAULT_CLAMP):
    """Source log-odds used as the transfer offset.

    Models that expose ``linear_predictor`` hand over their logit directly;
    going through a probability would saturate at float precision. All other
    sources give ``logit(clip(eta_P(x), eps, 1 - eps))``.
    """
    if hasattr(source, "linear_predictor"):
        return np.asarray(source.linear_predictor(X), dtype=float)
    return logit(clamp(source.predict_proba(X, row_ids), eps))


def count_clamped(source, X, row_ids=None, eps=DEFAULT_CLAMP):
    if hasattr(source, "linear_predictor"):
        return 0
    p = np.asarray(source.predict_proba(X, row_ids), dtype=float)
    return int(np.sum((p < eps) | (p > 1.0 - eps)))


@dataclass(frozen=True)
class TransferModel:
    source: object
    shift_map: FeatureMap
    beta: np.ndarray
    clamp_eps: float = DEFAULT_CLAMP
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).reshape(-1)
        if beta.size != self.shift_map.width:
            raise DataError(f"beta has {beta.size} entries, shift map width is {self.shift_map.width}")
        if not 0.0 < self.clamp_eps < 0.5:
            raise ConfigError("clamp_eps", "must lie in (0, 0.5)")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    def decision_function(self, X, row_ids=None):
        """Target log-odds: clamped source logit plus the fitted shift."""
        X = np.asarray(X, dtype=float)
        off = source_logits(self.source, X, row_ids, self.clamp_eps)
        return off + build_design(self.shift_map, X) @ self.beta

    def predict_proba(self, X, row_ids=None):
        return expit(self.decision_function(X, row_ids))

    def predict(self, X, row_ids=None):
        # Strict inequality: a tie at exactly 1/2 predicts 0.
        return (self.decision_function(X, row_ids) > 0).astype(int)

    def to_dict(self):
        return {
            "source": self.source.to_dict(),
            "shift_map": self.shift_map.to_dict(),
            "beta": self.beta.tolist(),
            "clamp_eps": self.clamp_eps,
        }

    @classmethod
    def from_dict(cls, obj):
        for key in ("source", "shift_map", "beta"):
            if key not in obj:
                raise ConfigError(key, "missing from transfer model")
        return cls(
            source_model_from_dict(obj["source"]),
            FeatureMap.from_dict(obj["shift_map"], "shift_map"),
            np.asarray(obj["beta"], dtype=float),
            float(obj.get("clamp_eps", DEFAULT_CLAMP)),
        )


def fit_transfer(source, target, shift_map=None, penalty=None, clamp_eps=DEFAULT_CLAMP, **solver_kw):
    """Estimate the shift ``beta`` from target data.

    This is :func:`~linshift.source_fit.fit_logistic` on the target rows with
    ``offset = logit(clip(eta_P(x), eps, 1 - eps))`` and map ``shift_map``
    (intercept plus all mains by default). The fit starts from ``beta = 0``.

    Returns ``(TransferModel, FitReport)``.
    """
    if target.n < 1:
        raise DataError("transfer needs at least one target row")
    if shift_map is None:
        shift_map = FeatureMap.main_effects(target.d)
    if not 0.0 < clamp_eps < 0.5:
        raise ConfigError("clamp_eps", "must lie in (0, 0.5)")
    offset = source_logits(source, target.X, target.row_id, clamp_eps)
    fitted, report = fit_logistic(target, shift_map, penalty, offset=offset, **solver_kw)
    meta = dict(fitted.meta)
    meta["clamped_rows"] = count_clamped(source, target.X, target.row_id, clamp_eps)
    return TransferModel(source, shift_map, fitted.theta, clamp_eps, meta), report


def predict_target_proba(model, x, row_ids=None):
    """``sigmoid(logit(clip(eta_P(x))) + beta . T(x))``; accepts one row or many."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        rid = None if row_ids is None else [row_ids] if np.ndim(row_ids) == 0 else row_ids
        return float(model.predict_proba(x[None, :], rid)[0])
    return model.predict_proba(x, row_ids)


def classify(model, x, row_ids=None):
    """Plug-in label ``1{eta_Q_hat(x) > 1/2}``, i.e. positive target log-odds."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        rid = None if row_ids is None else [row_ids] if np.ndim(row_ids) == 0 else row_ids
        return int(model.predict(x[None, :], rid)[0])
    return model.predict(x, row_ids)


# ---------------------------------------------------------------------------
# joint estimator


@dataclass(frozen=True)
class JointModel:
    s_map: FeatureMap
    t_map: FeatureMap
    xi: np.ndarray
    beta_p: np.ndarray
    beta: np.ndarray

    @property
    def beta_q(self):
        return self.beta_p + self.beta

    def source_logit(self, X):
        return build_design(self.s_map, X) @ self.xi + build_design(self.t_map, X) @ self.beta_p

    def target_logit(self, X):
        return build_design(self.s_map, X) @ self.xi + build_design(self.t_map, X) @ self.beta_q

    def predict_proba(self, X, row_ids=None, domain="target"):
        lin = self.target_logit(X) if domain == "target" else self.source_logit(X)
        return expit(lin)

    def predict(self, X, row_ids=None):
        return (self.predict_proba(X) > 0.5).astype(int)


def joint_design(source, target, s_map, t_map):
    """Stacked design ``[S | T | 1_Q * T]`` with source rows first."""
    d = source.d if source.n else target.d
    X = np.vstack([source.X.reshape(source.n, d), target.X.reshape(target.n, d)])
    S = build_design(s_map, X)
    T = build_design(t_map, X)
    indicator = np.r_[np.zeros(source.n), np.ones(target.n)]
    return np.hstack([S, T, T * indicator[:, None]])


def fit_joint(source, target, s_map, t_map, penalty=None, **solver_kw):
    """Pooled fit of ``(xi, beta_P, beta)`` on source and target rows together.

    Source rows get log-odds ``xi.S(x) + beta_P.T(x)`` and target rows
    ``xi.S(x) + (beta_P + beta).T(x)``. Intercept columns are never
    penalized. Returns ``(JointModel, FitReport)``.
    """
    penalty = penalty or Penalty()
    if s_map.include_intercept and t_map.include_intercept:
        raise ConfigError("s_map", "S and T both carry an intercept; drop one of them")
    if source.n + target.n < 1:
        raise DataError("joint fit needs at least one row")
    source.check_binary()
    target.check_binary()
    Phi = joint_design(source, target, s_map, t_map)
    y = np.r_[source.y, target.y]
    w = np.r_[source.w, target.w]
    icpt = np.r_[s_map.intercept_mask(), t_map.intercept_mask(), t_map.intercept_mask()]
    theta, report = fit_design(Phi, y, w, None, lam=penalty.strength, penalized=~icpt, **solver_kw)
    ps, pt = s_map.width, t_map.width
    model = JointModel(s_map, t_map, theta[:ps], theta[ps:ps + pt], theta[ps + pt:])
    return model, report


# ---------------------------------------------------------------------------
# Gaussian GLM: the shift is an ordinary least-squares fit on residuals


def fit_transfer_gaussian(mu_hat_p, target, shift_map=None, rank_tol=None):
    """Least-squares shift for a Gaussian response with identity link.

    Solves ``min_beta (1/n) ||y - mu_hat_p - T beta||^2`` with a column-pivoted
    QR factorization of ``T``. The target prediction is then
    ``mu_hat_p(x) + beta . T(x)``.

    Raises
    ------
    RankDeficientError
        If ``T`` does not have full column rank; ``columns`` lists the
        dependent column names.
    """
    mu = np.asarray(mu_hat_p, dtype=float).reshape(-1)
    if shift_map is None:
        shift_map = FeatureMap.main_effects(target.d)
    T = build_design(shift_map, target.X)
    n, p = T.shape
    if mu.shape != (n,):
        raise DataError(f"mu_hat_p has {mu.size} entries for {n} target rows")
    if n < p:
        raise RankDeficientError(shift_map.column_names()[n:],
                                 f"need at least {p} rows for {p} shift columns, got {n}")
    resid = target.y - mu
    if p == 0:
        return np.zeros(0)
    Q, R, piv = scipy.linalg.qr(T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = rank_tol if rank_tol is not None else max(n, p) * np.finfo(float).eps * diag[0]
    rank = int(np.sum(diag > tol))
    if rank < p:
        names = shift_map.column_names()
        raise RankDeficientError([names[j] for j in piv[rank:]])
    z = scipy.linalg.solve_triangular(R, Q.T @ resid)
    beta = np.empty(p)
    beta[piv] = z
    return beta
