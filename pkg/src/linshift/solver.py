"""Weighted, offset, optionally L1-penalized logistic regression on a design
matrix.

The objective is::

    (1/n) * sum_i w_i * loss(y_i, offset_i + Phi_i @ theta) + lam * ||theta[pen]||_1

Unpenalized problems use Newton / IRLS steps. Penalized problems use a
proximal Newton scheme: the IRLS quadratic model is minimized with cyclic
coordinate descent and soft-thresholding, followed by a backtracking line
search on the true objective.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ConvergenceWarning, DataError
from .glm_core import entropy_loss

MAX_ITER = 200
REL_TOL = 1e-9
KKT_TOL = 1e-7
THETA_CAP = 30.0


@dataclass
class FitReport:
    iterations: int
    objective: float
    kkt_residual: float
    converged: bool
    objective_history: list = field(default_factory=list)
    message: str = ""

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "objective": self.objective,
            "kkt_residual": self.kkt_residual,
            "converged": self.converged,
            "message": self.message,
        }


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def objective(theta, Phi, y, w, offset, lam=0.0, penalized=None):
    n = Phi.shape[0]
    a = offset + Phi @ theta
    value = float(np.sum(w * entropy_loss(y, a)) / n)
    if lam > 0 and penalized is not None:
        value += lam * float(np.abs(theta[penalized]).sum())
    return value


def smooth_gradient(theta, Phi, y, w, offset):
    n = Phi.shape[0]
    a = offset + Phi @ theta
    return Phi.T @ (w * (expit(a) - y)) / n


def kkt_residual(theta, grad, lam, penalized):
    """Largest violation of the (sub)gradient optimality conditions.

    Unpenalized coordinates need ``grad_j == 0``. Penalized coordinates need
    ``|grad_j| <= lam`` when ``theta_j == 0`` and ``grad_j + lam*sign(theta_j) == 0``
    otherwise.
    """
    theta = np.asarray(theta, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if grad.size == 0:
        return 0.0
    if lam <= 0 or penalized is None:
        return float(np.max(np.abs(grad)))
    res = np.abs(grad).copy()
    pen = np.asarray(penalized, dtype=bool)
    zero = pen & (theta == 0)
    nonzero = pen & (theta != 0)
    res[zero] = np.maximum(np.abs(grad[zero]) - lam, 0.0)
    res[nonzero] = np.abs(grad[nonzero] + lam * np.sign(theta[nonzero]))
    return float(np.max(res))


def _hessian(theta, Phi, w, offset):
    n = Phi.shape[0]
    p = expit(offset + Phi @ theta)
    h = w * p * (1.0 - p) / n
    return (Phi * h[:, None]).T @ Phi


def _newton_direction(H, g):
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(H, -g, rcond=None)[0]
    z = np.linalg.solve(L, -g)
    return np.linalg.solve(L.T, z)


def _cd_quadratic(H, g, theta0, lam, penalized, max_sweeps=10_000, tol=1e-15):
    """Minimize ``g'(t - t0) + 0.5 (t - t0)' H (t - t0) + lam*||t[pen]||_1``.

    Cyclic coordinate descent with a running gradient of the quadratic part.
    Coordinates with zero curvature are left untouched.
    """
    theta = theta0.copy()
    v = g.copy()  # gradient of the quadratic part at theta
    diag = np.diag(H).copy()
    p = theta.size
    active = diag > 1e-300
    for _ in range(max_sweeps):
        max_change = 0.0
        for j in range(p):
            if not active[j]:
                continue
            old = theta[j]
            z = old - v[j] / diag[j]
            new = soft_threshold(z, lam / diag[j]) if penalized[j] else z
            if new != old:
                delta = new - old
                theta[j] = new
                v += H[:, j] * delta
                max_change = max(max_change, abs(delta) * np.sqrt(diag[j]))
        if max_change < tol:
            break
    return theta


def fit_design(
    Phi,
    y,
    w=None,
    offset=None,
    lam=0.0,
    penalized=None,
    theta0=None,
    max_iter=MAX_ITER,
    rel_tol=REL_TOL,
    kkt_tol=KKT_TOL,
    theta_cap=THETA_CAP,
):
    """Fit the (penalized) offset logistic objective on a dense design.

    Parameters
    ----------
    Phi : ndarray, shape (n, p)
    y : ndarray, shape (n,)
        Labels in {0, 1}.
    w : ndarray, shape (n,), optional
        Positive sample weights; the loss is divided by ``n``, not by the
        weight total.
    offset : ndarray, shape (n,), optional
        Known additive term on the logit scale.
    lam : float
        L1 strength applied to coordinates flagged in ``penalized``.
    penalized : ndarray of bool, shape (p,), optional
        Defaults to all-False (nothing penalized).

    Returns
    -------
    theta : ndarray, shape (p,)
    report : FitReport
        ``converged`` is False if the iteration budget ran out or the
        coefficients passed ``theta_cap`` (no finite optimum).
    """
    Phi = np.asarray(Phi, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = Phi.shape
    if n < 1:
        raise DataError("cannot fit a model on zero rows")
    if y.shape != (n,):
        raise DataError(f"label vector has shape {y.shape}, expected ({n},)")
    w = np.ones(n) if w is None else np.asarray(w, dtype=float)
    offset = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    if w.shape != (n,) or offset.shape != (n,):
        raise DataError("weights and offset must have one entry per row")
    if not np.all(np.isfinite(offset)):
        raise DataError("offset contains non-finite values")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise DataError("weights must be finite and strictly positive")
    if lam < 0:
        raise ValueError("penalty strength must be non-negative")
    penalized = np.zeros(p, dtype=bool) if penalized is None else np.asarray(penalized, dtype=bool)
    use_l1 = lam > 0 and penalized.any()

    theta = np.zeros(p) if theta0 is None else np.asarray(theta0, dtype=float).copy()

    def full_obj(t):
        return objective(t, Phi, y, w, offset, lam if use_l1 else 0.0, penalized)

    f = full_obj(theta)
    history = [f]
    grad = smooth_gradient(theta, Phi, y, w, offset)
    kkt = kkt_residual(theta, grad, lam if use_l1 else 0.0, penalized)
    if kkt < kkt_tol:
        return theta, FitReport(0, f, kkt, True, history, "initial point is optimal")

    converged = False
    message = "iteration budget exhausted"
    it = 0
    for it in range(1, max_iter + 1):
        H = _hessian(theta, Phi, w, offset)
        if use_l1:
            target = _cd_quadratic(H, grad, theta, lam, penalized)
            direction = target - theta
            l1_now = lam * np.abs(theta[penalized]).sum()
            l1_new = lam * np.abs(target[penalized]).sum()
            decrease = float(grad @ direction + l1_new - l1_now)
        else:
            direction = _newton_direction(H, grad)
            decrease = float(grad @ direction)

        # Backtracking on the full objective; keeps the history monotone.
        step = 1.0
        f_new = f
        accepted = False
        for _ in range(60):
            cand = theta + step * direction
            f_cand = full_obj(cand)
            if np.isfinite(f_cand) and f_cand <= f + 1e-4 * step * min(decrease, 0.0):
                accepted = True
                break
            step *= 0.5
        if accepted and f_cand <= f:
            theta = cand
            f_new = f_cand
        grad = smooth_gradient(theta, Phi, y, w, offset)
        kkt = kkt_residual(theta, grad, lam if use_l1 else 0.0, penalized)
        history.append(f_new)

        if np.max(np.abs(theta), initial=0.0) > theta_cap:
            message = f"coefficients exceeded {theta_cap}; no finite optimum (separable data?)"
            warnings.warn(message, ConvergenceWarning, stacklevel=3)
            break
        rel_change = abs(f - f_new) / max(abs(f), 1e-300)
        f = f_new
        if kkt < kkt_tol and rel_change < rel_tol:
            converged = True
            message = "converged"
            break
        if not accepted:
            message = "line search failed to decrease the objective"
            converged = kkt < kkt_tol
            break
    return theta, FitReport(it, f, kkt, converged, history, message)
