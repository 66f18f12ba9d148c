"""Link functions and the binomial entropy loss.

Every fit in the package uses the logit link. The probit, cauchit and
cloglog inverse links are only used to generate labels in simulations.
"""

from enum import Enum

import numpy as np
from scipy.special import expit, ndtr

from .errors import DomainError


class LinkKind(str, Enum):
    LOGIT = "logit"
    PROBIT = "probit"
    CAUCHIT = "cauchit"
    CLOGLOG = "cloglog"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(
                f"unknown link {value!r}; expected one of {[k.value for k in cls]}"
            ) from None


def _scalar_or_array(out, like):
    if np.ndim(like) == 0:
        return float(out)
    return out


def sigmoid(a):
    """Inverse logit ``1 / (1 + exp(-a))``.

    Evaluated without exponentiating large positive numbers, so extreme
    inputs saturate to 0 or 1 instead of overflowing. NaN propagates.
    """
    arr = np.asarray(a, dtype=float)
    return _scalar_or_array(expit(arr), a)


def logit(p):
    """Log-odds ``log(p / (1 - p))`` for ``p`` strictly inside (0, 1).

    Raises
    ------
    DomainError
        If any entry is outside the open unit interval. Callers holding
        probabilities that may touch 0 or 1 must clamp first.
    """
    arr = np.asarray(p, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise DomainError("logit is only defined on the open interval (0, 1)")
    out = np.log(arr) - np.log1p(-arr)
    return _scalar_or_array(out, p)


def log1pexp(a):
    """``log(1 + exp(a))`` as ``max(a, 0) + log1p(exp(-|a|))``."""
    arr = np.asarray(a, dtype=float)
    return np.maximum(arr, 0.0) + np.log1p(np.exp(-np.abs(arr)))


def entropy_loss(y, a):
    """Binomial negative log-likelihood ``-y*a + log(1 + exp(a))``.

    ``a`` is the linear predictor on the logit scale. Broadcasts over
    arrays; returns a float for scalar inputs.
    """
    y_arr = np.asarray(y, dtype=float)
    a_arr = np.asarray(a, dtype=float)
    # Rewritten per label so that the confident-correct case never
    # subtracts two large numbers: y=1 -> log1pexp(-a), y=0 -> log1pexp(a).
    out = y_arr * log1pexp(-a_arr) + (1.0 - y_arr) * log1pexp(a_arr)
    if np.ndim(y) == 0 and np.ndim(a) == 0:
        return float(out)
    return out


def entropy_grad(y, a):
    """Derivative of :func:`entropy_loss` with respect to ``a``."""
    return expit(np.asarray(a, dtype=float)) - np.asarray(y, dtype=float)


def normal_cdf(a):
    # scipy's ndtr (Cephes) is accurate to double precision across the line.
    return ndtr(a)


def inverse_link(kind, a):
    """Map a linear predictor to a probability under the given link.

    ``logit`` gives the sigmoid, ``probit`` the standard normal CDF,
    ``cauchit`` ``1/2 + arctan(a)/pi`` and ``cloglog`` ``1 - exp(-exp(a))``.
    """
    kind = LinkKind.parse(kind)
    arr = np.asarray(a, dtype=float)
    if kind is LinkKind.LOGIT:
        out = expit(arr)
    elif kind is LinkKind.PROBIT:
        out = normal_cdf(arr)
    elif kind is LinkKind.CAUCHIT:
        out = 0.5 + np.arctan(arr) / np.pi
    else:
        with np.errstate(over="ignore"):
            out = -np.expm1(-np.exp(arr))
    return _scalar_or_array(out, a)
