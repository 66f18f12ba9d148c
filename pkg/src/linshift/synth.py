"""Synthetic source/target pairs with a known linear posterior shift.

Covariates are ``N(0, 4 I_d)`` in both domains. On the link scale the source
and target predictors are::

    source: sum_j s_j * (xi * x_j**2 - delta * x_j)
    target: sum_j s_j * (xi * x_j**2 + delta * x_j)

with alternating signs ``s_j = (-1)**j`` (``j`` counted from 0). Their
difference ``2 * delta * sum_j s_j x_j`` is exactly linear in the mains.

Random streams
--------------
Every draw comes from ``numpy.random.Generator(PCG64(SeedSequence(
[seed, stream, replicate])))`` where ``stream`` is 0 for source training
rows, 1 for target training rows, 2 for target Monte-Carlo evaluation rows
and 3 for source Monte-Carlo evaluation rows. Replicates and domains are
therefore independent and individually reproducible.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import ConfigError
from .glm_core import LinkKind, inverse_link, sigmoid
from .source_fit import Dataset

STREAMS = {"source": 0, "target": 1, "mc_target": 2, "mc_source": 3}
X_SCALE = 2.0  # standard deviation of each covariate


@dataclass(frozen=True)
class SimConfig:
    d: int = 5
    m: int = 2000
    n: int = 100
    xi: float = 1.0
    delta: float = 2.0
    link: str = "logit"
    seed: int = 0
    n_mc: int = 200_000

    def __post_init__(self):
        for name in ("d", "m", "n", "n_mc", "seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigError(name, f"must be an integer, got {value!r}")
        if self.d < 1:
            raise ConfigError("d", "must be at least 1")
        for name in ("m", "n", "n_mc", "seed"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be non-negative")
        for name in ("xi", "delta"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ConfigError(name, f"must be a finite number, got {value!r}")
        try:
            object.__setattr__(self, "link", LinkKind.parse(self.link).value)
        except ValueError as exc:
            raise ConfigError("link", str(exc)) from None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, obj, path=""):
        if not isinstance(obj, dict):
            raise ConfigError(path or "config", "must be a JSON object")
        allowed = set(cls.__dataclass_fields__)
        unknown = set(obj) - allowed
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(f"{path}.{key}" if path else key, "unknown field")
        try:
            return cls(**obj)
        except ConfigError as exc:
            if path:
                raise ConfigError(f"{path}.{exc.path}", str(exc).split(": ", 1)[-1]) from None
            raise

    def with_(self, **changes):
        return replace(self, **changes)

    def beta_true(self):
        """Shift over ``[intercept, x_1..x_d]`` that maps source to target."""
        return np.r_[0.0, 2.0 * self.delta * signs(self.d)]


class MCEstimate(NamedTuple):
    value: float
    se: float


def signs(d):
    return np.where(np.arange(d) % 2 == 0, 1.0, -1.0)


def rng_for(config, stream, replicate=0):
    key = STREAMS[stream] if isinstance(stream, str) else int(stream)
    ss = np.random.SeedSequence([int(config.seed), key, int(replicate)])
    return np.random.Generator(np.random.PCG64(ss))


def _domain_sign(domain):
    if domain == "source":
        return -1.0
    if domain == "target":
        return 1.0
    raise ValueError(f"domain must be 'source' or 'target', got {domain!r}")


def true_logit(config, domain, x):
    """Generating linear predictor on the link scale; vectorized over rows."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != config.d:
        raise ValueError(f"expected {config.d} covariates, got {X.shape[1]}")
    s = signs(config.d)
    out = (config.xi * X**2 + _domain_sign(domain) * config.delta * X) @ s
    return float(out[0]) if single else out


def true_prob(config, domain, x):
    return inverse_link(config.link, true_logit(config, domain, x))


def sample_x(config, size, rng):
    return X_SCALE * rng.standard_normal((size, config.d))


def generate(config, domain, replicate=0, size=None):
    """Draw a labelled dataset for one domain.

    ``size`` defaults to ``config.m`` for the source and ``config.n`` for the
    target.
    """
    if size is None:
        size = config.m if domain == "source" else config.n
    rng = rng_for(config, domain, replicate)
    X = sample_x(config, size, rng)
    p = true_prob(config, domain, X) if size else np.zeros(0)
    y = (rng.random(size) < p).astype(float)
    return Dataset(X.reshape(size, config.d), y)


def mc_sample(config, domain="target", replicate=0, size=None):
    """Unlabelled evaluation covariates for Monte-Carlo risk estimates."""
    size = config.n_mc if size is None else size
    rng = rng_for(config, f"mc_{domain}", replicate)
    return sample_x(config, size, rng)


def oracle_source_model(config):
    """The exact source probability as a predict_proba-style object.

    Under the logit link the oracle also exposes its exact log-odds, which
    the transfer fit then uses without clamping.
    """
    cls = _LogitOracleModel if config.link == "logit" else _OracleModel
    return cls(config, "source")


class _OracleModel:
    def __init__(self, config, domain):
        self.config = config
        self.domain = domain

    def predict_proba(self, X, row_ids=None):
        return np.asarray(true_prob(self.config, self.domain, np.asarray(X, dtype=float)))

    def to_dict(self):
        return {"kind": "oracle", "domain": self.domain, "config": self.config.to_dict()}


class _LogitOracleModel(_OracleModel):
    def linear_predictor(self, X):
        return np.asarray(true_logit(self.config, self.domain, np.asarray(X, dtype=float)))


def bayes_rule(config, domain="target"):
    def f(X):
        return (true_prob(config, domain, X) > 0.5).astype(int)
    return f


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return MCEstimate(float(values.mean()) if values.size else float("nan"), float("nan"))
    return MCEstimate(float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size)))


def expected_accuracy(classifier, config, domain="target", X=None, replicate=0):
    """Accuracy of ``classifier`` averaged over ``P(y | x)`` at MC covariates.

    Each evaluation point contributes ``eta(x)`` if it is classified 1 and
    ``1 - eta(x)`` otherwise; this has the same mean as scoring against
    sampled labels with less variance.
    """
    if X is None:
        X = mc_sample(config, domain, replicate)
    eta = true_prob(config, domain, X)
    f = np.asarray(classifier(X)).astype(float)
    return _mean_se(f * eta + (1.0 - f) * (1.0 - eta))


def bayes_accuracy(config, domain="target", X=None, replicate=0):
    """MC estimate of the accuracy of ``1{eta(x) > 1/2}`` with its standard error."""
    if config.n_mc < 1 and X is None:
        raise ConfigError("n_mc", "must be at least 1 for Monte-Carlo evaluation")
    return expected_accuracy(bayes_rule(config, domain), config, domain, X, replicate)


def excess_risk(classifier, config, domain="target", X=None, replicate=0):
    """MC estimate of ``E|2 eta(x) - 1| * 1{f(x) != f*(x)}``.

    The classifier and the Bayes rule are compared on the same covariates,
    so the Bayes rule itself scores exactly zero.
    """
    if config.n_mc < 1 and X is None:
        raise ConfigError("n_mc", "must be at least 1 for Monte-Carlo evaluation")
    if X is None:
        X = mc_sample(config, domain, replicate)
    eta = true_prob(config, domain, X)
    f_star = (eta > 0.5).astype(int)
    f = np.asarray(classifier(X)).astype(int)
    return _mean_se(np.abs(2.0 * eta - 1.0) * (f != f_star))


# ---------------------------------------------------------------------------
# label shift: shared class conditionals, different class priors


@dataclass(frozen=True)
class LabelShiftConfig:
    """Class-conditional Gaussians ``x | y=k ~ N(mu_k, I)`` with per-domain priors."""

    mu0: tuple = (-1.0,)
    mu1: tuple = (1.0,)
    prior_source: float = 0.5
    prior_target: float = 0.75
    seed: int = 0

    @property
    def d(self):
        return len(self.mu0)

    def log_likelihood_ratio(self, X):
        X = np.asarray(X, dtype=float)
        mu0 = np.asarray(self.mu0, dtype=float)
        mu1 = np.asarray(self.mu1, dtype=float)
        return X @ (mu1 - mu0) - 0.5 * (mu1 @ mu1 - mu0 @ mu0)

    def prior(self, domain):
        return self.prior_source if domain == "source" else self.prior_target

    def posterior(self, domain, X):
        pi = self.prior(domain)
        return sigmoid(math.log(pi / (1 - pi)) + self.log_likelihood_ratio(X))

    def shift(self):
        """Population intercept shift: target log-odds of Y=1 minus source log-odds."""
        ps, pt = self.prior_source, self.prior_target
        return math.log(pt / (1 - pt)) - math.log(ps / (1 - ps))

    def generate(self, domain, size, replicate=0):
        key = 10 + (0 if domain == "source" else 1)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, key, replicate])))
        y = (rng.random(size) < self.prior(domain)).astype(float)
        mu = np.where(y[:, None] == 1, np.asarray(self.mu1), np.asarray(self.mu0))
        X = mu + rng.standard_normal((size, self.d))
        return Dataset(X, y)

    def source_model(self):
        cfg = self

        class _Posterior:
            def predict_proba(self, X, row_ids=None):
                return np.asarray(cfg.posterior("source", X))

            def to_dict(self):
                return {"kind": "oracle", "label_shift": asdict(cfg)}

        return _Posterior()
