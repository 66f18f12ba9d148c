"""Simulation sweeps, empirical rate checks and external-probability adjustment.

Model roster for :func:`run_sweep` (all fits use the logit link):

``source.main``    intercept + mains fitted on source rows
``source.full``    intercept + mains + squares + interactions on source rows
``target.main``    intercept + mains on target rows
``target.full``    the full map on target rows
``transfer``       squares + interactions frozen from ``source.full``;
                   intercept + mains refitted on target rows (offset fit)
``transfer.main``  ``source.main`` logits as offset, intercept + mains shift
``ideal``          the Bayes rule for the target domain
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import synth
from .errors import ConfigError, ConvergenceWarning, DataError
from .features import FeatureMap
from .glm_core import entropy_loss
from .io import csv_text
from .metrics import evaluate
from .source_fit import ExternalModel, Penalty, fit_logistic, load_external_csv
from .transfer import fit_transfer, source_logits

log = logging.getLogger(__name__)

MODELS = ("source.main", "source.full", "target.main", "target.full", "transfer", "transfer.main", "ideal")
SWEEP_PARAMS = ("m", "n", "delta", "xi", "d")
FAIL_FRACTION = 0.2
RESULT_COLUMNS = (
    "sweep_param", "sweep_value", "model", "mean_acc", "se_acc",
    "mean_excess_risk", "se_excess_risk", "replicates", "flagged",
)


@dataclass(frozen=True)
class ExperimentConfig:
    base: synth.SimConfig = field(default_factory=synth.SimConfig)
    sweep_param: str = "delta"
    sweep_values: tuple = (2.0,)
    models: tuple = MODELS
    replicates: int = 50
    penalty: Penalty = field(default_factory=Penalty)
    n_test: int = 20_000
    jobs: int = 1

    def __post_init__(self):
        if self.sweep_param not in SWEEP_PARAMS:
            raise ConfigError("sweep.parameter", f"expected one of {list(SWEEP_PARAMS)}")
        values = tuple(self.sweep_values)
        if not values:
            raise ConfigError("sweep.values", "must not be empty")
        for i, v in enumerate(values):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"sweep.values[{i}]", "must be a finite number")
            if self.sweep_param in ("m", "n", "d") and (int(v) != v or v < 1):
                raise ConfigError(f"sweep.values[{i}]", f"{self.sweep_param} must be a positive integer")
            if v < 0:
                raise ConfigError(f"sweep.values[{i}]", "must be non-negative")
        object.__setattr__(self, "sweep_values", values)
        models = tuple(self.models)
        for i, name in enumerate(models):
            if name not in MODELS:
                raise ConfigError(f"models[{i}]", f"unknown model {name!r}")
        object.__setattr__(self, "models", models)
        for name in ("replicates", "n_test", "jobs"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(name, "must be a positive integer")

    def config_for(self, value):
        if self.sweep_param in ("m", "n", "d"):
            value = int(value)
        else:
            value = float(value)
        return self.base.with_(**{self.sweep_param: value})

    def to_dict(self):
        return {
            "base": self.base.to_dict(),
            "sweep": {"parameter": self.sweep_param, "values": list(self.sweep_values)},
            "models": list(self.models),
            "replicates": self.replicates,
            "penalty": self.penalty.to_dict(),
            "n_test": self.n_test,
            "jobs": self.jobs,
        }

    @classmethod
    def from_dict(cls, obj):
        if not isinstance(obj, dict):
            raise ConfigError("", "experiment config must be a JSON object")
        allowed = {"base", "sweep", "models", "replicates", "penalty", "n_test", "jobs"}
        unknown = set(obj) - allowed
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field")
        sweep = obj.get("sweep", {})
        if not isinstance(sweep, dict):
            raise ConfigError("sweep", "must be an object with 'parameter' and 'values'")
        if "values" in sweep and not isinstance(sweep["values"], list):
            raise ConfigError("sweep.values", "must be a list")
        kw = {
            "base": synth.SimConfig.from_dict(obj.get("base", {}), "base"),
            "penalty": Penalty.from_dict(obj.get("penalty"), "penalty"),
        }
        if "parameter" in sweep:
            kw["sweep_param"] = sweep["parameter"]
        if "values" in sweep:
            kw["sweep_values"] = tuple(sweep["values"])
        if "models" in obj:
            if not isinstance(obj["models"], list):
                raise ConfigError("models", "must be a list")
            kw["models"] = tuple(obj["models"])
        for key in ("replicates", "n_test", "jobs"):
            if key in obj:
                kw[key] = obj[key]
        return cls(**kw)


@dataclass
class CellSummary:
    sweep_value: float
    model: str
    mean_acc: float
    se_acc: float
    mean_excess_risk: float
    se_excess_risk: float
    replicates: int
    failed: int
    flagged: bool


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list
    accuracies: dict  # (value, model) -> per-replicate accuracy, None for failed fits

    def cell(self, value, model):
        for row in self.rows:
            if row.sweep_value == value and row.model == model:
                return row
        raise KeyError((value, model))

    def to_csv(self):
        out = []
        for r in self.rows:
            out.append([
                self.config.sweep_param, r.sweep_value, r.model, r.mean_acc, r.se_acc,
                r.mean_excess_risk, r.se_excess_risk, r.replicates, r.flagged,
            ])
        return csv_text(RESULT_COLUMNS, out)

    def to_json(self):
        return {
            "config": self.config.to_dict(),
            "rows": [
                {
                    "sweep_param": self.config.sweep_param,
                    "sweep_value": r.sweep_value,
                    "model": r.model,
                    "mean_acc": r.mean_acc,
                    "se_acc": r.se_acc,
                    "mean_excess_risk": r.mean_excess_risk,
                    "se_excess_risk": r.se_excess_risk,
                    "replicates": r.replicates,
                    "failed": r.failed,
                    "flagged": r.flagged,
                }
                for r in self.rows
            ],
        }


def combined_se(a, b):
    return math.sqrt(a.se_acc**2 + b.se_acc**2)


# ---------------------------------------------------------------------------
# one replicate


def _quiet_fit(fn, *args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        return fn(*args, **kw)


def fit_roster(cfg, models, penalty, replicate):
    """Fit the requested models on one replicate.

    Returns ``{name: classifier or None}``; ``None`` marks a fit that did not
    converge (or depends on one that did not).
    """
    d = cfg.d
    source = synth.generate(cfg, "source", replicate)
    target = synth.generate(cfg, "target", replicate)
    mains, full = FeatureMap.main_effects(d), FeatureMap.full(d)
    cache = {}

    def src_fit(name, fmap):
        if name not in cache:
            model, report = _quiet_fit(fit_logistic, source, fmap, penalty)
            cache[name] = model if report.converged else None
        return cache[name]

    out = {}
    for name in models:
        if name == "ideal":
            out[name] = synth.bayes_rule(cfg, "target")
        elif name == "source.main":
            out[name] = _predictor(src_fit(name, mains))
        elif name == "source.full":
            out[name] = _predictor(src_fit(name, full))
        elif name in ("target.main", "target.full"):
            model, report = _quiet_fit(fit_logistic, target, mains if name == "target.main" else full, penalty)
            out[name] = _predictor(model if report.converged else None)
        elif name == "transfer":
            base = src_fit("source.full", full)
            if base is None:
                out[name] = None
                continue
            frozen = base.restrict(FeatureMap.second_order(d))
            model, report = _quiet_fit(fit_transfer, frozen, target, mains, penalty)
            out[name] = _predictor(model if report.converged else None)
        elif name == "transfer.main":
            base = src_fit("source.main", mains)
            if base is None:
                out[name] = None
                continue
            model, report = _quiet_fit(fit_transfer, base, target, mains, penalty)
            out[name] = _predictor(model if report.converged else None)
    return out


def _predictor(model):
    if model is None:
        return None
    return model.predict


def _replicate_task(args):
    cfg, models, penalty, n_test, replicate = args
    classifiers = fit_roster(cfg, models, penalty, replicate)
    X_test = synth.mc_sample(cfg, "target", replicate, size=n_test)
    result = {}
    for name in models:
        f = classifiers[name]
        if f is None:
            result[name] = None
            continue
        acc = synth.expected_accuracy(f, cfg, "target", X_test).value
        risk = synth.excess_risk(f, cfg, "target", X_test).value
        result[name] = (acc, risk)
    return result


def _summarize(values):
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    if arr.size == 1:
        return float(arr[0]), float("nan")
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def _map(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def run_sweep(config, jobs=None):
    """Run every (sweep value, replicate) cell and aggregate per model.

    Failed fits are excluded from the means; a cell is flagged when more than
    20% of its replicates failed.
    """
    jobs = config.jobs if jobs is None else jobs
    tasks = [
        (config.config_for(v), config.models, config.penalty, config.n_test, r)
        for v in config.sweep_values
        for r in range(config.replicates)
    ]
    outcomes = _map(_replicate_task, tasks, jobs)
    rows, accuracies = [], {}
    k = 0
    for v in config.sweep_values:
        chunk = outcomes[k:k + config.replicates]
        k += config.replicates
        for name in config.models:
            per_rep = [c[name] for c in chunk]
            ok = [p for p in per_rep if p is not None]
            failed = len(per_rep) - len(ok)
            mean_acc, se_acc = _summarize([p[0] for p in ok])
            mean_risk, se_risk = _summarize([p[1] for p in ok])
            flagged = failed > FAIL_FRACTION * config.replicates
            if failed:
                log.info("%s=%s %s: %d/%d replicates failed", config.sweep_param, v, name,
                         failed, config.replicates)
            rows.append(CellSummary(v, name, mean_acc, se_acc, mean_risk, se_risk, len(ok), failed, flagged))
            accuracies[(v, name)] = [None if p is None else p[0] for p in per_rep]
    return ExperimentResult(config, rows, accuracies)


# ---------------------------------------------------------------------------
# rate check


@dataclass
class RateResult:
    kind: str
    grid: list
    means: list
    slope: float
    band: tuple
    excluded: list
    errors: list = field(repr=False, default_factory=list)

    def to_json(self):
        return {
            "kind": self.kind,
            "grid": list(self.grid),
            "means": list(self.means),
            "slope": self.slope,
            "band": list(self.band),
            "excluded": list(self.excluded),
        }

    def to_csv(self):
        rows = [[n, m, e] for n, m, e in zip(self.grid, self.means, self.excluded)]
        return csv_text(("n", "mean", "excluded"), rows)


def log_log_slope(grid, means):
    x = np.log(np.asarray(grid, dtype=float))
    y = np.log(np.asarray(means, dtype=float))
    xc = x - x.mean()
    return float(xc @ (y - y.mean()) / (xc @ xc))


def _rate_task(args):
    kind, cfg, n, replicate = args
    oracle = synth.oracle_source_model(cfg)
    target = synth.generate(cfg, "target", replicate, size=n)
    model, report = _quiet_fit(fit_transfer, oracle, target, FeatureMap.main_effects(cfg.d))
    if not report.converged:
        return None
    if kind == "beta_error":
        return float(np.linalg.norm(model.beta - cfg.beta_true()))
    return synth.excess_risk(model.predict, cfg, "target", replicate=replicate).value


def rate_check(kind, grid, replicates, config, n_boot=1000, jobs=1):
    """Fit the log-log slope of an error measure against target size ``n``.

    The source regression function is the exact oracle, so the only error
    left is that of the estimated shift. ``kind`` is ``"beta_error"``
    (Euclidean error of the shift vector) or ``"excess_risk"``. The band is
    a 95% percentile bootstrap over replicates, resampled within each ``n``
    (stream seeded from ``config.seed``).
    """
    if kind not in ("beta_error", "excess_risk"):
        raise ConfigError("kind", "expected 'beta_error' or 'excess_risk'")
    grid = [int(n) for n in grid]
    if len(grid) < 4:
        raise ConfigError("grid", "need at least 4 sample sizes")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("grid", "sample sizes must be strictly increasing (degenerate regression)")
    if grid[0] < 1:
        raise ConfigError("grid", "sample sizes must be positive")
    if replicates < 1:
        raise ConfigError("replicates", "must be positive")
    tasks = [(kind, config, n, r) for n in grid for r in range(replicates)]
    outcomes = _map(_rate_task, tasks, jobs)
    errors, excluded = [], []
    for i in range(len(grid)):
        chunk = outcomes[i * replicates:(i + 1) * replicates]
        ok = np.array([e for e in chunk if e is not None], dtype=float)
        if ok.size == 0:
            raise DataError(f"every replicate failed at n={grid[i]}")
        errors.append(ok)
        excluded.append(replicates - ok.size)
    means = [float(e.mean()) for e in errors]
    if min(means) <= 0:
        raise DataError("mean error is zero at some n; slope undefined on a log scale")
    slope = log_log_slope(grid, means)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, 99])))
    boot = np.empty(n_boot)
    for b in range(n_boot):
        resampled = [e[rng.integers(0, e.size, e.size)].mean() for e in errors]
        boot[b] = log_log_slope(grid, np.maximum(resampled, 1e-300))
    band = (float(np.percentile(boot, 2.5)), float(np.percentile(boot, 97.5)))
    return RateResult(kind, grid, means, slope, band, excluded, errors)


# ---------------------------------------------------------------------------
# external probabilities


def adjust_external(probs, target, shift_map=None, penalty=None, test_fraction=0.3, seed=0,
                    clamp_eps=1e-6):
    """Shift externally produced probabilities toward the target domain.

    ``probs`` is an :class:`ExternalModel` or a ``row_id,probability`` CSV
    path; ``target`` a :class:`Dataset` whose row ids all appear in it. The
    target rows are split (seeded) into a fitting part and a held-out part
    of fraction ``test_fraction``; metrics are computed on the held-out
    part. Returns ``(TransferModel, MetricsReport, FitReport)``.
    """
    source = probs if isinstance(probs, ExternalModel) else load_external_csv(probs)
    missing = source.missing(target.row_id)
    if missing:
        raise DataError(f"target row ids missing from external probabilities: {missing}")
    if not 0.0 <= test_fraction < 1.0:
        raise ConfigError("test_fraction", "must lie in [0, 1)")
    penalty = penalty or Penalty()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 7])))
    perm = rng.permutation(target.n)
    n_test = int(round(test_fraction * target.n))
    test_idx, fit_idx = np.sort(perm[:n_test]), np.sort(perm[n_test:])
    fit_part = target.subset(fit_idx)
    model, report = fit_transfer(source, fit_part, shift_map, penalty, clamp_eps)
    held = target.subset(test_idx) if n_test else fit_part
    scores = model.predict_proba(held.X, held.row_id)
    metrics = evaluate(held.y.astype(int), (scores > 0.5).astype(int), scores)
    return model, metrics, report


# ---------------------------------------------------------------------------
# lambda selection


def select_lambda(data, fmap, lambdas, offset=None, holdout=0.25, seed=0):
    """Pick the L1 strength with the smallest held-out weighted log-loss.

    ``offset`` (per row of ``data``) turns this into a transfer-fit search.
    Returns ``(best_lambda, losses)`` with one loss per grid value.
    """
    lambdas = sorted(float(v) for v in lambdas)
    if not lambdas:
        raise ConfigError("lambdas", "grid must not be empty")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 11])))
    perm = rng.permutation(data.n)
    n_val = max(1, int(round(holdout * data.n)))
    val, fit = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    off = np.zeros(data.n) if offset is None else np.asarray(offset, dtype=float)
    train = data.subset(fit)
    valid = data.subset(val)
    losses = []
    for lam in lambdas:
        pen = Penalty.l1(lam) if lam > 0 else Penalty()
        model, _ = _quiet_fit(fit_logistic, train, fmap, pen, offset=off[fit])
        a = off[val] + model.linear_predictor(valid.X)
        losses.append(float(np.sum(valid.w * entropy_loss(valid.y, a)) / np.sum(valid.w)))
    best = lambdas[int(np.argmin(losses))]
    return best, losses


def transfer_offsets(source, data, clamp_eps=1e-6):
    """Offsets a transfer fit would use on ``data``; handy for :func:`select_lambda`."""
    return source_logits(source, data.X, data.row_id, clamp_eps)


__all__ = [
    "MODELS", "ExperimentConfig", "ExperimentResult", "CellSummary", "run_sweep",
    "RateResult", "rate_check", "adjust_external", "select_lambda", "transfer_offsets",
    "combined_se", "fit_roster",
]
