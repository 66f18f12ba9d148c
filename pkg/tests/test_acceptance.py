"""Acceptance gate: one test per criterion, each at its stated tolerance.

A summary line per criterion (PASS/FAIL with the measured numbers) is
printed at the end of the pytest run.
"""

import json
import time

import numpy as np
import pytest

from linshift import harness, synth
from linshift.cli import main
from linshift.features import FeatureMap, build_design
from linshift.metrics import auc, confusion
from linshift.source_fit import Dataset, Penalty, fit_logistic
from linshift.transfer import fit_joint, fit_transfer, fit_transfer_gaussian, joint_design
from oracles import brute_auc, grid_minimize, kkt_violation, logistic_objective

pytestmark = pytest.mark.acceptance


def _overlapping(x, y):
    """True when sorted labels contain a 0,1,0 or 1,0,1 pattern (finite MLE)."""
    lab = y[np.argsort(x)]
    return np.count_nonzero(np.diff(lab)) >= 2


def _draw_overlapping(rng, size):
    while True:
        x = rng.normal(size=size)
        y = rng.integers(0, 2, size).astype(float)
        if _overlapping(x, y):
            return x, y


# -- 1 ---------------------------------------------------------------------

def test_criterion_1_grid_oracles(record):
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_single = 0.0
    for n in (4, 5, 6, 6, 6):
        x, y = _draw_overlapping(rng, n)
        Phi = np.c_[np.ones(n), x]
        oracle = grid_minimize(lambda T: logistic_objective(T, Phi, y), [0.0, 0.0], 20.0, points=101)
        model, _ = fit_logistic(Dataset(x[:, None], y), FeatureMap.main_effects(1))
        worst_single = max(worst_single, float(np.max(np.abs(model.theta - oracle))))

    s_map = FeatureMap(include_intercept=False, mains=(0,))
    t_map = FeatureMap.intercept_only()
    worst_joint = 0.0
    for _ in range(3):
        xs, ys = _draw_overlapping(rng, 4)
        xt, yt = _draw_overlapping(rng, 4)
        source, target = Dataset(xs[:, None], ys), Dataset(xt[:, None], yt)
        Phi = joint_design(source, target, s_map, t_map)
        yy = np.r_[ys, yt]
        oracle = grid_minimize(lambda T: logistic_objective(T, Phi, yy), [0.0, 0.0, 0.0], 20.0, points=41)
        model, _ = fit_joint(source, target, s_map, t_map)
        est = np.r_[model.xi, model.beta_p, model.beta]
        worst_joint = max(worst_joint, float(np.max(np.abs(est - oracle))))
    elapsed = time.perf_counter() - start

    ok = record(1, "fit_logistic vs 2-D grid", worst_single <= 1e-4, f"max |diff| {worst_single:.2e} (tol 1e-4)")
    ok &= record(1, "fit_joint vs 3-D grid", worst_joint <= 1e-3, f"max |diff| {worst_joint:.2e} (tol 1e-3)")
    ok &= record(1, "runtime", elapsed < 10, f"{elapsed:.1f}s (limit 10s)")
    assert ok


# -- 2 ---------------------------------------------------------------------

def _kkt_instance(rng):
    d = int(rng.integers(1, 6))
    fmap = FeatureMap.main_effects(d) if rng.random() < 0.7 else FeatureMap.full(min(d, 3))
    n = int(rng.integers(15, 40)) * fmap.width
    X = rng.normal(size=(n, fmap.min_dim))
    coef = rng.normal(scale=0.7, size=fmap.width)
    y = (rng.random(n) < 1 / (1 + np.exp(-build_design(fmap, X) @ coef))).astype(float)
    w = rng.uniform(0.1, 5.0, n) if rng.random() < 0.5 else None
    offset = rng.normal(size=n) if rng.random() < 0.5 else None
    lam = float(rng.choice([0.0, 0.001, 0.01, 0.05, 0.2]))
    return Dataset(X, y, w), fmap, offset, lam


def test_criterion_2_kkt_suite(record):
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    worst_score, worst_kkt, not_converged = 0.0, 0.0, 0
    for _ in range(200):
        data, fmap, offset, lam = _kkt_instance(rng)
        model, report = fit_logistic(data, fmap, Penalty.l1(lam) if lam else Penalty(), offset)
        not_converged += not report.converged
        Phi = build_design(fmap, data.X)
        viol = kkt_violation(model.theta, Phi, data.y, data.w, offset, lam, ~fmap.intercept_mask())
        if lam == 0:
            worst_score = max(worst_score, viol)
        else:
            worst_kkt = max(worst_kkt, viol)
    elapsed = time.perf_counter() - start
    ok = record(2, "score equations (lambda=0)", worst_score <= 1e-7, f"max residual {worst_score:.2e} (tol 1e-7)")
    ok &= record(2, "L1 subgradient", worst_kkt <= 1e-7, f"max violation {worst_kkt:.2e} (tol 1e-7)")
    ok &= record(2, "all fits converged", not_converged == 0, f"{not_converged}/200 not converged")
    ok &= record(2, "runtime", elapsed < 60, f"{elapsed:.1f}s (limit 60s)")
    assert ok


# -- 3 ---------------------------------------------------------------------

def test_criterion_3_parametric_rate(record):
    start = time.perf_counter()
    cfg = synth.SimConfig(d=5, link="logit")
    res = harness.rate_check("beta_error", [200, 800, 3200, 12800, 51200], 30, cfg, n_boot=1000)
    elapsed = time.perf_counter() - start
    ok = record(3, "log-log slope", -0.65 <= res.slope <= -0.35,
                f"slope {res.slope:.3f}, band [{res.band[0]:.3f}, {res.band[1]:.3f}] (target [-0.65, -0.35])")
    ok &= record(3, "runtime", elapsed < 300, f"{elapsed:.1f}s (limit 300s)")
    assert ok


# -- 4 and 5 ---------------------------------------------------------------

def _ordering(criterion, link, record):
    start = time.perf_counter()
    base = synth.SimConfig(link=link)
    models = ("source.main", "source.full", "target.main", "transfer", "ideal")
    res = harness.run_sweep(harness.ExperimentConfig(base=base, sweep_values=(2.0,), models=models,
                                                     replicates=50, n_test=20_000))
    c = {m: res.cell(2.0, m) for m in models}
    tr = c["transfer"]
    ok = record(criterion, "ideal >= transfer", c["ideal"].mean_acc >= tr.mean_acc,
                f"{c['ideal'].mean_acc:.4f} vs {tr.mean_acc:.4f}")
    for other in ("target.main", "source.main"):
        margin = 2 * harness.combined_se(tr, c[other])
        ok &= record(criterion, f"transfer > {other} + 2 se", tr.mean_acc > c[other].mean_acc + margin,
                     f"{tr.mean_acc:.4f} vs {c[other].mean_acc:.4f} + {margin:.4f}")
    elapsed = time.perf_counter() - start
    ok &= record(criterion, "runtime (delta=2)", elapsed < 600, f"{elapsed:.1f}s (limit 600s)")
    return ok


def _no_drift(criterion, link, record):
    base = synth.SimConfig(link=link)
    res = harness.run_sweep(harness.ExperimentConfig(base=base, sweep_values=(0.0,),
                                                     models=("source.full", "transfer"),
                                                     replicates=50, n_test=20_000))
    a, b = res.cell(0.0, "source.full"), res.cell(0.0, "transfer")
    margin = 2 * harness.combined_se(a, b)
    gap = abs(b.mean_acc - a.mean_acc)
    return record(criterion, "delta=0: |transfer - source.full| <= 2 se", gap <= margin,
                  f"source.full {a.mean_acc:.4f}, transfer {b.mean_acc:.4f}, gap {gap:.4f} vs {margin:.4f}")


def test_criterion_4_trend_ordering(record):
    assert _ordering(4, "logit", record)


def test_criterion_4_no_drift(record):
    assert _no_drift(4, "logit", record)


def test_criterion_5_probit_ordering(record):
    assert _ordering(5, "probit", record)


def test_criterion_5_probit_no_drift(record):
    assert _no_drift(5, "probit", record)


# -- 6 ---------------------------------------------------------------------

def test_criterion_6_gaussian_reduction(record):
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    worst_beta, worst_orth = 0.0, 0.0
    for _ in range(100):
        d = int(rng.integers(1, 6))
        n = int(rng.integers(d + 2, 200))
        fmap = FeatureMap.main_effects(d)
        X = rng.normal(size=(n, d))
        mu = rng.normal(size=n)
        y = mu + build_design(fmap, X) @ rng.normal(size=d + 1) + rng.normal(size=n)
        beta = fit_transfer_gaussian(mu, Dataset(X, y), fmap)
        T = build_design(fmap, X)
        closed = np.linalg.solve(T.T @ T, T.T @ (y - mu))
        worst_beta = max(worst_beta, float(np.max(np.abs(beta - closed))))
        worst_orth = max(worst_orth, float(np.max(np.abs(T.T @ (y - mu - T @ beta)))) / n)
    elapsed = time.perf_counter() - start
    ok = record(6, "matches normal equations", worst_beta <= 1e-8, f"max |diff| {worst_beta:.2e} (tol 1e-8)")
    ok &= record(6, "residuals orthogonal to T", worst_orth <= 1e-8, f"max |T'r|/n {worst_orth:.2e} (tol 1e-8)")
    ok &= record(6, "runtime", elapsed < 5, f"{elapsed:.2f}s (limit 5s)")
    assert ok


# -- 7 ---------------------------------------------------------------------

def test_criterion_7_label_shift(record):
    start = time.perf_counter()
    ls = synth.LabelShiftConfig(prior_source=0.5, prior_target=0.75, seed=7)
    target = ls.generate("target", 50_000)
    model, _ = fit_transfer(ls.source_model(), target, FeatureMap.intercept_only())
    beta = float(model.beta[0])
    positive = ls.shift()  # log-odds of Y=1: log 3
    elapsed = time.perf_counter() - start
    ok = record(7, "|beta - population shift| < 0.05", abs(beta - positive) < 0.05,
                f"beta {beta:.4f}, log-odds(Y=1) shift {positive:.4f}")
    record(7, "sign convention", True,
           f"fitted beta matches +log 3 (log-odds of Y=1); distance to -log 3 is {abs(beta + positive):.3f}")
    ok &= record(7, "runtime", elapsed < 30, f"{elapsed:.1f}s (limit 30s)")
    assert ok


# -- 8 ---------------------------------------------------------------------

def test_criterion_8_metrics_exactness(record):
    start = time.perf_counter()
    hand = [
        ([1, 1, 0, 0], [1, 0, 0, 0], (0.5, 1.0, 0.75)),
        ([1, 0, 1, 1, 0], [1, 0, 1, 1, 0], (1.0, 1.0, 1.0)),
        ([1, 0, 1, 1, 0], [0, 1, 0, 0, 1], (0.0, 0.0, 0.0)),
        ([1, 1, 1, 0], [1, 1, 0, 1], (2 / 3, 0.0, 1 / 3)),
    ]
    hand_ok = True
    for labels, preds, (tpr, tnr, bal) in hand:
        r = confusion(labels, preds)
        hand_ok &= r.tpr == tpr and r.tnr == tnr and r.balanced_accuracy == bal
        hand_ok &= r.balanced_accuracy == (r.tpr + r.tnr) / 2
    rng = np.random.default_rng(8)
    mismatches = 0
    for _ in range(500):
        n = int(rng.integers(2, 51))
        labels = rng.integers(0, 2, n)
        labels[:2] = (0, 1)
        scores = rng.integers(0, int(rng.integers(2, 20)), n) / 3.0 if rng.random() < 0.5 else rng.random(n)
        mismatches += auc(labels, scores) != brute_auc(labels, scores)
    elapsed = time.perf_counter() - start
    ok = record(8, "confusion hand cases", hand_ok, f"{len(hand)} cases")
    ok &= record(8, "auc == brute force", mismatches == 0, f"{mismatches}/500 mismatches (exact)")
    ok &= record(8, "runtime", elapsed < 5, f"{elapsed:.2f}s (limit 5s)")
    assert ok


# -- 9 ---------------------------------------------------------------------

def test_criterion_9_bayes_sanity(record):
    start = time.perf_counter()
    cfg = synth.SimConfig()
    risk = synth.excess_risk(synth.bayes_rule(cfg), cfg).value
    null = synth.bayes_accuracy(synth.SimConfig(xi=0.0, delta=0.0))
    # at eta = 1/2 every draw contributes exactly 1/2, so the MC error is zero
    within = abs(null.value - 0.5) <= 3 * null.se if null.se > 0 else null.value == 0.5
    elapsed = time.perf_counter() - start
    ok = record(9, "excess_risk(Bayes) == 0", risk == 0.0, f"{risk!r}")
    ok &= record(9, "bayes_accuracy(xi=delta=0) ~ 0.5", within, f"{null.value!r} (se {null.se:.2e})")
    ok &= record(9, "runtime", elapsed < 30, f"{elapsed:.1f}s (limit 30s)")
    assert ok


# -- 10 --------------------------------------------------------------------

def test_criterion_10_replay(record, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "sim.json").write_text(json.dumps({"m": 400, "n": 150, "seed": 10}))
    (tmp_path / "sweep_config.json").write_text(json.dumps(
        {"sweep": {"parameter": "delta", "values": [0.0, 2.0]}, "models": ["transfer", "target.main", "ideal"],
         "replicates": 3, "n_test": 2000}))
    (tmp_path / "rate.json").write_text(json.dumps(
        {"kind": "beta_error", "grid": [100, 200, 400, 800], "replicates": 3, "n_boot": 100}))
    runs = [
        ["generate", "sim.json", "--out-dir", "data"],
        ["fit-source", "data/source.csv", "--map", "full", "--out", "src.json"],
        ["fit-transfer", "data/target.csv", "--source", "src.json", "--lambda", "0.001", "--out", "tr.json"],
        ["predict", "tr.json", "data/target.csv", "--out", "pred.csv"],
        ["evaluate", "tr.json", "data/target.csv", "--out", "metrics.json"],
        ["sweep", "sweep_config.json", "--out", "sweep.csv"],
        ["rate-check", "rate.json", "--out", "rate.json.out"],
    ]
    codes = [main(argv) for argv in runs]
    rows = ["row_id,probability"] + [f"{i},{0.2 + 0.6 * (i % 7) / 6!r}" for i in range(150)]
    (tmp_path / "probs.csv").write_text("\n".join(rows) + "\n")
    codes.append(main(["adjust-external", "probs.csv", "data/target.csv", "--lambda", "0.01", "--out", "adj.json"]))
    manifests = ["data/manifest.json"] + [f"{a[-1]}.manifest.json" for a in runs[1:]] + ["adj.json.manifest.json"]

    def snapshot():
        out = {}
        for m in manifests:
            for path in json.loads((tmp_path / m).read_text())["outputs"]:
                out[path] = (tmp_path / path).read_bytes()
        return out

    before = snapshot()
    replay_codes = [main(["replay", m]) for m in manifests]
    after = snapshot()
    differing = sorted(p for p in before if before[p] != after.get(p))
    ok = record(10, "commands succeeded", all(c == 0 for c in codes + replay_codes),
                f"exit codes {codes} / replay {replay_codes}")
    ok &= record(10, "byte-identical outputs", not differing and len(before) >= 10,
                 f"{len(before)} outputs from {len(manifests)} manifests, differing: {differing or 'none'}")
    assert ok
