"""Command-line interface.

Every command writes a ``<output>.manifest.json`` next to its output (for
``generate``: ``<out-dir>/manifest.json``). ``linshift replay MANIFEST``
re-runs the recorded command line.

Exit codes: 0 success, 2 configuration error, 3 fit did not converge,
4 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__, harness, synth
from .errors import ConfigError, DataError
from .features import FeatureMap
from .io import atomic_write_text, csv_text, dataset_to_csv, read_dataset_csv, read_json, write_json
from .metrics import evaluate
from .source_fit import (
    Penalty,
    balanced_weights,
    fit_logistic,
    load_external_csv,
    source_model_from_dict,
)
from .transfer import TransferModel, fit_transfer

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_DATA = 0, 2, 3, 4

log = logging.getLogger("linshift")


class NonConvergence(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _load_config(path):
    try:
        return read_json(path)
    except FileNotFoundError:
        raise ConfigError(str(path), "config file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON ({exc.msg} at line {exc.lineno})") from None


def _load_data(path, require_labels=True):
    try:
        return read_dataset_csv(path, require_labels)
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _map_arg(spec, d, path="map"):
    """A feature map from a preset name or a JSON file."""
    if spec is None:
        return FeatureMap.main_effects(d)
    if spec in ("intercept", "mains", "full", "second_order"):
        return FeatureMap.preset(spec, d)
    return FeatureMap.from_dict(_load_config(spec), path)


def _penalty(lam):
    return Penalty.l1(lam) if lam and lam > 0 else Penalty()


def _check_converged(report, allow):
    if not report.converged and not allow:
        raise NonConvergence(f"fit did not converge: {report.message}")


def _guard_outputs(args, outputs):
    """Refuse to write an output over one of the command's inputs."""
    inputs = {os.path.realpath(v["path"]) for v in _inputs(args).values()}
    for path in outputs:
        if os.path.realpath(path) in inputs:
            raise ConfigError("out", f"output {path} would overwrite an input file")


def _load_model(path):
    obj = _load_config(path)
    if isinstance(obj, dict) and "shift_map" in obj:
        return TransferModel.from_dict(obj)
    return source_model_from_dict(obj)


# ---------------------------------------------------------------------------
# commands; each returns (outputs, resolved config, seed)


def cmd_generate(args):
    raw = _load_config(args.config)
    if not isinstance(raw, dict):
        raise ConfigError("", "config must be a JSON object")
    raw = dict(raw)
    domains = raw.pop("domains", ["source", "target"])
    replicate = raw.pop("replicate", 0)
    weights = raw.pop("weights", False)
    if not isinstance(domains, list) or not domains:
        raise ConfigError("domains", "must be a non-empty list")
    for i, dom in enumerate(domains):
        if dom not in ("source", "target"):
            raise ConfigError(f"domains[{i}]", f"unknown domain {dom!r}")
    if not isinstance(replicate, int) or isinstance(replicate, bool) or replicate < 0:
        raise ConfigError("replicate", "must be a non-negative integer")
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg = synth.SimConfig.from_dict(raw)
    os.makedirs(args.out_dir, exist_ok=True)
    outputs = []
    for dom in domains:
        data = synth.generate(cfg, dom, replicate)
        path = os.path.join(args.out_dir, f"{dom}.csv")
        dataset_to_csv(data, path, include_weights=bool(weights))
        outputs.append(path)
    resolved = {**cfg.to_dict(), "domains": domains, "replicate": replicate, "weights": weights}
    return outputs, resolved, cfg.seed


def cmd_fit_source(args):
    data = _load_data(args.data)
    data.check_binary()
    fmap = _map_arg(args.map, data.d)
    if args.balanced_weights:
        data = data.with_weights(balanced_weights(data.y))
    model, report = fit_logistic(data, fmap, _penalty(args.lam), standardize=args.standardize)
    _check_converged(report, args.allow_nonconverged)
    write_json(args.out, model.to_dict())
    resolved = {"map": fmap.to_dict(), "lambda": args.lam, "balanced_weights": args.balanced_weights,
                "standardize": args.standardize, "fit": report.to_dict()}
    return [args.out], resolved, None


def cmd_fit_transfer(args):
    target = _load_data(args.target)
    target.check_binary()
    if (args.source is None) == (args.probs is None):
        raise ConfigError("source", "give exactly one of --source or --probs")
    source = load_external_csv(args.probs) if args.probs else _load_model(args.source)
    if isinstance(source, TransferModel):
        raise ConfigError("source", "expected a source model, got a transfer model")
    shift_map = _map_arg(args.shift_map, target.d, "shift_map")
    if args.balanced_weights:
        target = target.with_weights(balanced_weights(target.y))
    model, report = fit_transfer(source, target, shift_map, _penalty(args.lam), args.eps)
    _check_converged(report, args.allow_nonconverged)
    write_json(args.out, model.to_dict())
    resolved = {"shift_map": shift_map.to_dict(), "lambda": args.lam, "clamp_eps": args.eps,
                "balanced_weights": args.balanced_weights, "fit": report.to_dict()}
    return [args.out], resolved, None


def _labels(model, data, prob):
    if hasattr(model, "predict"):
        return model.predict(data.X, data.row_id)
    return (prob > 0.5).astype(int)


def cmd_predict(args):
    model = _load_model(args.model)
    data = _load_data(args.data, require_labels=False)
    prob = model.predict_proba(data.X, data.row_id)
    label = _labels(model, data, prob)
    rows = [[rid, float(p), int(lab)] for rid, p, lab in zip(data.row_id, prob, label)]
    atomic_write_text(args.out, csv_text(("row_id", "prob", "label"), rows))
    return [args.out], {}, None


def cmd_evaluate(args):
    model = _load_model(args.model)
    data = _load_data(args.data)
    data.check_binary()
    prob = model.predict_proba(data.X, data.row_id)
    label = _labels(model, data, prob)
    report = evaluate(data.y.astype(int), label, prob)
    write_json(args.out, report.to_dict())
    return [args.out], {}, None


def _with_overrides(raw, args):
    raw = dict(raw)
    if args.seed is not None:
        raw["base"] = {**raw.get("base", {}), "seed": args.seed}
    if getattr(args, "lam", None) is not None:
        raw["penalty"] = {"lambda": args.lam, "kind": "l1" if args.lam > 0 else "none"}
    return raw


def cmd_sweep(args):
    raw = _load_config(args.config)
    if not isinstance(raw, dict):
        raise ConfigError("", "experiment config must be a JSON object")
    config = harness.ExperimentConfig.from_dict(_with_overrides(raw, args))
    csv_path = args.out
    json_path = os.path.splitext(args.out)[0] + ".json"
    _guard_outputs(args, [csv_path, json_path])
    result = harness.run_sweep(config, jobs=args.jobs)
    atomic_write_text(csv_path, result.to_csv())
    write_json(json_path, result.to_json())
    return [csv_path, json_path], config.to_dict(), config.base.seed


def cmd_rate_check(args):
    raw = _load_config(args.config)
    if not isinstance(raw, dict):
        raise ConfigError("", "rate-check config must be a JSON object")
    raw = _with_overrides(raw, args)
    allowed = {"kind", "grid", "replicates", "base", "n_boot", "penalty"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    base = synth.SimConfig.from_dict(raw.get("base", {}), "base")
    grid = raw.get("grid")
    if not isinstance(grid, list):
        raise ConfigError("grid", "must be a list of sample sizes")
    for i, v in enumerate(grid):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"grid[{i}]", "must be an integer")
    replicates = raw.get("replicates", 30)
    n_boot = raw.get("n_boot", 1000)
    for key, v in (("replicates", replicates), ("n_boot", n_boot)):
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ConfigError(key, "must be a positive integer")
    kind = raw.get("kind", "beta_error")
    json_path = args.out
    csv_path = os.path.splitext(args.out)[0] + ".csv"
    _guard_outputs(args, [json_path, csv_path])
    result = harness.rate_check(kind, grid, replicates, base, n_boot=n_boot, jobs=args.jobs or 1)
    write_json(json_path, {**result.to_json(), "config": {**raw, "base": base.to_dict()}})
    atomic_write_text(csv_path, result.to_csv())
    resolved = {"kind": kind, "grid": grid, "replicates": replicates, "n_boot": n_boot, "base": base.to_dict()}
    return [json_path, csv_path], resolved, base.seed


def cmd_adjust_external(args):
    target = _load_data(args.target)
    target.check_binary()
    shift_map = _map_arg(args.shift_map, target.d, "shift_map")
    seed = 0 if args.seed is None else args.seed
    model, metrics, report = harness.adjust_external(
        args.probs, target, shift_map, _penalty(args.lam), args.test_fraction, seed, args.eps
    )
    _check_converged(report, args.allow_nonconverged)
    write_json(args.out, {"model": model.to_dict(), "metrics": metrics.to_dict(), "fit": report.to_dict()})
    resolved = {"shift_map": shift_map.to_dict(), "lambda": args.lam, "test_fraction": args.test_fraction}
    return [args.out], resolved, seed


def cmd_replay(args):
    manifest = _load_config(args.manifest)
    if not isinstance(manifest, dict) or "argv" not in manifest:
        raise ConfigError("argv", "manifest has no recorded command line")
    # Recorded paths are relative to the directory the command ran in.
    previous = os.getcwd()
    os.chdir(manifest.get("cwd", previous))
    try:
        return main(manifest["argv"])
    finally:
        os.chdir(previous)


COMMANDS = {
    "generate": cmd_generate,
    "fit-source": cmd_fit_source,
    "fit-transfer": cmd_fit_transfer,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "rate-check": cmd_rate_check,
    "adjust-external": cmd_adjust_external,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="linshift", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate source/target datasets")
    p.add_argument("config")
    p.add_argument("--out-dir", "--out", dest="out_dir", required=True)
    p.add_argument("--seed", type=int)

    def fit_flags(p):
        p.add_argument("--lambda", dest="lam", type=float, default=0.0)
        p.add_argument("--balanced-weights", action="store_true")
        p.add_argument("--allow-nonconverged", action="store_true")
        p.add_argument("--out", required=True)

    p = sub.add_parser("fit-source", help="fit a logistic source model")
    p.add_argument("data")
    p.add_argument("--map", help="feature map JSON file or preset (intercept, mains, full, second_order)")
    p.add_argument("--standardize", action="store_true")
    fit_flags(p)

    p = sub.add_parser("fit-transfer", help="fit the linear shift on target data")
    p.add_argument("target")
    p.add_argument("--source", help="source model JSON")
    p.add_argument("--probs", help="external row_id,probability CSV")
    p.add_argument("--shift-map")
    p.add_argument("--eps", type=float, default=1e-6)
    fit_flags(p)

    for name in ("predict", "evaluate"):
        p = sub.add_parser(name, help=f"{name} with a source or transfer model")
        p.add_argument("model")
        p.add_argument("data")
        p.add_argument("--out", required=True)

    for name in ("sweep", "rate-check"):
        p = sub.add_parser(name, help=f"run the simulation {name}")
        p.add_argument("config")
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int, help="worker processes (default: config value or 1)")
        if name == "sweep":
            p.add_argument("--lambda", dest="lam", type=float)

    p = sub.add_parser("adjust-external", help="shift external probabilities to the target")
    p.add_argument("probs")
    p.add_argument("target")
    p.add_argument("--shift-map")
    p.add_argument("--test-fraction", type=float, default=0.3)
    p.add_argument("--seed", type=int)
    p.add_argument("--eps", type=float, default=1e-6)
    fit_flags(p)

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    return parser


def _manifest_path(args, outputs):
    if args.command == "generate":
        return os.path.join(args.out_dir, "manifest.json")
    return outputs[0] + ".manifest.json"


def _inputs(args):
    names = ("config", "data", "target", "model", "source", "probs", "map", "shift_map")
    out = {}
    for name in names:
        value = getattr(args, name, None)
        if isinstance(value, str) and os.path.isfile(value):
            out[name] = {"path": value, "sha256": _sha256(value)}
    return out


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "replay":
        try:
            return cmd_replay(args)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    start = time.perf_counter()
    try:
        if args.command != "generate":
            _guard_outputs(args, [args.out])
        outputs, resolved, seed = COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergence as exc:
        print(f"error: {exc} (use --allow-nonconverged to keep the result)", file=sys.stderr)
        return EXIT_NONCONVERGED
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    manifest = {
        "command": args.command,
        "argv": argv,
        "cwd": os.getcwd(),
        "config": resolved,
        "inputs": _inputs(args),
        "outputs": {p: _sha256(p) for p in outputs},
        "seed": seed,
        "version": __version__,
        "numpy": np.__version__,
        "duration_s": round(time.perf_counter() - start, 6),
    }
    write_json(_manifest_path(args, outputs), manifest)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
