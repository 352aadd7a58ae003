"""Command-line front end.

Subcommands: simulate, select-k, forecast-rolling, eval-split.  Each run is
driven by one JSON config (strictly validated: unknown keys are rejected),
all randomness flows from a single master seed, progress goes to stderr, and
results go to files under --out-dir together with a manifest (config echo,
seed, version, wall time).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

from . import __version__
from .csa import CsaConfig, fit_csa, save_predictor_json
from .empirical import (
    RollingSpec,
    SplitSpec,
    load_csv,
    rolling_forecast,
    rolling_summary_dict,
    random_split_eval,
    split_summary_dict,
    write_json,
    write_rolling_csv,
    write_split_csv,
)
from .methods import MethodSettings
from .qr_core import SolverOptions
from .simulate import SimDesign, run_study, write_study_csv, write_study_summary


class ConfigError(ValueError):
    pass


def _build(cls, doc: dict, where: str):
    """Instantiate a dataclass from a dict, rejecting unknown keys."""
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} in {where}")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def _settings_from(doc: dict, where: str = "settings") -> MethodSettings:
    doc = dict(doc or {})
    solver_doc = doc.pop("solver", None)
    settings = _build(MethodSettings, doc, where)
    if solver_doc is not None:
        solver = _build(SolverOptions, solver_doc, f"{where}.solver")
        settings = dataclasses.replace(settings, solver=solver)
    if "l2_grid" in doc:
        settings = dataclasses.replace(settings, l2_grid=tuple(doc["l2_grid"]))
    return settings


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")


def _check_keys(doc: dict, allowed, where: str) -> None:
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} in {where}")


def _out_dir(args, doc) -> Path:
    out = Path(args.out_dir or doc.get("out_dir") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, doc: dict, seed: int, wall: float) -> None:
    manifest = {
        "command": command,
        "config": doc,
        "seed": int(seed),
        "version": __version__,
        "wall_time_s": wall,
    }
    write_json(manifest, out / "manifest.json")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _load_dataset(doc: dict, args, require: bool = True):
    if "data" not in doc:
        if require:
            raise ConfigError("missing key 'data' in config")
        return None, None
    d = dict(doc["data"])
    _check_keys(d, {"path", "outcome", "regressors", "add_intercept", "drop_na"}, "data")
    path = args.data or d.get("path")
    if not path:
        raise ConfigError("missing key 'data.path' in config")
    if "outcome" not in d:
        raise ConfigError("missing key 'data.outcome' in config")
    if "regressors" not in d:
        raise ConfigError("missing key 'data.regressors' in config")
    data, report = load_csv(
        path,
        d["outcome"],
        list(d["regressors"]),
        add_intercept=bool(d.get("add_intercept", False)),
        drop_na=bool(d.get("drop_na", False)),
    )
    return data, report


def cmd_simulate(args) -> int:
    doc = _load_config(args.config)
    _check_keys(doc, {"design", "methods", "settings", "seed", "threads", "out_dir"}, "config")
    if "design" not in doc:
        raise ConfigError("missing key 'design' in config")
    design_doc = dict(doc["design"])
    if args.tau is not None:
        design_doc["tau"] = args.tau
    design = _build(SimDesign, design_doc, "design")
    methods = doc.get("methods", ["csa", "jma", "l1qr", "bag", "l2qr"])
    settings_doc = dict(doc.get("settings") or {})
    if args.mmax is not None:
        settings_doc["csa_cap"] = args.mmax
    if args.force_intercept:
        settings_doc["force_intercept"] = True
    settings = _settings_from(settings_doc)
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    threads = args.threads if args.threads is not None else int(doc.get("threads", 1))
    out = _out_dir(args, doc)

    _log(f"simulate: {design.family} n={design.n} K={design.observed_k} "
         f"R={design.n_reps} methods={methods} threads={threads}")
    t0 = time.perf_counter()
    result = run_study(design, methods, master_seed=seed, n_jobs=threads, settings=settings)
    wall = time.perf_counter() - t0
    write_study_csv(result, out / "results.csv")
    write_study_summary(result, out / "summary.json")
    _write_manifest(out, "simulate", doc, seed, wall)
    _log(f"simulate: done in {wall:.1f}s -> {out}")
    return 0


def cmd_select_k(args) -> int:
    if not args.data:
        raise ConfigError("select-k requires --data")
    if args.tau is None:
        raise ConfigError("select-k requires --tau")
    regressors = [c.strip() for c in (args.regressors or "").split(",") if c.strip()]
    if not args.outcome or not regressors:
        raise ConfigError("select-k requires --outcome and --regressors")
    data, _ = load_csv(
        args.data, args.outcome, regressors, add_intercept=args.add_intercept
    )
    seed = args.seed if args.seed is not None else 0
    config = CsaConfig(
        cap=args.mmax if args.mmax is not None else 100,
        seed=seed,
        mode=args.cv,
        n_folds=args.folds,
        force_intercept=args.force_intercept,
    )
    out = _out_dir(args, {})
    t0 = time.perf_counter()
    predictor = fit_csa(data, args.tau, config)
    wall = time.perf_counter() - t0
    print(f"mode={predictor.curve.mode} k_hat={predictor.k_hat}")
    for k, v in enumerate(predictor.curve.values, start=1):
        marker = " *" if k == predictor.k_hat else ""
        print(f"k={k} cv={v!r}{marker}")
    save_predictor_json(predictor, out / "predictor.json", names=data.names)
    _write_manifest(
        out,
        "select-k",
        {"data": args.data, "tau": args.tau, "regressors": regressors},
        seed,
        wall,
    )
    _log(f"select-k: wrote {out / 'predictor.json'}")
    return 0


def _empirical_common(args, proto_keys):
    doc = _load_config(args.config)
    _check_keys(
        doc,
        proto_keys | {"data", "methods", "settings", "seed", "threads", "out_dir"},
        "config",
    )
    data, _ = _load_dataset(doc, args)
    settings_doc = dict(doc.get("settings") or {})
    if args.mmax is not None:
        settings_doc["csa_cap"] = args.mmax
    if args.force_intercept:
        settings_doc["force_intercept"] = True
    settings = _settings_from(settings_doc)
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    threads = args.threads if args.threads is not None else int(doc.get("threads", 1))
    methods = tuple(doc.get("methods", ["csa"]))
    return doc, data, settings, seed, threads, methods


def cmd_forecast_rolling(args) -> int:
    doc, data, settings, seed, threads, methods = _empirical_common(args, {"t1", "tau"})
    if "t1" not in doc:
        raise ConfigError("missing key 't1' in config")
    tau = args.tau if args.tau is not None else doc.get("tau")
    if tau is None:
        raise ConfigError("missing key 'tau' in config")
    spec = RollingSpec(t1=int(doc["t1"]), tau=float(tau), methods=methods)
    out = _out_dir(args, doc)
    _log(f"forecast-rolling: t1={spec.t1} tau={spec.tau} methods={list(methods)}")
    t0 = time.perf_counter()
    result = rolling_forecast(
        data, spec, master_seed=seed, settings=settings, n_jobs=threads
    )
    wall = time.perf_counter() - t0
    write_rolling_csv(result, out / "forecasts.csv")
    write_json(rolling_summary_dict(result), out / "summary.json")
    _write_manifest(out, "forecast-rolling", doc, seed, wall)
    _log(f"forecast-rolling: done in {wall:.1f}s -> {out}")
    return 0


def cmd_eval_split(args) -> int:
    doc, data, settings, seed, threads, methods = _empirical_common(
        args, {"n1", "reps", "tau"}
    )
    for key in ("n1", "reps"):
        if key not in doc:
            raise ConfigError(f"missing key {key!r} in config")
    tau = args.tau if args.tau is not None else doc.get("tau")
    if tau is None:
        raise ConfigError("missing key 'tau' in config")
    spec = SplitSpec(
        n1=int(doc["n1"]), reps=int(doc["reps"]), tau=float(tau), methods=methods, seed=seed
    )
    out = _out_dir(args, doc)
    _log(f"eval-split: n1={spec.n1} reps={spec.reps} tau={spec.tau} methods={list(methods)}")
    t0 = time.perf_counter()
    result = random_split_eval(data, spec, settings=settings, n_jobs=threads)
    wall = time.perf_counter() - t0
    write_split_csv(result, out / "splits.csv")
    write_json(split_summary_dict(result), out / "summary.json")
    _write_manifest(out, "eval-split", doc, seed, wall)
    _log(f"eval-split: done in {wall:.1f}s -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csaqr",
        description="Complete subset averaging for quantile prediction",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--threads", type=int, help="worker process count")
        p.add_argument("--out-dir", help="output directory")
        p.add_argument("--tau", type=float, help="quantile level override")
        p.add_argument("--mmax", type=int, help="subset cap override")
        p.add_argument("--force-intercept", action="store_true",
                       help="force the intercept column into every subset")
        p.add_argument("--data", help="input CSV path override")

    p = sub.add_parser("simulate", help="run one Monte Carlo design")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("select-k", help="cross-validate the subset size on a CSV")
    common(p)
    p.add_argument("--outcome", help="outcome column name")
    p.add_argument("--regressors", help="comma-separated regressor columns")
    p.add_argument("--add-intercept", action="store_true")
    p.add_argument("--cv", default="auto", choices=["auto", "loo", "bfold"])
    p.add_argument("--folds", type=int, default=10)
    p.set_defaults(func=cmd_select_k)

    p = sub.add_parser("forecast-rolling", help="rolling one-step-ahead forecasts")
    common(p)
    p.set_defaults(func=cmd_forecast_rolling)

    p = sub.add_parser("eval-split", help="repeated random-split evaluation")
    common(p)
    p.set_defaults(func=cmd_eval_split)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command != "select-k" and not args.config:
        print(f"error: {args.command} requires --config", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
