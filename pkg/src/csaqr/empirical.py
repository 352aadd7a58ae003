"""Empirical protocols: rolling one-step-ahead forecasting and repeated
random-split evaluation, both scored by out-of-sample R^2 against the
unconditional-quantile benchmark.

Input files must be pre-aligned: each row's regressors are information
available when that row's outcome is forecast (lagging is the data file's
job, not the harness's).
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .methods import MethodSettings, check_methods, fit_method, method_label, method_tag
from .qr_core import Dataset, check_loss, unconditional_quantile
from .seeding import DATA_TAG, METHOD_TAG, child_seed

SCHEMA_VERSION = 1


class MissingColumnError(ValueError):
    pass


class NonNumericError(ValueError):
    pass


class EmptyDataError(ValueError):
    pass


@dataclass
class LoadReport:
    n_rows: int
    n_cols: int
    dropped_rows: List[int] = field(default_factory=list)


@dataclass(frozen=True)
class RollingSpec:
    """Fixed-length in-sample window, one-step-ahead forecasts."""

    t1: int
    tau: float
    methods: tuple

    def __post_init__(self):
        # windows this short are only sensible in toy checks, but the
        # protocol itself works from two observations up
        if self.t1 < 2:
            raise ValueError("t1 must be >= 2")
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")


@dataclass(frozen=True)
class SplitSpec:
    """Repeated random estimation/evaluation splits."""

    n1: int
    reps: int
    tau: float
    methods: tuple
    seed: int = 0

    def __post_init__(self):
        if self.n1 < 1:
            raise ValueError("n1 must be >= 1")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")


def load_csv(
    path,
    outcome_col: str,
    regressor_cols: Sequence[str],
    add_intercept: bool = False,
    drop_na: bool = False,
):
    """Read a CSV into a Dataset, optionally prepending an all-ones column.

    Strict by default: a missing column, an empty file, or any non-numeric or
    missing cell raises a distinct error naming the offender.  With
    ``drop_na`` rows containing missing values are dropped and reported.
    """
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError as exc:
        raise EmptyDataError(f"{path}: empty file") from exc
    if frame.shape[0] == 0:
        raise EmptyDataError(f"{path}: no data rows")
    wanted = [outcome_col] + list(regressor_cols)
    for col in wanted:
        if col not in frame.columns:
            raise MissingColumnError(f"{path}: missing column {col!r}")
    sub = frame[wanted]
    numeric = sub.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna() & ~sub.isna()
    if bad.any().any():
        rows, cols = np.nonzero(bad.to_numpy())
        raise NonNumericError(
            f"{path}: non-numeric cell at row {int(rows[0])}, column {wanted[int(cols[0])]!r}"
        )
    dropped: List[int] = []
    nan_rows = numeric.isna().any(axis=1)
    if nan_rows.any():
        if not drop_na:
            r = int(np.nonzero(nan_rows.to_numpy())[0][0])
            c = wanted[int(np.nonzero(numeric.iloc[r].isna().to_numpy())[0][0])]
            raise NonNumericError(f"{path}: missing value at row {r}, column {c!r}")
        dropped = [int(i) for i in np.nonzero(nan_rows.to_numpy())[0]]
        numeric = numeric[~nan_rows]
    y = numeric[outcome_col].to_numpy(dtype=np.float64)
    X = numeric[list(regressor_cols)].to_numpy(dtype=np.float64)
    names = list(regressor_cols)
    intercept_col = None
    if add_intercept:
        X = np.column_stack([np.ones(len(y)), X])
        names = ["const"] + names
        intercept_col = 0
    data = Dataset(y=y, X=X, names=names, intercept_col=intercept_col)
    return data, LoadReport(n_rows=data.n, n_cols=data.p, dropped_rows=dropped)


@dataclass
class RollingResult:
    spec: RollingSpec
    methods: List[str]
    origins: np.ndarray  # time index t of each forecast origin (predicts t+1)
    realized: np.ndarray
    forecasts: Dict[str, np.ndarray]
    benchmark: np.ndarray
    oos_r2: Dict[str, Optional[float]]
    k_hat: Dict[str, List[int]]
    seed: int


def _roll_origin(data: Dataset, spec: RollingSpec, settings, master_seed: int, t: int):
    """One forecast origin: fit every method on the window ending at t."""
    lo = t - spec.t1 + 1
    window = Dataset(
        y=data.y[lo : t + 1],
        X=data.X[lo : t + 1],
        names=data.names,
        intercept_col=data.intercept_col,
    )
    bench = unconditional_quantile(window.y, spec.tau)
    x_next = data.X[t + 1]
    preds = []
    khats = []
    for m in check_methods(spec.methods):
        seed = child_seed(master_seed, int(t), METHOD_TAG, method_tag(m))
        predictor = fit_method(m, window, spec.tau, seed, settings)
        preds.append(float(predictor.predict_rows(x_next[None, :])[0]))
        kh = getattr(predictor, "k_hat", None)
        khats.append(None if kh is None else int(kh))
    return bench, preds, khats


def rolling_forecast(
    data: Dataset,
    spec: RollingSpec,
    master_seed: int = 0,
    settings: Optional[MethodSettings] = None,
    n_jobs: int = 1,
) -> RollingResult:
    """Forecast row t+1 from rows (t-T1+1..t) for every t from T1-1 to T-2.

    Rows must be in time order.  The benchmark forecast is the unconditional
    tau-quantile of the window's outcomes; R^2 = 1 - (method loss sum) /
    (benchmark loss sum), reported as missing when the benchmark loss is 0.
    Forecast origins are independent units; results are identical for any
    n_jobs.
    """
    methods = check_methods(spec.methods)
    settings = settings or MethodSettings()
    T, t1 = data.n, spec.t1
    if T < t1 + 1:
        raise ValueError(f"need at least t1+1={t1 + 1} rows, got {T}")
    origins = np.arange(t1 - 1, T - 1)
    n_out = origins.size
    realized = data.y[origins + 1]
    benchmark = np.empty(n_out)
    forecasts = {method_label(m): np.empty(n_out) for m in methods}
    k_hat: Dict[str, List[int]] = {method_label(m): [] for m in methods}
    if n_jobs <= 1:
        rows = [
            _roll_origin(data, spec, settings, master_seed, int(t)) for t in origins
        ]
    else:
        with ProcessPoolExecutor(max_workers=int(n_jobs)) as pool:
            futures = [
                pool.submit(_roll_origin, data, spec, settings, master_seed, int(t))
                for t in origins
            ]
            rows = [f.result() for f in futures]
    for pos, (bench, preds, khats) in enumerate(rows):
        benchmark[pos] = bench
        for j, m in enumerate(methods):
            forecasts[method_label(m)][pos] = preds[j]
            if khats[j] is not None:
                k_hat[method_label(m)].append(khats[j])
    bench_loss = float(np.sum(check_loss(realized - benchmark, spec.tau)))
    oos_r2: Dict[str, Optional[float]] = {}
    for m in methods:
        label = method_label(m)
        loss = float(np.sum(check_loss(realized - forecasts[label], spec.tau)))
        oos_r2[label] = None if bench_loss == 0.0 else 1.0 - loss / bench_loss
    return RollingResult(
        spec=spec,
        methods=[method_label(m) for m in methods],
        origins=origins,
        realized=realized,
        forecasts=forecasts,
        benchmark=benchmark,
        oos_r2=oos_r2,
        k_hat={k: v for k, v in k_hat.items() if v},
        seed=master_seed,
    )


@dataclass
class SplitResult:
    spec: SplitSpec
    methods: List[str]
    r2: np.ndarray  # (reps, n_methods), NaN marks undefined benchmark
    mean_r2: Dict[str, Optional[float]]
    sd_r2: Dict[str, Optional[float]]
    k_hat: Dict[str, List[int]]


def _one_split(data: Dataset, spec: SplitSpec, settings, s: int):
    """One random split: fit every method on n1 rows, score the remainder."""
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence((spec.seed, s, DATA_TAG)))
    )
    perm = rng.permutation(data.n)
    est_idx, eval_idx = perm[: spec.n1], perm[spec.n1 :]
    est = Dataset(
        y=data.y[est_idx], X=data.X[est_idx], names=data.names,
        intercept_col=data.intercept_col,
    )
    hold_y, hold_X = data.y[eval_idx], data.X[eval_idx]
    bench = unconditional_quantile(est.y, spec.tau)
    bench_loss = float(np.sum(check_loss(hold_y - bench, spec.tau)))
    r2_row = []
    khats = []
    for m in check_methods(spec.methods):
        seed = child_seed(spec.seed, s, METHOD_TAG, method_tag(m))
        predictor = fit_method(m, est, spec.tau, seed, settings)
        loss = float(np.sum(check_loss(hold_y - predictor.predict_rows(hold_X), spec.tau)))
        r2_row.append(1.0 - loss / bench_loss if bench_loss > 0.0 else np.nan)
        kh = getattr(predictor, "k_hat", None)
        khats.append(None if kh is None else int(kh))
    return r2_row, khats


def random_split_eval(
    data: Dataset,
    spec: SplitSpec,
    settings: Optional[MethodSettings] = None,
    n_jobs: int = 1,
) -> SplitResult:
    """Repeated random splits: fit on n1 rows, score R^2 on the remainder.

    The benchmark for each split is the estimation sample's unconditional
    tau-quantile.  Splits are independent units; results are identical for
    any n_jobs.
    """
    methods = check_methods(spec.methods)
    settings = settings or MethodSettings()
    if spec.n1 >= data.n:
        raise ValueError("n1 must be smaller than the sample size")
    labels = [method_label(m) for m in methods]
    r2 = np.full((spec.reps, len(methods)), np.nan)
    k_hat: Dict[str, List[int]] = {lab: [] for lab in labels}
    if n_jobs <= 1:
        rows = [_one_split(data, spec, settings, s) for s in range(spec.reps)]
    else:
        with ProcessPoolExecutor(max_workers=int(n_jobs)) as pool:
            futures = [
                pool.submit(_one_split, data, spec, settings, s)
                for s in range(spec.reps)
            ]
            rows = [f.result() for f in futures]
    for s, (r2_row, khats) in enumerate(rows):
        for j, lab in enumerate(labels):
            r2[s, j] = r2_row[j]
            if khats[j] is not None:
                k_hat[lab].append(khats[j])
    mean_r2 = {}
    sd_r2 = {}
    for j, lab in enumerate(labels):
        vals = r2[:, j][np.isfinite(r2[:, j])]
        mean_r2[lab] = float(vals.mean()) if vals.size else None
        sd_r2[lab] = float(vals.std(ddof=1)) if vals.size > 1 else None
    return SplitResult(
        spec=spec,
        methods=labels,
        r2=r2,
        mean_r2=mean_r2,
        sd_r2=sd_r2,
        k_hat={k: v for k, v in k_hat.items() if v},
    )


def write_rolling_csv(result: RollingResult, path) -> None:
    """Per-origin forecast table: (t, method, forecast, realized, loss)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["t", "method", "forecast", "realized", "loss"])
        for pos, t in enumerate(result.origins):
            rows = [("benchmark", result.benchmark[pos])] + [
                (m, result.forecasts[m][pos]) for m in result.methods
            ]
            for m, f in rows:
                loss = check_loss(result.realized[pos] - f, result.spec.tau)
                w.writerow([int(t + 1), m, repr(float(f)), repr(float(result.realized[pos])), repr(float(loss))])


def _khat_stats(k_hat: Dict[str, List[int]]) -> dict:
    out = {}
    for m, vals in k_hat.items():
        arr = np.asarray(vals, dtype=np.float64)
        out[m] = {"mean": float(arr.mean()), "median": float(np.median(arr))}
    return out


def rolling_summary_dict(result: RollingResult) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "protocol": "rolling",
        "t1": result.spec.t1,
        "tau": result.spec.tau,
        "seed": result.seed,
        "n_forecasts": int(result.origins.size),
        "oos_r2": result.oos_r2,
        "k_hat": _khat_stats(result.k_hat),
    }


def split_summary_dict(result: SplitResult) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "protocol": "random-split",
        "n1": result.spec.n1,
        "reps": result.spec.reps,
        "tau": result.spec.tau,
        "seed": result.spec.seed,
        "mean_oos_r2": result.mean_r2,
        "sd_oos_r2": result.sd_r2,
        "k_hat": _khat_stats(result.k_hat),
    }


def write_split_csv(result: SplitResult, path) -> None:
    """Per-split R^2 table."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["split", "method", "oos_r2"])
        for s in range(result.r2.shape[0]):
            for j, m in enumerate(result.methods):
                v = result.r2[s, j]
                w.writerow([s, m, repr(float(v)) if np.isfinite(v) else ""])


def write_json(doc: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
