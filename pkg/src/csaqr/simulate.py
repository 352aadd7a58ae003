"""Monte Carlo harness: data generation, replication execution, metrics.

Two design families.  "misspecified": the outcome loads on 1000 latent
regressors with weights 1/j (the first column is a constant) but only the
first K columns are observed, K = floor(4 log n) by default.  "correct": all
K regressors are observed and the weights follow one of three signal
structures (decreasing 1/j, constant, sparse).  Regressors are equicorrelated
Gaussian, generated exactly by a one-factor decomposition, and the signal
scale is solved in closed form to hit a target population R^2 against unit
noise.  Per-replication seeds derive from (master_seed, replication), so a
study is bit-reproducible at any parallelism degree.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .methods import MethodSettings, check_methods, fit_method, method_label, method_tag
from .qr_core import Dataset, check_loss
from .seeding import DATA_TAG, METHOD_TAG, child_rng, child_seed

SCHEMA_VERSION = 1

SIGNALS = ("decreasing", "constant", "sparse")


@dataclass(frozen=True)
class SimDesign:
    """One simulation design cell.

    k_obs defaults to floor(4 ln n) for the misspecified family (15 at n=50,
    20 at n=150) and is required for the correct family.  r2 targets the
    population R^2 of the full latent signal against unit normal noise.
    """

    family: str  # "misspecified" | "correct"
    n: int
    r2: float
    tau: float
    rho_x: float
    signal: str = "decreasing"
    k_obs: Optional[int] = None
    p_latent: int = 1000
    n_test: int = 100
    n_reps: int = 1000

    def __post_init__(self):
        if self.family not in ("misspecified", "correct"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.signal not in SIGNALS:
            raise ValueError(f"unknown signal {self.signal!r}")
        if not 0.0 <= self.r2 < 1.0:
            raise ValueError("r2 must lie in [0, 1)")
        if not 0.0 <= self.rho_x < 1.0:
            raise ValueError("rho_x must lie in [0, 1)")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if self.n_test < 1 or self.n < 2 or self.n_reps < 1:
            raise ValueError("n, n_test, n_reps out of range")
        if self.family == "correct" and self.k_obs is None:
            raise ValueError("correct family requires explicit k_obs")

    @property
    def observed_k(self) -> int:
        if self.k_obs is not None:
            return int(self.k_obs)
        return default_k_obs(self.n)

    @property
    def latent_p(self) -> int:
        return int(self.p_latent) if self.family == "misspecified" else self.observed_k

    def coefficients(self) -> np.ndarray:
        """Latent regression weights, constant column included at position 0."""
        p = self.latent_p
        j = np.arange(1, p + 1, dtype=np.float64)
        if self.family == "misspecified" or self.signal == "decreasing":
            return 1.0 / j
        if self.signal == "constant":
            return np.ones(p)
        beta = np.zeros(p)
        beta[:2] = 1.0
        return beta


def default_k_obs(n: int) -> int:
    """floor(4 ln n): 15 at n=50, 20 at n=150."""
    return int(math.floor(4.0 * math.log(n)))


def gen_equicorrelated_normal(n: int, p: int, rho: float, seed: int) -> np.ndarray:
    """n x p matrix with N(0,1) entries and common pairwise correlation rho.

    Exact one-factor construction: x_j = sqrt(rho) z + sqrt(1-rho) e_j.
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    rng = child_rng(seed)
    z = rng.standard_normal(n)
    e = rng.standard_normal((n, p))
    return np.sqrt(rho) * z[:, None] + np.sqrt(1.0 - rho) * e


def signal_variance(coeffs: np.ndarray, rho: float) -> float:
    """Var(sum_j beta_j x_j) for stochastic equicorrelated columns.

    The constant column (position 0) carries no variance and is excluded.
    """
    b = np.asarray(coeffs, dtype=np.float64)[1:]
    return float((1.0 - rho) * np.sum(b * b) + rho * np.sum(b) ** 2)


def solve_theta_for_r2(design: SimDesign, coeffs: Optional[np.ndarray] = None) -> float:
    """Signal scale theta with R^2 = theta^2 V / (theta^2 V + 1)."""
    if coeffs is None:
        coeffs = design.coefficients()
    if design.r2 == 0.0:
        return 0.0
    v = signal_variance(coeffs, design.rho_x)
    if v <= 0.0:
        raise ValueError("design has no stochastic signal but r2 > 0")
    return math.sqrt((design.r2 / (1.0 - design.r2)) / v)


def gen_replication(design: SimDesign, rep_seed: int) -> Tuple[Dataset, Dataset]:
    """(train, test) datasets for one replication.

    The latent matrix has a constant first column; only the first
    ``observed_k`` columns become the observed Dataset.
    """
    p = design.latent_p
    k_obs = design.observed_k
    if not 1 <= k_obs <= p:
        raise ValueError(f"k_obs must lie in [1, {p}], got {k_obs}")
    total = design.n + design.n_test
    X = np.empty((total, p))
    X[:, 0] = 1.0
    X[:, 1:] = gen_equicorrelated_normal(total, p - 1, design.rho_x, child_seed(rep_seed, 0))
    eps = child_rng(rep_seed, 1).standard_normal(total)
    theta = solve_theta_for_r2(design)
    y = theta * (X @ design.coefficients()) + eps
    names = [f"x{j + 1}" for j in range(k_obs)]
    train = Dataset(y=y[: design.n], X=X[: design.n, :k_obs], names=names, intercept_col=0)
    test = Dataset(y=y[design.n :], X=X[design.n :, :k_obs], names=names, intercept_col=0)
    return train, test


def fpe_of(predictor, test: Dataset, tau: float) -> float:
    """Mean check loss of the predictor on the test set."""
    preds = predictor.predict_rows(test.X)
    return float(np.mean(check_loss(test.y - preds, tau)))


@dataclass
class StudyResult:
    """Per-replication FPE matrix and the three summary metrics."""

    design: SimDesign
    methods: List[str]
    fpe: np.ndarray  # (R, n_methods), NaN marks a failed fit
    seed: int
    avg_fpe: np.ndarray = field(init=False)
    sd_fpe: np.ndarray = field(init=False)
    winning_ratio: np.ndarray = field(init=False)
    loss_to_csa: Optional[np.ndarray] = field(init=False)
    n_failed: np.ndarray = field(init=False)
    failures: List[str] = field(default_factory=list)

    def __post_init__(self):
        fpe = np.asarray(self.fpe, dtype=np.float64)
        self.fpe = fpe
        ok = np.isfinite(fpe)
        self.n_failed = (~ok).sum(axis=0)
        with np.errstate(invalid="ignore"):
            self.avg_fpe = np.array(
                [fpe[ok[:, j], j].mean() if ok[:, j].any() else np.nan for j in range(fpe.shape[1])]
            )
            self.sd_fpe = np.array(
                [
                    fpe[ok[:, j], j].std(ddof=1) if ok[:, j].sum() > 1 else np.nan
                    for j in range(fpe.shape[1])
                ]
            )
        complete = ok.all(axis=1)
        self.n_complete = int(complete.sum())
        wins = np.zeros(fpe.shape[1])
        if self.n_complete:
            sub = fpe[complete]
            for j in range(fpe.shape[1]):
                others = np.delete(sub, j, axis=1)
                strict = (sub[:, j : j + 1] < others).all(axis=1) if others.size else np.ones(
                    sub.shape[0], dtype=bool
                )
                wins[j] = strict.mean()
        self.winning_ratio = wins
        if "csa" in self.methods:
            jc = self.methods.index("csa")
            vals = np.full(fpe.shape[1], np.nan)
            for j in range(fpe.shape[1]):
                if j == jc:
                    continue
                both = ok[:, j] & ok[:, jc]
                if both.any():
                    vals[j] = float(np.mean(fpe[both, jc] < fpe[both, j]))
            self.loss_to_csa = vals
        else:
            self.loss_to_csa = None

    def metric(self, name: str, method: str) -> float:
        j = self.methods.index(method)
        return float(getattr(self, name)[j])


def _replicate(design: SimDesign, methods, settings: MethodSettings, master_seed: int, r: int):
    """One replication: generate, fit every method, score FPE."""
    train, test = gen_replication(design, child_seed(master_seed, r, DATA_TAG))
    row = np.full(len(methods), np.nan)
    errors = []
    for j, m in enumerate(methods):
        seed = child_seed(master_seed, r, METHOD_TAG, method_tag(m))
        try:
            predictor = fit_method(m, train, design.tau, seed, settings)
            row[j] = fpe_of(predictor, test, design.tau)
        except Exception as exc:  # noqa: BLE001 - failed replications are data
            errors.append(f"rep {r} method {method_label(m)}: {exc!r}")
    return r, row, errors


def run_study(
    design: SimDesign,
    methods: Sequence,
    master_seed: int = 0,
    n_jobs: int = 1,
    settings: Optional[MethodSettings] = None,
) -> StudyResult:
    """Run all replications of one design and assemble the metrics.

    Replications are independent work units with derived seeds; results are
    reduced in replication order, so the output is identical for any n_jobs.
    """
    methods = check_methods(methods)
    settings = settings or MethodSettings()
    R = design.n_reps
    fpe = np.full((R, len(methods)), np.nan)
    failures: List[str] = []
    if n_jobs <= 1:
        for r in range(R):
            _, row, errs = _replicate(design, methods, settings, master_seed, r)
            fpe[r] = row
            failures.extend(errs)
    else:
        with ProcessPoolExecutor(max_workers=int(n_jobs)) as pool:
            futures = [
                pool.submit(_replicate, design, methods, settings, master_seed, r)
                for r in range(R)
            ]
            for fut in futures:
                r, row, errs = fut.result()
                fpe[r] = row
                failures.extend(errs)
    labels = [method_label(m) for m in methods]
    return StudyResult(design=design, methods=labels, fpe=fpe, seed=master_seed, failures=failures)


def write_study_csv(result: StudyResult, path) -> None:
    """Long-format per-replication FPE table (RFC 4180)."""
    d = result.design
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(
            ["family", "signal", "n", "k_obs", "r2", "tau", "rho_x", "method", "replication", "fpe"]
        )
        for r in range(result.fpe.shape[0]):
            for j, m in enumerate(result.methods):
                v = result.fpe[r, j]
                w.writerow(
                    [
                        d.family,
                        d.signal,
                        d.n,
                        d.observed_k,
                        repr(d.r2),
                        repr(d.tau),
                        repr(d.rho_x),
                        m,
                        r,
                        repr(float(v)) if np.isfinite(v) else "",
                    ]
                )


def study_summary_dict(result: StudyResult) -> dict:
    def col(arr):
        if arr is None:
            return None
        return {m: (None if not np.isfinite(v) else float(v)) for m, v in zip(result.methods, arr)}

    return {
        "schema_version": SCHEMA_VERSION,
        "design": asdict(result.design),
        "seed": result.seed,
        "methods": result.methods,
        "n_reps": int(result.fpe.shape[0]),
        "n_complete": result.n_complete,
        "avg_fpe": col(result.avg_fpe),
        "sd_fpe": col(result.sd_fpe),
        "winning_ratio": col(result.winning_ratio),
        "loss_to_csa": col(result.loss_to_csa),
        "n_failed": {m: int(v) for m, v in zip(result.methods, result.n_failed)},
        "failures": result.failures,
    }


def write_study_summary(result: StudyResult, path) -> None:
    with open(path, "w") as fh:
        json.dump(study_summary_dict(result), fh, indent=2, sort_keys=True)
        fh.write("\n")
