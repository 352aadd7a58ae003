"""The four comparator methods: JMA, L1QR, BAG, L2QR.

JMA averages a caller-supplied (by default encompassing/nested) model list
with simplex weights chosen to minimize the leave-one-out check loss of the
weighted prediction; the weight problem is a small linear program.  BAG
averages full-model fits over nonparametric bootstrap resamples.  L1QR pairs
the simulated score-quantile tuning rule with the L1-penalized fit; L2QR
picks its penalty by k-fold cross-validation over a fixed grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from ._ipm import cv_predictions, fit_bootstrap
from .csa import SCHEMA_VERSION, _ragged
from .qr_core import (
    Dataset,
    QuantileFit,
    SolverOptions,
    _check_tau,
    belloni_lambda,
    check_loss,
    fit_qr,
    fit_qr_l1,
    fit_qr_l2,
)
from .seeding import BOOT_TAG, FOLD_TAG, child_rng

L2_GRID_DEFAULT = (0.01, 0.05, 0.1, 0.5, 1.0)


@dataclass
class JmaPredictor:
    """Simplex-weighted combination of nested quantile regressions."""

    models: List[Tuple[int, ...]]
    weights: np.ndarray
    fits: List[QuantileFit]
    tau: float
    cv_objective: float

    def predict_rows(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.zeros(X.shape[0])
        for w, fit in zip(self.weights, self.fits):
            out += w * (X[:, list(fit.cols)] @ fit.theta)
        return out

    def to_json_dict(self, names=None) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "method": "jma",
            "tau": self.tau,
            "columns": list(names) if names is not None else None,
            "models": [list(map(int, m)) for m in self.models],
            "weights": [float(w) for w in self.weights],
            "thetas": [[float(t) for t in f.theta] for f in self.fits],
            "cv_objective": float(self.cv_objective),
        }


@dataclass
class BagPredictor:
    """Mean of full-model fits over bootstrap resamples."""

    b_reps: int
    fits: List[QuantileFit]
    seed: int
    tau: float

    def predict_rows(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.zeros(X.shape[0])
        for fit in self.fits:
            out += X[:, list(fit.cols)] @ fit.theta
        return out / len(self.fits)

    def to_json_dict(self, names=None) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "method": "bag",
            "tau": self.tau,
            "columns": list(names) if names is not None else None,
            "b_reps": int(self.b_reps),
            "seed": int(self.seed),
            "thetas": [[float(t) for t in f.theta] for f in self.fits],
        }


def encompassing_models(p: int) -> List[Tuple[int, ...]]:
    """Nested prefixes of the columns in their given order."""
    return [tuple(range(m + 1)) for m in range(p)]


def fit_jma(
    data: Dataset,
    tau: float,
    model_list: Optional[Sequence[Sequence[int]]] = None,
    opts: Optional[SolverOptions] = None,
) -> JmaPredictor:
    """Jackknife model averaging over an ordered model list.

    Weights minimize (1/n) sum_i rho_tau(y_i - sum_m w_m yhat_im) over the
    simplex, where yhat_im is the leave-one-out prediction of observation i
    by model m; the final predictor applies those weights to full-sample
    fits.  The weight problem is solved exactly as an LP (epigraph split of
    the check loss).
    """
    _check_tau(tau)
    opts = opts or SolverOptions()
    if model_list is None:
        model_list = encompassing_models(data.p)
    models = [tuple(int(c) for c in m) for m in model_list]
    if not models or any(len(m) == 0 for m in models):
        raise ValueError("model_list must be nonempty with nonempty models")
    n, M = data.n, len(models)

    flat, offs = _ragged(models)
    loo, _ = cv_predictions(
        data.X, data.y, flat, offs, float(tau),
        np.arange(n, dtype=np.int64), n, opts.tol, opts.max_iter, opts.ridge_eps,
    )
    yhat = loo.T  # (n, M)

    c = np.concatenate([np.zeros(M), np.full(n, tau / n), np.full(n, (1 - tau) / n)])
    A_eq = np.zeros((n + 1, M + 2 * n))
    A_eq[:n, :M] = yhat
    A_eq[:n, M : M + n] = np.eye(n)
    A_eq[:n, M + n :] = -np.eye(n)
    A_eq[n, :M] = 1.0
    b_eq = np.concatenate([data.y, [1.0]])
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"JMA weight LP failed (status {res.status}): {res.message}")
    weights = res.x[:M]
    weights = np.maximum(weights, 0.0)
    weights = weights / weights.sum()

    fits = [fit_qr(data, m, tau, opts) for m in models]
    return JmaPredictor(
        models=models,
        weights=weights,
        fits=fits,
        tau=float(tau),
        cv_objective=float(res.fun),
    )


def jma_predict(pred: JmaPredictor, x) -> float:
    """Weighted prediction for one full-width regressor row."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("x must be a vector")
    return float(pred.predict_rows(x[None, :])[0])


def fit_bag(
    data: Dataset,
    tau: float,
    b_reps: int = 1000,
    seed: int = 0,
    opts: Optional[SolverOptions] = None,
    indices: Optional[np.ndarray] = None,
) -> BagPredictor:
    """Bootstrap-aggregated full-model quantile regression.

    ``indices`` overrides the resample index matrix (test hook); by default
    b_reps nonparametric resamples of size n are drawn from the seed stream.
    """
    _check_tau(tau)
    opts = opts or SolverOptions()
    if b_reps < 1:
        raise ValueError("b_reps must be >= 1")
    n, p = data.n, data.p
    if indices is None:
        rng = child_rng(seed, BOOT_TAG)
        indices = rng.integers(0, n, size=(int(b_reps), n))
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    if indices.shape != (int(b_reps), n):
        raise ValueError("indices must have shape (b_reps, n)")
    thetas, convs, ridged = fit_bootstrap(
        data.X, data.y, indices, float(tau), opts.tol, opts.max_iter, opts.ridge_eps
    )
    cols = tuple(range(p))
    fits = [
        QuantileFit(
            theta=thetas[b].copy(),
            tau=float(tau),
            objective=float("nan"),
            iterations=0,
            converged=bool(convs[b]),
            cols=cols,
            info={"rank_deficient": True} if ridged[b] else None,
        )
        for b in range(int(b_reps))
    ]
    return BagPredictor(b_reps=int(b_reps), fits=fits, seed=int(seed), tau=float(tau))


def bag_predict(pred: BagPredictor, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(pred.predict_rows(x[None, :])[0])


def fit_l1qr(
    data: Dataset,
    tau: float,
    opts: Optional[SolverOptions] = None,
    confidence: float = 0.90,
    n_sim: int = 1000,
    seed: int = 0,
    c: float = 1.0,
) -> QuantileFit:
    """L1-penalized fit of all columns with the simulated-score tuning value.

    Penalized columns are standardized to unit sample second moment for both
    the tuning simulation and the penalty weighting; coefficients are
    returned on the original scale.  The intercept column is unpenalized.
    """
    _check_tau(tau)
    opts = opts or SolverOptions()
    cols = tuple(range(data.p))
    pen_cols = [j for j in cols if j != data.intercept_col]
    if not pen_cols:
        return fit_qr(data, cols, tau, opts)
    lam = belloni_lambda(
        data.X[:, pen_cols], tau, confidence=confidence, n_sim=n_sim, seed=seed, c=c
    )
    scales = np.ones(data.p)
    scales[pen_cols] = np.sqrt(np.mean(data.X[:, pen_cols] ** 2, axis=0))
    scaled = Dataset(
        y=data.y,
        X=data.X / scales,
        names=data.names,
        intercept_col=data.intercept_col,
    )
    fit = fit_qr_l1(scaled, cols, tau, lam, opts)
    fit.theta = fit.theta / scales
    fit.info = dict(
        fit.info or {},
        lam=float(lam),
        confidence=float(confidence),
        n_sim=int(n_sim),
        seed=int(seed),
        c=float(c),
    )
    return fit


def fit_to_json_dict(fit: QuantileFit, method: str, names=None) -> dict:
    """Serialize a penalized/plain fit in the shared predictor envelope."""
    return {
        "schema_version": SCHEMA_VERSION,
        "method": method,
        "tau": fit.tau,
        "columns": list(names) if names is not None else None,
        "cols": list(map(int, fit.cols)) if fit.cols is not None else None,
        "theta": [float(t) for t in fit.theta],
        "objective": float(fit.objective),
        "info": fit.info,
    }


def fit_l2qr_cv(
    data: Dataset,
    tau: float,
    grid: Sequence[float] = L2_GRID_DEFAULT,
    folds: int = 10,
    seed: int = 0,
    opts: Optional[SolverOptions] = None,
) -> QuantileFit:
    """L2-penalized fit with the penalty chosen by k-fold cross-validation.

    Held-out mean check loss is computed per grid value on seeded
    size-balanced folds; the smallest minimizing lambda wins and the winner
    is refit on the full sample.
    """
    _check_tau(tau)
    opts = opts or SolverOptions()
    grid = sorted({float(g) for g in grid})
    if not grid:
        raise ValueError("grid must be nonempty")
    if any(g < 0 for g in grid):
        raise ValueError("grid values must be >= 0")
    n = data.n
    b = int(folds)
    if not 2 <= b <= n:
        raise ValueError(f"folds must be in [2, n], got {b}")
    cols = tuple(range(data.p))
    perm = child_rng(seed, FOLD_TAG).permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[perm] = np.arange(n) % b

    losses = np.zeros(len(grid))
    for f in range(b):
        mask = fold_of != f
        train = Dataset(
            y=data.y[mask],
            X=data.X[mask],
            names=data.names,
            intercept_col=data.intercept_col,
        )
        Xho, yho = data.X[~mask], data.y[~mask]
        for g, lam in enumerate(grid):
            fit = fit_qr_l2(train, cols, tau, lam, opts)
            losses[g] += float(np.sum(check_loss(yho - Xho @ fit.theta, tau)))
    best = int(np.argmin(losses / n))  # first occurrence = smallest lambda
    fit = fit_qr_l2(data, cols, tau, grid[best], opts)
    fit.info = dict(
        fit.info or {},
        lam=float(grid[best]),
        grid=[float(g) for g in grid],
        folds=b,
        seed=int(seed),
        cv_losses=[float(v) for v in losses / n],
    )
    return fit
