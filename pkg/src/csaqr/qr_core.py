"""Check-loss (pinball) quantile regression primitives.

Fits are computed by a Mehrotra predictor-corrector interior point on the LP
formulation of the check-loss problem (see ``_ipm``), stopping on a relative
duality gap of ``SolverOptions.tol``.  L1 penalties are folded into the
problem as extra tau=0.5 pseudo-observations; squared-L2 penalties enter the
normal equations directly.  Solutions of the check-loss problem need not be
unique; every downstream contract in this package is therefore stated on
objective values, predictions, or residual counts, never on coefficient
identity.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._ipm import ipm_fit
from .seeding import child_rng


@dataclass(frozen=True)
class SolverOptions:
    """Interior-point controls.

    tol : relative duality-gap stopping threshold.
    max_iter : iteration cap; on hitting it the best iterate is returned
        with ``converged=False``.
    ridge_eps : diagonal stabilizer for the normal equations, which makes
        near-collinear designs (routine under heavy equicorrelation) solvable;
        its use is flagged in the fit diagnostics.
    """

    tol: float = 1e-8
    max_iter: int = 50
    ridge_eps: float = 1e-10

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.ridge_eps < 0:
            raise ValueError("ridge_eps must be >= 0")


@dataclass
class Dataset:
    """Outcome vector plus regressor matrix with column labels.

    ``intercept_col`` marks an all-ones column when one is present; penalized
    fits leave that column unpenalized and the averaging layer can force it
    into every subset.
    """

    y: np.ndarray
    X: np.ndarray
    names: Optional[Sequence[str]] = None
    intercept_col: Optional[int] = None

    def __post_init__(self):
        self.y = np.ascontiguousarray(self.y, dtype=np.float64)
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        if self.y.ndim != 1 or self.X.ndim != 2:
            raise ValueError("y must be 1-d and X 2-d")
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("y and X row counts differ")
        if self.n < 1 or self.p < 1:
            raise ValueError("need at least one row and one column")
        if not np.all(np.isfinite(self.y)) or not np.all(np.isfinite(self.X)):
            raise ValueError("non-finite entries in data")
        if self.names is None:
            self.names = [f"x{j + 1}" for j in range(self.p)]
        else:
            self.names = list(self.names)
            if len(self.names) != self.p:
                raise ValueError("names length must equal column count")
        if self.intercept_col is not None:
            ic = int(self.intercept_col)
            if not 0 <= ic < self.p:
                raise ValueError("intercept_col out of range")
            if not np.all(self.X[:, ic] == 1.0):
                raise ValueError("intercept column must be exactly all ones")
            self.intercept_col = ic

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass
class QuantileFit:
    """One fitted check-loss regression.

    ``objective`` is the minimized criterion on the mean scale: mean check
    loss, plus the mean-scale penalty for penalized fits.  ``cols`` records
    which dataset columns the coefficients refer to, enabling prediction from
    full-width rows.
    """

    theta: np.ndarray
    tau: float
    objective: float
    iterations: int
    converged: bool
    cols: Optional[tuple] = None
    info: Optional[dict] = None

    def predict_rows(self, X: np.ndarray) -> np.ndarray:
        """Predictions for full-width regressor rows."""
        X = np.asarray(X, dtype=np.float64)
        if self.cols is not None:
            X = X[:, list(self.cols)]
        if X.shape[1] != self.theta.shape[0]:
            raise ValueError("column count does not match coefficient length")
        return X @ self.theta


def check_loss(u, tau: float):
    """rho_tau(u) = u * (tau - 1{u <= 0}); vectorized over u."""
    _check_tau(tau)
    arr = np.asarray(u, dtype=np.float64)
    out = arr * (tau - (arr <= 0.0))
    if np.isscalar(u) or arr.ndim == 0:
        return float(out)
    return out


def _check_tau(tau: float) -> None:
    if not 0.0 < float(tau) < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")


def _check_cols(data: Dataset, cols) -> tuple:
    cols = tuple(int(c) for c in cols)
    if len(cols) == 0:
        raise ValueError("cols must be nonempty")
    if len(set(cols)) != len(cols):
        raise ValueError("cols must be distinct")
    for c in cols:
        if not 0 <= c < data.p:
            raise ValueError(f"column index {c} out of range [0, {data.p})")
    return cols


def _wrap(theta, tau, obj_sum, n, iters, conv, ridged, cols, extra=None) -> QuantileFit:
    info = dict(extra) if extra else None
    if ridged:
        info = info or {}
        info["rank_deficient"] = True
    return QuantileFit(
        theta=np.asarray(theta[: len(cols)]).copy(),
        tau=float(tau),
        objective=float(obj_sum) / n,
        iterations=int(iters),
        converged=bool(conv),
        cols=cols,
        info=info,
    )


def fit_qr(data: Dataset, cols, tau: float, opts: Optional[SolverOptions] = None) -> QuantileFit:
    """Minimize the mean check loss over the selected columns.

    The objective is convex; the returned point is within ``opts.tol``
    (relative duality gap) of the global optimum.  With fewer rows than
    fitted columns the problem interpolates and a warning is issued.
    """
    opts = opts or SolverOptions()
    cols = _check_cols(data, cols)
    _check_tau(tau)
    if data.n <= len(cols):
        warnings.warn(
            f"fitting {len(cols)} columns with only {data.n} rows", RuntimeWarning
        )
    X = np.ascontiguousarray(data.X[:, cols])
    taus = np.full(data.n, float(tau))
    theta, obj, it, conv, rid = ipm_fit(
        X, data.y, taus, np.zeros(len(cols)), opts.tol, opts.max_iter, opts.ridge_eps
    )
    return _wrap(theta, tau, obj, data.n, it, conv, rid, cols)


def _penalized_positions(data: Dataset, cols: tuple) -> list:
    return [j for j, c in enumerate(cols) if c != data.intercept_col]


def fit_qr_l1(
    data: Dataset,
    cols,
    tau: float,
    lam: float,
    opts: Optional[SolverOptions] = None,
) -> QuantileFit:
    """Mean check loss plus (lam/n) * sum_j |theta_j|, intercept unpenalized.

    Implemented by appending one tau=0.5 pseudo-row per penalized coefficient
    (x = 2*lam*e_j, y = 0), which contributes exactly lam*|theta_j| to the
    summed criterion.
    """
    opts = opts or SolverOptions()
    cols = _check_cols(data, cols)
    _check_tau(tau)
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    pen = _penalized_positions(data, cols)
    n, k = data.n, len(cols)
    if lam == 0 or not pen:
        fit = fit_qr(data, cols, tau, opts)
        fit.info = dict(fit.info or {}, penalty="l1", lam=float(lam))
        return fit
    m = len(pen)
    X = np.zeros((n + m, k))
    X[:n] = data.X[:, cols]
    y = np.zeros(n + m)
    y[:n] = data.y
    taus = np.full(n + m, 0.5)
    taus[:n] = float(tau)
    for r, j in enumerate(pen):
        X[n + r, j] = 2.0 * lam
    theta, obj, it, conv, rid = ipm_fit(
        np.ascontiguousarray(X), y, taus, np.zeros(k), opts.tol, opts.max_iter, opts.ridge_eps
    )
    return _wrap(theta, tau, obj, n, it, conv, rid, cols, {"penalty": "l1", "lam": float(lam)})


def fit_qr_l2(
    data: Dataset,
    cols,
    tau: float,
    lam: float,
    opts: Optional[SolverOptions] = None,
) -> QuantileFit:
    """Mean check loss plus (lam/n) * ||theta||^2 on non-intercept coefficients."""
    opts = opts or SolverOptions()
    cols = _check_cols(data, cols)
    _check_tau(tau)
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    pen = _penalized_positions(data, cols)
    dpen = np.zeros(len(cols))
    dpen[pen] = float(lam)
    X = np.ascontiguousarray(data.X[:, cols])
    taus = np.full(data.n, float(tau))
    theta, obj, it, conv, rid = ipm_fit(
        X, data.y, taus, dpen, opts.tol, opts.max_iter, opts.ridge_eps
    )
    return _wrap(theta, tau, obj, data.n, it, conv, rid, cols, {"penalty": "l2", "lam": float(lam)})


def belloni_lambda(
    X: np.ndarray,
    tau: float,
    confidence: float = 0.90,
    n_sim: int = 1000,
    seed: int = 0,
    c: float = 1.0,
) -> float:
    """Simulated score-quantile tuning value for the L1 penalty.

    Columns are standardized to unit sample second moment, then the
    ``confidence`` quantile of max_j |sum_i x_ij * (tau - 1{u_i <= tau})| over
    ``n_sim`` draws of iid uniform u is returned, scaled by ``c``.  The result
    plugs directly into :func:`fit_qr_l1` as ``lam``.
    """
    _check_tau(tau)
    if n_sim < 100:
        raise ValueError("n_sim must be >= 100")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a matrix")
    var = X.var(axis=0)
    bad = np.nonzero(var == 0.0)[0]
    if bad.size:
        raise ValueError(f"zero-variance column at index {int(bad[0])}")
    norms = np.sqrt(np.mean(X * X, axis=0))
    Xn = X / norms
    rng = child_rng(seed)
    U = rng.random((int(n_sim), X.shape[0]))
    psi = tau - (U <= tau)
    scores = np.max(np.abs(psi @ Xn), axis=1)
    return float(c * np.quantile(scores, confidence))


def unconditional_quantile(y, tau: float) -> float:
    """Empirical tau-quantile as a check-loss minimizer, lower tie.

    Returns the smallest sample value minimizing the mean check loss, which
    makes the benchmark coincide (in objective) with an intercept-only
    :func:`fit_qr`.
    """
    _check_tau(tau)
    y = np.sort(np.asarray(y, dtype=np.float64))
    n = y.shape[0]
    if n == 0:
        raise ValueError("y must be nonempty")
    h = n * tau
    # snap to the tie interval when n*tau is an intended integer
    if abs(h - round(h)) < 1e-9:
        idx = int(round(h)) - 1
    else:
        idx = int(np.ceil(h)) - 1
    return float(y[min(max(idx, 0), n - 1)])


def predict(fit: QuantileFit, x) -> float:
    """x' theta for a regressor vector matching the fitted columns."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != fit.theta.shape:
        raise ValueError("dimension mismatch between x and theta")
    return float(x @ fit.theta)


def zero_tolerance(y: np.ndarray) -> float:
    """Scale-aware residual zero threshold: 1e-7 * (1 + max|y|)."""
    ymax = float(np.max(np.abs(y))) if len(y) else 0.0
    return 1e-7 * (1.0 + ymax)


def residual_sign_counts(fit: QuantileFit, data: Dataset, cols) -> tuple:
    """(n_neg, n_zero, n_pos) residual counts at the fitted coefficients."""
    cols = _check_cols(data, cols)
    r = data.y - data.X[:, cols] @ fit.theta
    tz = zero_tolerance(data.y)
    n_neg = int(np.sum(r < -tz))
    n_pos = int(np.sum(r > tz))
    return n_neg, data.n - n_neg - n_pos, n_pos
