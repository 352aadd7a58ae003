"""Complete subset averaging for quantile prediction.

For a subset size k, every selected size-k submodel is fit by check-loss
regression and the prediction is the equal-weight average of the submodel
predictions.  The size is chosen by cross-validation: for each k the same
subset plan is shared across all leave-one-out (or b-fold) refits, per-k
plans and fold assignments are derived deterministically from one seed, and
the final predictor refits the selected size on the full sample with the
identical plan.  Ties in the CV criterion go to the smallest k.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ._ipm import cv_predictions, fit_subsets
from .qr_core import Dataset, QuantileFit, SolverOptions, _check_tau, check_loss
from .seeding import FOLD_TAG, child_rng
from .subsets import SubsetPlan, sample_subsets

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CsaConfig:
    """Knobs for the full select-then-fit pipeline.

    mode "auto" uses 10-fold cross-validation when n >= 150 and leave-one-out
    otherwise.  With ``force_intercept`` the dataset's intercept column is
    added to every subset and k counts only the free regressors drawn from
    the remaining columns.
    """

    k_max: Optional[int] = None
    cap: int = 100
    seed: int = 0
    mode: str = "auto"  # "auto" | "loo" | "bfold"
    n_folds: int = 10
    force_intercept: bool = False
    solver: SolverOptions = field(default_factory=SolverOptions)


@dataclass
class CsaFitForK:
    """All submodel fits for one subset size, full sample."""

    k: int
    plan: SubsetPlan
    fits: List[QuantileFit]
    tau: float
    force_intercept: bool = False

    def predict_rows(self, X: np.ndarray) -> np.ndarray:
        """Equal-weight average of submodel predictions, plan order."""
        X = np.asarray(X, dtype=np.float64)
        preds = np.zeros(X.shape[0])
        for fit in self.fits:
            preds += X[:, list(fit.cols)] @ fit.theta
        return preds / len(self.fits)


@dataclass
class CvCurve:
    """CV_n(k) for k = 1..k_max and the selected size."""

    values: np.ndarray
    k_hat: int
    mode: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("CV values must be finite and nonnegative")


@dataclass
class CsaPredictor:
    """The deployable forecaster: CV curve plus the full-sample refit at k_hat."""

    curve: CvCurve
    final: CsaFitForK
    seed: int
    cap: int

    @property
    def tau(self) -> float:
        return self.final.tau

    @property
    def k_hat(self) -> int:
        return self.curve.k_hat

    def predict_rows(self, X: np.ndarray) -> np.ndarray:
        return self.final.predict_rows(X)

    def to_json_dict(self, names: Optional[List[str]] = None) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "method": "csa",
            "tau": self.final.tau,
            "k_hat": int(self.curve.k_hat),
            "cap": int(self.cap),
            "seed": int(self.seed),
            "cv_mode": self.curve.mode,
            "cv_values": [float(v) for v in self.curve.values],
            "force_intercept": bool(self.final.force_intercept),
            "columns": list(names) if names is not None else None,
            "subsets": [list(map(int, f.cols)) for f in self.final.fits],
            "thetas": [[float(t) for t in f.theta] for f in self.final.fits],
            "objectives": [float(f.objective) for f in self.final.fits],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "CsaPredictor":
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {doc.get('schema_version')}")
        if doc.get("method") != "csa":
            raise ValueError("not a CSA predictor document")
        tau = float(doc["tau"])
        subsets = [tuple(int(c) for c in s) for s in doc["subsets"]]
        fits = [
            QuantileFit(
                theta=np.asarray(th, dtype=np.float64),
                tau=tau,
                objective=float(ob),
                iterations=0,
                converged=True,
                cols=cols,
            )
            for th, ob, cols in zip(doc["thetas"], doc["objectives"], subsets)
        ]
        k_hat = int(doc["k_hat"])
        plan = None  # reconstructed predictors carry fits only, not the plan
        final = CsaFitForK(
            k=k_hat,
            plan=plan,
            fits=fits,
            tau=tau,
            force_intercept=bool(doc.get("force_intercept", False)),
        )
        curve = CvCurve(
            values=np.asarray(doc["cv_values"], dtype=np.float64),
            k_hat=k_hat,
            mode=str(doc["cv_mode"]),
        )
        return cls(curve=curve, final=final, seed=int(doc["seed"]), cap=int(doc["cap"]))


def _pool_columns(data: Dataset, force_intercept: bool) -> list:
    """Columns subsets are drawn from (all, or all but the intercept)."""
    if not force_intercept:
        return list(range(data.p))
    if data.intercept_col is None:
        raise ValueError("force_intercept requires a dataset intercept column")
    return [c for c in range(data.p) if c != data.intercept_col]


def _plan_and_columns(data, k, cap, seed, force_intercept):
    """SubsetPlan over the drawing pool plus absolute fit columns per subset."""
    pool = _pool_columns(data, force_intercept)
    if not 1 <= k <= len(pool):
        raise ValueError(f"need 1 <= k <= {len(pool)}, got k={k}")
    plan = sample_subsets(len(pool), k, cap, seed)
    pool_arr = np.asarray(pool, dtype=np.int64)
    cols = []
    for m in plan.selected:
        absolute = pool_arr[list(m.members)]
        if force_intercept:
            absolute = np.sort(np.append(absolute, data.intercept_col))
        cols.append(tuple(int(c) for c in absolute))
    return plan, cols


def _ragged(cols_list):
    flat = np.concatenate([np.asarray(c, dtype=np.int64) for c in cols_list])
    offs = np.zeros(len(cols_list) + 1, dtype=np.int64)
    np.cumsum([len(c) for c in cols_list], out=offs[1:])
    return flat, offs


def _fold_ids(data: Dataset, mode: str, n_folds: int, seed: int, k_model: int):
    """Holdout assignment: LOO, or seeded size-balanced b folds shared across k."""
    n = data.n
    if mode == "loo":
        if n < k_model + 2:
            raise ValueError(f"leave-one-out needs n >= k+2 (n={n}, model size {k_model})")
        return np.arange(n, dtype=np.int64), n
    if mode == "bfold":
        b = int(n_folds)
        if not 2 <= b <= n:
            raise ValueError(f"b-fold needs 2 <= b <= n, got b={b}, n={n}")
        largest = -(-n // b)
        if n - largest < k_model + 1:
            raise ValueError("insufficient observations after holdout")
        perm = child_rng(seed, FOLD_TAG).permutation(n)
        ids = np.empty(n, dtype=np.int64)
        ids[perm] = np.arange(n) % b
        return ids, b
    raise ValueError(f"unknown cv mode {mode!r}")


def _resolve_mode(mode: str, n: int) -> str:
    if mode == "auto":
        return "bfold" if n >= 150 else "loo"
    return mode


def fit_csa_for_k(
    data: Dataset,
    tau: float,
    k: int,
    cap: int = 100,
    seed: int = 0,
    opts: Optional[SolverOptions] = None,
    force_intercept: bool = False,
) -> CsaFitForK:
    """Fit every subset in the size-k plan on the full sample."""
    _check_tau(tau)
    opts = opts or SolverOptions()
    plan, cols_list = _plan_and_columns(data, k, cap, seed, force_intercept)
    flat, offs = _ragged(cols_list)
    thetas, objs, iters, convs, ridged = fit_subsets(
        data.X, data.y, flat, offs, float(tau), opts.tol, opts.max_iter, opts.ridge_eps
    )
    fits = []
    for m, cols in enumerate(cols_list):
        km = len(cols)
        fits.append(
            QuantileFit(
                theta=thetas[m, :km].copy(),
                tau=float(tau),
                objective=float(objs[m]) / data.n,
                iterations=int(iters[m]),
                converged=bool(convs[m]),
                cols=cols,
                info={"rank_deficient": True} if ridged[m] else None,
            )
        )
    return CsaFitForK(k=k, plan=plan, fits=fits, tau=float(tau), force_intercept=force_intercept)


def csa_predict(fit: CsaFitForK, x) -> float:
    """Equal-weight average prediction for one full-width regressor row."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("x must be a vector")
    return float(fit.predict_rows(x[None, :])[0])


def cv_value(
    data: Dataset,
    tau: float,
    k: int,
    cap: int = 100,
    seed: int = 0,
    mode: str = "loo",
    n_folds: int = 10,
    opts: Optional[SolverOptions] = None,
    force_intercept: bool = False,
) -> float:
    """Cross-validated mean check loss of the size-k averaged predictor.

    Every subset in the size-k plan is refit with each observation's fold
    held out; observation i is then predicted by the equal-weight average of
    the refits that excluded it.
    """
    _check_tau(tau)
    opts = opts or SolverOptions()
    mode = _resolve_mode(mode, data.n)
    plan, cols_list = _plan_and_columns(data, k, cap, seed, force_intercept)
    k_model = len(cols_list[0])
    fold_ids, nf = _fold_ids(data, mode, n_folds, seed, k_model)
    flat, offs = _ragged(cols_list)
    preds, _ = cv_predictions(
        data.X, data.y, flat, offs, float(tau), fold_ids, nf,
        opts.tol, opts.max_iter, opts.ridge_eps,
    )
    yhat = preds.mean(axis=0)
    return float(np.mean(check_loss(data.y - yhat, tau)))


def select_k(
    data: Dataset,
    tau: float,
    k_max: Optional[int] = None,
    cap: int = 100,
    seed: int = 0,
    mode: str = "loo",
    n_folds: int = 10,
    opts: Optional[SolverOptions] = None,
    force_intercept: bool = False,
) -> CvCurve:
    """CV_n(k) for k = 1..k_max; the smallest argmin wins."""
    pool_size = len(_pool_columns(data, force_intercept))
    k_max = pool_size if k_max is None else int(k_max)
    if not 1 <= k_max <= pool_size:
        raise ValueError(f"need 1 <= k_max <= {pool_size}, got {k_max}")
    mode = _resolve_mode(mode, data.n)
    values = np.array(
        [
            cv_value(data, tau, k, cap, seed, mode, n_folds, opts, force_intercept)
            for k in range(1, k_max + 1)
        ]
    )
    k_hat = int(np.argmin(values)) + 1  # first occurrence = smallest k on ties
    label = mode if mode == "loo" else f"bfold({n_folds})"
    return CvCurve(values=values, k_hat=k_hat, mode=label)


def fit_csa(data: Dataset, tau: float, config: Optional[CsaConfig] = None) -> CsaPredictor:
    """Select k by cross-validation, then refit the complete subset at k_hat."""
    config = config or CsaConfig()
    mode = _resolve_mode(config.mode, data.n)
    curve = select_k(
        data,
        tau,
        k_max=config.k_max,
        cap=config.cap,
        seed=config.seed,
        mode=mode,
        n_folds=config.n_folds,
        opts=config.solver,
        force_intercept=config.force_intercept,
    )
    final = fit_csa_for_k(
        data,
        tau,
        curve.k_hat,
        cap=config.cap,
        seed=config.seed,
        opts=config.solver,
        force_intercept=config.force_intercept,
    )
    return CsaPredictor(curve=curve, final=final, seed=config.seed, cap=config.cap)


def save_predictor_json(pred, path, names=None) -> None:
    doc = pred.to_json_dict(names=names) if hasattr(pred, "to_json_dict") else pred
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_predictor_json(path) -> CsaPredictor:
    with open(path) as fh:
        return CsaPredictor.from_json_dict(json.load(fh))
