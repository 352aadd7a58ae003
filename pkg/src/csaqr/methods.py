"""Registry of forecasting methods shared by the simulation and empirical harnesses.

A method is anything mapping (train Dataset, tau, seed, settings) to an
object with ``predict_rows``.  The built-in names are "csa", "jma", "l1qr",
"bag", "l2qr", plus "unconditional" (the no-regressor benchmark, handy for
sanity checks).  Custom callables with the same signature can be passed
wherever a method name is accepted.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Callable, Sequence, Tuple, Union

import numpy as np

from .csa import CsaConfig, fit_csa
from .competitors import L2_GRID_DEFAULT, fit_bag, fit_jma, fit_l1qr, fit_l2qr_cv
from .qr_core import Dataset, SolverOptions, unconditional_quantile


@dataclass(frozen=True)
class MethodSettings:
    """Per-method configuration used across studies and empirical runs."""

    csa_cap: int = 100
    csa_mode: str = "auto"  # loo below n=150, 10-fold at and above
    csa_folds: int = 10
    csa_k_max: int | None = None
    force_intercept: bool = False
    bag_reps: int = 1000
    l2_grid: Tuple[float, ...] = L2_GRID_DEFAULT
    l2_folds: int = 10
    l1_confidence: float = 0.90
    l1_nsim: int = 1000
    l1_c: float = 1.0
    solver: SolverOptions = field(default_factory=SolverOptions)


class ConstantPredictor:
    """Predicts one number everywhere (the unconditional-quantile benchmark)."""

    def __init__(self, value: float):
        self.value = float(value)

    def predict_rows(self, X) -> np.ndarray:
        return np.full(np.asarray(X).shape[0], self.value)


def _fit_csa(data, tau, seed, s: MethodSettings):
    return fit_csa(
        data,
        tau,
        CsaConfig(
            k_max=s.csa_k_max,
            cap=s.csa_cap,
            seed=seed,
            mode=s.csa_mode,
            n_folds=s.csa_folds,
            force_intercept=s.force_intercept,
            solver=s.solver,
        ),
    )


def _fit_jma(data, tau, seed, s: MethodSettings):
    return fit_jma(data, tau, opts=s.solver)


def _fit_l1qr(data, tau, seed, s: MethodSettings):
    return fit_l1qr(
        data, tau, opts=s.solver, confidence=s.l1_confidence,
        n_sim=s.l1_nsim, seed=seed, c=s.l1_c,
    )


def _fit_bag(data, tau, seed, s: MethodSettings):
    return fit_bag(data, tau, b_reps=s.bag_reps, seed=seed, opts=s.solver)


def _fit_l2qr(data, tau, seed, s: MethodSettings):
    return fit_l2qr_cv(
        data, tau, grid=s.l2_grid, folds=s.l2_folds, seed=seed, opts=s.solver
    )


def _fit_unconditional(data, tau, seed, s: MethodSettings):
    return ConstantPredictor(unconditional_quantile(data.y, tau))


REGISTRY = {
    "csa": _fit_csa,
    "jma": _fit_jma,
    "l1qr": _fit_l1qr,
    "bag": _fit_bag,
    "l2qr": _fit_l2qr,
    "unconditional": _fit_unconditional,
}

MethodLike = Union[str, Callable]


def method_label(method: MethodLike) -> str:
    if isinstance(method, str):
        return method
    return getattr(method, "__name__", str(method))


def method_tag(method: MethodLike) -> int:
    """Stable integer tag for seed derivation; equal labels share streams."""
    return zlib.crc32(method_label(method).encode())


def fit_method(method: MethodLike, data: Dataset, tau: float, seed: int, settings: MethodSettings):
    if isinstance(method, str):
        try:
            fitter = REGISTRY[method]
        except KeyError:
            raise ValueError(
                f"unknown method {method!r}; known: {sorted(REGISTRY)}"
            ) from None
    else:
        fitter = method
    return fitter(data, tau, seed, settings)


def check_methods(methods: Sequence[MethodLike]) -> list:
    methods = list(methods)
    if not methods:
        raise ValueError("methods must be nonempty")
    for m in methods:
        if isinstance(m, str) and m not in REGISTRY:
            raise ValueError(f"unknown method {m!r}; known: {sorted(REGISTRY)}")
    return methods
