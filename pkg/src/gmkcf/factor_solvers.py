"""Multiplicative-update solvers for NMF, kernel concept factorization (KCF)
and globally fused multiple kernel concept factorization (GMKCF).

The KCF reconstruction error of a kernel ``K`` under factors ``U, V`` is

    tr(K) - 2 tr(V^T K U) + tr(U^T K U V^T V),

i.e. ``||Phi - Phi U V^T||^2`` in the kernel feature space. GMKCF minimizes
``sum_i w_i**2 e_i`` over nonnegative ``U, V`` and simplex weights ``w``, which
is the same error evaluated on ``K_w = sum_i w_i**2 K_i``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .kernel_bank import KernelBank, weighted_gram


class SolverError(RuntimeError):
    """The objective became non-finite during a fit."""

    def __init__(self, message, iteration):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


@dataclass
class SolverConfig:
    k: int
    max_iter: int = 200
    rel_tol: float = 1e-5
    seed: int = 0
    eps_div: float = 1e-12
    eps_e: float = 1e-12

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")


@dataclass
class Factorization:
    U: np.ndarray
    V: np.ndarray
    w: np.ndarray


@dataclass
class FitReport:
    objective_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    final_w: np.ndarray = None
    elapsed_seconds: float = 0.0
    init: str = "uniform(0,1)"
    seed: int = 0


@dataclass
class KernelSplit:
    k_plus: np.ndarray
    k_minus: np.ndarray


def split_kernel(K) -> KernelSplit:
    A = np.abs(K)
    return KernelSplit((A + K) / 2, (A - K) / 2)


def _residuals(grams, U, V) -> np.ndarray:
    """Per-kernel reconstruction errors for a stack of Gram matrices.

    Both U-dependent terms are Frobenius products with K_i, so
    e_i = tr(K_i) + <K_i, (U VᵀV - 2V) Uᵀ>, one streaming pass over the bank.
    """
    grams = np.asarray(grams)
    W = U @ (V.T @ V) - 2 * V
    traces = np.trace(grams, axis1=1, axis2=2)
    e = traces + grams.reshape(grams.shape[0], -1) @ (W @ U.T).ravel()
    return np.maximum(e, 0.0)


def residual_e(K, U, V) -> float:
    return float(_residuals(np.asarray(K)[None], U, V)[0])


def objective(bank: KernelBank, U, V, w) -> float:
    w = np.asarray(w, dtype=float)
    return float(np.dot(w**2, _residuals(bank.grams, U, V)))


def _root_ratio(b, p_plus, p_minus, eps_div):
    return (b + np.sqrt(b * b + 4 * p_plus * p_minus)) / (2 * p_plus + eps_div)


def update_u(K, U, V, eps_div=1e-12, split=None):
    """One multiplicative step on ``U`` with ``K`` and ``V`` held fixed.

    Nonnegative kernels use the plain ratio rule. For kernels with negative
    entries ``K`` is split as ``K+ - K-`` and each entry is scaled by the
    positive root of ``2 P+ x^2 - 2 B x - 2 P- = 0`` (``B = K V``), which
    keeps ``U`` nonnegative and does not increase the objective. ``split``
    may carry a precomputed ``split_kernel(K)``.
    """
    k = U.shape[1]
    UVV = U @ (V.T @ V)
    if split is None and K.min() < 0:
        split = split_kernel(K)
    if split is None:
        prod = K @ np.hstack([V, UVV])
        return U * prod[:, :k] / (prod[:, k:] + eps_div)
    B = K @ V
    return U * _root_ratio(B, split.k_plus @ UVV, split.k_minus @ UVV, eps_div)


def update_v(K, U, V, eps_div=1e-12, split=None):
    """Multiplicative step on ``V``; mixed-sign kernels use ``Q+- = V (U^T K+- U)``."""
    if split is None and K.min() < 0:
        split = split_kernel(K)
    B = K @ U
    if split is None:
        return V * B / (V @ (U.T @ B) + eps_div)
    Q_plus = V @ (U.T @ (split.k_plus @ U))
    Q_minus = V @ (U.T @ (split.k_minus @ U))
    return V * _root_ratio(B, Q_plus, Q_minus, eps_div)


def update_w(e, eps_e=1e-12) -> np.ndarray:
    """Minimizer of ``sum_i w_i**2 e_i`` over the probability simplex."""
    inv = 1.0 / np.maximum(np.asarray(e, dtype=float), eps_e)
    return inv / inv.sum()


def _init_factors(rng, n_rows, n, k):
    U = rng.uniform(0.0, 1.0, size=(n_rows, k))
    V = rng.uniform(0.0, 1.0, size=(n, k))
    return U, V


def _check_init(init, U_shape, V_shape):
    U, V = (np.array(a, dtype=float) for a in init)
    if U.shape != U_shape or V.shape != V_shape:
        raise ValueError(f"init shapes {U.shape}, {V.shape} do not match {U_shape}, {V_shape}")
    if U.min() < 0 or V.min() < 0:
        raise ValueError("initial factors must be nonnegative")
    return U, V


def _converged(obj_old, obj_new, rel_tol):
    # a zero objective cannot decrease further
    if obj_new <= 0:
        return True
    return (obj_old - obj_new) / obj_new <= rel_tol


def _check_finite(value, iteration):
    if not np.isfinite(value):
        raise SolverError("non-finite objective", iteration)


def _kernel_loop(grams, config: SolverConfig, init, learn_w: bool):
    m, n = grams.shape[0], grams.shape[1]
    if config.k > n:
        raise ValueError(f"k={config.k} exceeds sample count n={n}")
    start = time.perf_counter()
    if init is None:
        U, V = _init_factors(np.random.default_rng(config.seed), n, n, config.k)
    else:
        U, V = _check_init(init, (n, config.k), (n, config.k))
    w = np.full(m, 1.0 / m)
    mixed_sign = bool(grams.min() < 0)

    obj_old = float(np.dot(w**2, _residuals(grams, U, V)))
    _check_finite(obj_old, 0)
    trace = [obj_old]
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        Kw = weighted_gram(grams, w)
        split = split_kernel(Kw) if mixed_sign else None
        U = update_u(Kw, U, V, config.eps_div, split)
        V = update_v(Kw, U, V, config.eps_div, split)
        e = _residuals(grams, U, V)
        if learn_w:
            w = update_w(e, config.eps_e)
        obj_new = float(np.dot(w**2, e))
        _check_finite(obj_new, it)
        trace.append(obj_new)
        if _converged(obj_old, obj_new, config.rel_tol):
            converged = True
            break
        obj_old = obj_new

    report = FitReport(
        objective_trace=trace,
        iterations=it,
        converged=converged,
        final_w=w,
        elapsed_seconds=time.perf_counter() - start,
        seed=config.seed,
        init="uniform(0,1)" if init is None else "given",
    )
    return Factorization(U, V, w), report


def gmkcf_fit(bank: KernelBank, config: SolverConfig, init=None):
    """Fit GMKCF on a kernel bank.

    Each iteration combines the kernels with the current weights, updates
    ``U`` then ``V``, recomputes the per-kernel errors with the new factors,
    refreshes the weights in closed form and records the objective. Stops
    once the relative decrease ``(old - new) / new`` drops to ``rel_tol`` or
    after ``max_iter`` iterations.

    Parameters
    ----------
    bank : KernelBank
    config : SolverConfig
    init : tuple of (U, V), optional
        Starting factors; default draws both from Uniform(0, 1) using
        ``config.seed``.

    Returns
    -------
    (Factorization, FitReport)
    """
    return _kernel_loop(bank.grams, config, init, learn_w=True)


def kcf_fit(K, config: SolverConfig, init=None):
    """Single-kernel concept factorization; same loop with ``w`` fixed at [1]."""
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError("kernel must be a square matrix")
    return _kernel_loop(K[None], config, init, learn_w=False)


def nmf_objective(X, U, V) -> float:
    if sp.issparse(X):
        # ||X||^2 - 2 tr(U^T X V) + tr(U^T U V^T V) without densifying X
        val = X.multiply(X).sum() - 2 * np.sum(U * (X @ V)) + np.sum((U.T @ U) * (V.T @ V))
        return max(float(val), 0.0)
    R = X - U @ V.T
    return float(np.sum(R * R))


def nmf_fit(X, config: SolverConfig, init=None):
    """Frobenius NMF ``X ~ U V^T`` (``U`` is d x k, ``V`` is n x k).

    Returns ``(U, V, FitReport)``.
    """
    if sp.issparse(X):
        X = X.tocsr().astype(float)
        if X.nnz and X.data.min() < 0:
            raise ValueError("NMF requires a nonnegative feature matrix")
    else:
        X = np.asarray(X, dtype=float)
        if X.min() < 0:
            raise ValueError("NMF requires a nonnegative feature matrix")
    d, n = X.shape
    if config.k > n:
        raise ValueError(f"k={config.k} exceeds sample count n={n}")
    start = time.perf_counter()
    if init is None:
        U, V = _init_factors(np.random.default_rng(config.seed), d, n, config.k)
    else:
        U, V = _check_init(init, (d, config.k), (n, config.k))
    eps = config.eps_div

    obj_old = nmf_objective(X, U, V)
    _check_finite(obj_old, 0)
    trace = [obj_old]
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        U = U * (X @ V) / (U @ (V.T @ V) + eps)
        V = V * (X.T @ U) / (V @ (U.T @ U) + eps)
        obj_new = nmf_objective(X, U, V)
        _check_finite(obj_new, it)
        trace.append(obj_new)
        if _converged(obj_old, obj_new, config.rel_tol):
            converged = True
            break
        obj_old = obj_new

    report = FitReport(
        objective_trace=trace,
        iterations=it,
        converged=converged,
        final_w=np.ones(1),
        elapsed_seconds=time.perf_counter() - start,
        seed=config.seed,
        init="uniform(0,1)" if init is None else "given",
    )
    return np.asarray(U), np.asarray(V), report
