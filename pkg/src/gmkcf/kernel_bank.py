"""Candidate kernel construction and linear combination.

Feature matrices follow the column-sample convention: ``X`` is ``d x n``
with one sample per column. ``X`` may be a dense ndarray or a scipy sparse
matrix; Gram matrices are always dense ``n x n`` arrays.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import pdist

NORM_FLOOR = 1e-12

RBF_T_GRID = (0.01, 0.05, 0.1, 1.0, 10.0, 50.0, 100.0)
POLY_GRID = ((0, 2), (0, 4), (1, 2), (1, 4))


class KernelError(ValueError):
    """Raised when a kernel bank cannot be built from the given data."""


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    rbf_t: float = 1.0
    poly_a: int = 1
    poly_b: int = 2

    def __post_init__(self):
        if self.kind not in ("rbf", "polynomial", "cosine"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "rbf" and not self.rbf_t > 0:
            raise ValueError("rbf_t must be positive")
        if self.kind == "polynomial" and self.poly_b < 1:
            raise ValueError("poly_b must be a positive integer")

    @property
    def label(self) -> str:
        if self.kind == "rbf":
            return f"rbf(t={self.rbf_t:g})"
        if self.kind == "polynomial":
            return f"poly(a={self.poly_a},b={self.poly_b})"
        return "cosine"


PAPER12 = tuple(
    [KernelSpec("rbf", rbf_t=t) for t in RBF_T_GRID]
    + [KernelSpec("polynomial", poly_a=a, poly_b=b) for a, b in POLY_GRID]
    + [KernelSpec("cosine")]
)


def parse_recipe(recipe: str | Sequence[KernelSpec]) -> list[KernelSpec]:
    """Turn a recipe name or token list into kernel specs.

    Accepted forms: ``"paper12"``, or a comma-separated list of ``rbf:T``,
    ``poly:A:B`` and ``cosine`` tokens (e.g. ``"rbf:0.1,poly:1:2,cosine"``).
    """
    if not isinstance(recipe, str):
        specs = list(recipe)
        if not specs:
            raise ValueError("empty kernel recipe")
        return specs
    if recipe.strip() == "paper12":
        return list(PAPER12)
    specs = []
    for token in recipe.split(","):
        parts = token.strip().split(":")
        name = parts[0].lower()
        try:
            if name == "rbf" and len(parts) == 2:
                specs.append(KernelSpec("rbf", rbf_t=float(parts[1])))
            elif name in ("poly", "polynomial") and len(parts) == 3:
                specs.append(KernelSpec("polynomial", poly_a=int(parts[1]), poly_b=int(parts[2])))
            elif name == "cosine" and len(parts) == 1:
                specs.append(KernelSpec("cosine"))
            else:
                raise ValueError
        except ValueError:
            raise ValueError(f"bad kernel token {token.strip()!r}") from None
    if not specs:
        raise ValueError("empty kernel recipe")
    return specs


def check_features(X) -> None:
    if X.ndim != 2:
        raise ValueError("feature matrix must be 2-D (d x n)")
    d, n = X.shape
    if d < 1 or n < 2:
        raise ValueError(f"need d >= 1 and n >= 2, got d={d}, n={n}")
    values = X.data if sp.issparse(X) else X
    if not np.all(np.isfinite(values)):
        raise ValueError("feature matrix has non-finite entries")


def _linear_gram(X) -> np.ndarray:
    G = X.T @ X
    if sp.issparse(G):
        G = G.toarray()
    G = np.asarray(G, dtype=float)
    return (G + G.T) / 2


def _sq_distances(X, gram=None) -> np.ndarray:
    G = _linear_gram(X) if gram is None else gram
    sq = np.diag(G)
    D2 = sq[:, None] + sq[None, :] - 2 * G
    np.maximum(D2, 0, out=D2)
    np.fill_diagonal(D2, 0)
    return D2


def mean_pairwise_distance(X) -> float:
    """Mean Euclidean distance over all distinct unordered sample pairs."""
    n = X.shape[1]
    if n < 2:
        raise ValueError("need at least two samples")
    if sp.issparse(X):
        D2 = _sq_distances(X)
        iu = np.triu_indices(n, k=1)
        return float(np.sqrt(D2[iu]).mean())
    return float(pdist(np.asarray(X, dtype=float).T).mean())


def eval_kernel(spec: KernelSpec, X, D0: float | None = None, gram=None) -> np.ndarray:
    """Raw (unnormalized) Gram matrix of one kernel.

    ``gram`` optionally supplies the precomputed linear Gram ``X^T X`` so a
    bank of kernels shares one product.
    """
    G = _linear_gram(X) if gram is None else gram
    if spec.kind == "rbf":
        if D0 is None or not D0 > 0:
            raise KernelError("rbf kernel needs a positive mean pairwise distance D0")
        delta = spec.rbf_t * D0
        K = np.exp(-_sq_distances(X, G) / (2 * delta**2))
    elif spec.kind == "polynomial":
        K = (spec.poly_a + G) ** spec.poly_b
    else:
        norms = np.maximum(np.sqrt(np.maximum(np.diag(G), 0)), NORM_FLOOR)
        K = G / norms[:, None] / norms[None, :]
    return (K + K.T) / 2


def normalize_kernel(K: np.ndarray) -> np.ndarray:
    diag = np.maximum(np.diag(K), NORM_FLOOR)
    s = np.sqrt(diag)
    out = K / s[:, None] / s[None, :]
    return (out + out.T) / 2


def rescale_unit(K: np.ndarray) -> np.ndarray:
    """Map a unit-diagonal kernel into [0, 1] without losing PSD.

    Subtracts the (non-positive) minimum entry from every entry and divides
    by ``1 - c``; adding a nonnegative multiple of the all-ones matrix keeps
    the matrix PSD and the diagonal stays at one.
    """
    c = min(0.0, float(K.min()))
    if c == 0.0:
        return K
    return (K - c) / (1.0 - c)


@dataclass(frozen=True)
class KernelBank:
    """Ordered stack of ``m`` Gram matrices over the same ``n`` samples."""

    grams: np.ndarray
    specs: tuple = field(default=())

    def __post_init__(self):
        grams = np.array(self.grams, dtype=float)
        if grams.ndim == 2:
            grams = grams[None]
        if grams.ndim != 3 or grams.shape[0] < 1 or grams.shape[1] != grams.shape[2]:
            raise ValueError(f"kernel bank must have shape (m, n, n), got {grams.shape}")
        grams.setflags(write=False)
        object.__setattr__(self, "grams", grams)
        specs = tuple(self.specs) or ("precomputed",) * grams.shape[0]
        if len(specs) != grams.shape[0]:
            raise ValueError("one spec per kernel required")
        object.__setattr__(self, "specs", specs)

    @classmethod
    def from_matrices(cls, matrices, specs=()) -> "KernelBank":
        return cls(np.stack([np.asarray(K, dtype=float) for K in matrices]), tuple(specs))

    @property
    def m(self) -> int:
        return self.grams.shape[0]

    @property
    def n(self) -> int:
        return self.grams.shape[1]

    @property
    def labels(self) -> list[str]:
        return [s.label if isinstance(s, KernelSpec) else str(s) for s in self.specs]

    def __len__(self):
        return self.m

    def __getitem__(self, i) -> np.ndarray:
        return self.grams[i]

    def subset(self, indices) -> "KernelBank":
        indices = list(indices)
        return KernelBank(self.grams[indices], tuple(self.specs[i] for i in indices))


def rescale_minmax(K: np.ndarray) -> np.ndarray:
    """Per-matrix min-max map onto [0, 1]; may break PSD."""
    lo, hi = float(K.min()), float(K.max())
    if hi - lo <= 0:
        return np.ones_like(K)
    return (K - lo) / (hi - lo)


RESCALERS = {"shift": rescale_unit, "minmax": rescale_minmax}


def build_bank(X, recipe="paper12", name: str = "dataset", rescale: str = "shift") -> KernelBank:
    """Evaluate, normalize and rescale every kernel in ``recipe``.

    ``rescale="shift"`` (default) keeps every kernel PSD. ``"minmax"``
    stretches each matrix to span [0, 1] exactly; near-constant kernels
    (wide RBF bandwidths) become informative but may lose PSD.
    """
    if rescale not in RESCALERS:
        raise ValueError(f"unknown rescale mode {rescale!r}")
    to_unit = RESCALERS[rescale]
    specs = parse_recipe(recipe)
    check_features(X)
    G = _linear_gram(X)
    D0 = None
    if any(s.kind == "rbf" for s in specs):
        D0 = mean_pairwise_distance(X)
        if D0 <= 0:
            raise KernelError(
                f"{name}: all samples are identical (mean pairwise distance 0); "
                "rbf bandwidth is undefined"
            )
    grams = np.empty((len(specs), G.shape[0], G.shape[0]))
    for i, spec in enumerate(specs):
        grams[i] = to_unit(normalize_kernel(eval_kernel(spec, X, D0, gram=G)))
    return KernelBank(grams, tuple(specs))


def weighted_gram(grams: np.ndarray, w) -> np.ndarray:
    """Sum of ``w_i**2 * K_i`` with no constraint on ``w``."""
    w = np.asarray(w, dtype=float)
    grams = np.asarray(grams)
    if grams.ndim == 2:
        grams = grams[None]
    if w.shape != (grams.shape[0],):
        raise ValueError(f"expected {grams.shape[0]} weights, got shape {w.shape}")
    return np.tensordot(w**2, grams, axes=1)


def check_simplex(w, tol: float = 1e-9) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or np.any(w < 0) or abs(w.sum() - 1.0) > tol:
        raise ValueError("kernel weights must be nonnegative and sum to 1")
    return w


def combine(bank: KernelBank, w) -> np.ndarray:
    """Combined kernel ``K_w = sum_i w_i**2 K_i`` for simplex weights ``w``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (bank.m,):
        raise ValueError(f"expected {bank.m} weights, got shape {w.shape}")
    return weighted_gram(bank.grams, check_simplex(w))


def save_bank(path, bank: KernelBank) -> None:
    header = {
        "n": bank.n,
        "m": bank.m,
        "specs": [
            {"kind": s.kind, "rbf_t": s.rbf_t, "poly_a": s.poly_a, "poly_b": s.poly_b}
            if isinstance(s, KernelSpec) else {"kind": str(s)}
            for s in bank.specs
        ],
    }
    with open(path, "wb") as fh:
        np.savez(fh, grams=bank.grams, header=np.array(json.dumps(header)))


def load_bank(path) -> KernelBank:
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        grams = z["grams"]
    if grams.shape != (header["m"], header["n"], header["n"]):
        raise ValueError(f"{path}: header does not match stored matrices")
    specs = []
    for s in header["specs"]:
        if s["kind"] in ("rbf", "polynomial", "cosine"):
            specs.append(KernelSpec(s["kind"], s["rbf_t"], s["poly_a"], s["poly_b"]))
        else:
            specs.append(s["kind"])
    return KernelBank(grams, tuple(specs))
