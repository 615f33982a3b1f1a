"""Probability distributions on the alpha grid and bases for their expansion.

Distributions are plain length-K numpy vectors on the probability simplex
(nonnegative, summing to one). Bases are stacked as (n, K) arrays whose
rows are the functions phi_j evaluated on the grid indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bloch import AlphaGrid

__all__ = [
    "BasisSet",
    "alpha_grid",
    "random_orthonormal_basis",
    "random_probability_distributions",
    "simplex_project",
    "expand",
    "is_distribution",
    "double_peak_distribution",
    "step_distribution",
    "named_target",
]

SIMPLEX_TOL = 1e-12

# Benchmark double peak: equal-weight Gaussian bumps at +/-PEAK_CENTER.
PEAK_CENTER = 0.1
PEAK_WIDTH = 0.03


@dataclass
class BasisSet:
    """A stack of basis functions on {1..K} with optional selection state.

    ``functions[j]`` is phi_j evaluated on the grid. ``active_set`` and
    ``candidate_set`` track indices during greedy selection; both are empty
    for a plain basis.
    """

    functions: np.ndarray
    active_set: list[int] = field(default_factory=list)
    candidate_set: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.functions = np.atleast_2d(np.asarray(self.functions, dtype=float))

    @property
    def size(self) -> int:
        return self.functions.shape[0]

    @property
    def grid_size(self) -> int:
        return self.functions.shape[1]


def alpha_grid(K: int, a_min: float, a_max: float, delta: float) -> AlphaGrid:
    """Regular grid alpha_l = a_min + (a_max - a_min) (l-1)/(K-1), l = 1..K."""
    if K < 2:
        raise ValueError(f"need at least two grid points, got K={K}")
    if not a_min < a_max:
        raise ValueError(f"need a_min < a_max, got [{a_min}, {a_max}]")
    return AlphaGrid(alphas=np.linspace(a_min, a_max, K), delta=delta)


def random_orthonormal_basis(K: int, seed: int) -> BasisSet:
    """Random orthonormal basis of R^K from QR of a seeded Gaussian matrix."""
    if K < 1:
        raise ValueError(f"need K >= 1, got {K}")
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((K, K)))
    # Fix the sign ambiguity of QR so the basis is a pure function of the seed.
    q = q * np.sign(np.diag(r))
    return BasisSet(functions=q.T)


def random_probability_distributions(K: int, n: int, seed: int) -> np.ndarray:
    """n random distributions on the K-simplex, one per row.

    Sampled by normalizing vectors of independent uniform(0, 1) draws, so
    every entry is strictly positive.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    raw = rng.uniform(size=(n, K))
    return raw / raw.sum(axis=1, keepdims=True)


def simplex_project(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based, exact).

    Supports a batch of rows: a (B, K) input is projected row by row.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        return simplex_project(v[None, :])[0]
    K = v.shape[-1]
    u = np.sort(v, axis=-1)[..., ::-1]
    cssv = np.cumsum(u, axis=-1)
    j = np.arange(1, K + 1)
    positive = u + (1.0 - cssv) / j > 0
    # rho = largest index with the condition still positive
    rho = K - 1 - np.argmax(positive[..., ::-1], axis=-1)
    lam = (1.0 - np.take_along_axis(cssv, rho[..., None], axis=-1)) / (rho + 1.0)[..., None]
    return np.maximum(v + lam, 0.0)


def expand(basis: BasisSet, beta: np.ndarray) -> np.ndarray:
    """Pointwise linear combination sum_j beta_j phi_j over the leading functions."""
    beta = np.asarray(beta, dtype=float)
    if beta.ndim != 1 or beta.size > basis.size:
        raise ValueError(
            f"coefficient vector of length {beta.size} does not fit basis of size {basis.size}")
    return beta @ basis.functions[: beta.size]


def is_distribution(p: np.ndarray, tol: float = SIMPLEX_TOL) -> bool:
    p = np.asarray(p, dtype=float)
    return bool(np.all(p >= -tol) and abs(p.sum() - 1.0) <= tol)


def double_peak_distribution(grid: AlphaGrid) -> np.ndarray:
    """Symmetric two-bump target: Gaussians at +/-0.1, width 0.03, grid-normalized."""
    a = grid.alphas
    bumps = (np.exp(-0.5 * ((a - PEAK_CENTER) / PEAK_WIDTH) ** 2)
             + np.exp(-0.5 * ((a + PEAK_CENTER) / PEAK_WIDTH) ** 2))
    return bumps / bumps.sum()


def step_distribution(grid: AlphaGrid) -> np.ndarray:
    """Uniform weight on the subgroups with alpha_l > 0, zero elsewhere."""
    mask = grid.alphas > 0
    if not mask.any():
        raise ValueError("step target needs at least one positive alpha")
    return mask / mask.sum()


def named_target(name: str, grid: AlphaGrid) -> np.ndarray:
    """Benchmark target distributions by name."""
    key = name.replace("_", "-").lower()
    if key in ("double-peak", "doublepeak"):
        return double_peak_distribution(grid)
    if key == "step":
        return step_distribution(grid)
    raise ValueError(f"unknown target distribution {name!r}")
