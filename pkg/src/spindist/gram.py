"""The observability Gram matrix W accumulated over control pulses.

For a basis {phi_j} and a control u, define the 2-vectors

    gamma_j(u) = sum_l phi_j(l) * Y(u, alpha_l)

from the transverse readings Y. The one-control summand has entries
W_lj(u) = <gamma_l(u), gamma_j(u)>, so it is symmetric, positive
semi-definite and of rank at most 2 (two measured components per pulse).
The accumulated W over a control set decides identifiability: the
reconstruction problem has a unique solution iff W is positive definite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bloch import AlphaGrid, ControlPulse, propagate_grid
from .distributions import BasisSet

__all__ = [
    "GramMatrix",
    "SPECTRAL_FLOOR",
    "gamma_vectors",
    "w_single",
    "w_accumulate",
    "spectrum",
    "condition_number",
    "numerical_rank",
    "quadratic_form",
    "upper_left_block",
    "column_slice",
]

# Eigenvalues below SPECTRAL_FLOOR * lambda_max count as zero (double-precision
# noise floor) for rank and condition-number purposes.
SPECTRAL_FLOOR = 1e-14


@dataclass
class GramMatrix:
    """Symmetric PSD matrix W plus the number of controls it accumulates."""

    w: np.ndarray
    n_controls: int = 1

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)

    @property
    def size(self) -> int:
        return self.w.shape[0]


def _as_array(W) -> np.ndarray:
    return W.w if isinstance(W, GramMatrix) else np.asarray(W, dtype=float)


def gamma_vectors(basis: BasisSet, readings: np.ndarray) -> np.ndarray:
    """gamma_j = sum_l phi_j(l) * reading_l for every basis function, shape (n, 2)."""
    readings = np.asarray(readings, dtype=float)
    if readings.shape != (basis.grid_size, 2):
        raise ValueError(
            f"expected readings of shape ({basis.grid_size}, 2), got {readings.shape}")
    return basis.functions @ readings


def w_single(basis: BasisSet, pulse: ControlPulse, grid: AlphaGrid) -> GramMatrix:
    """One-control summand W(u) = Gamma @ Gamma.T with Gamma the (n, 2) gamma stack."""
    g = gamma_vectors(basis, propagate_grid(pulse, grid))
    w = g @ g.T
    return GramMatrix(w=0.5 * (w + w.T), n_controls=1)


def w_accumulate(terms) -> GramMatrix:
    """Entrywise sum of per-control summands; control counts add."""
    terms = list(terms)
    if not terms:
        raise ValueError("need at least one Gram matrix to accumulate")
    size = terms[0].size
    if any(t.size != size for t in terms):
        raise ValueError("Gram matrices to accumulate must share dimensions")
    return GramMatrix(w=sum(t.w for t in terms),
                      n_controls=sum(t.n_controls for t in terms))


def spectrum(W, return_vectors: bool = False):
    """Eigenvalues in descending order (optionally with matching eigenvectors)."""
    w = _as_array(W)
    if return_vectors:
        vals, vecs = np.linalg.eigh(w)
        return vals[::-1], vecs[:, ::-1]
    return np.linalg.eigvalsh(w)[::-1]


def condition_number(W) -> float:
    """lambda_max / lambda_min; +inf when lambda_min is at or below the noise floor."""
    vals = spectrum(W)
    lam_max, lam_min = vals[0], vals[-1]
    if lam_min <= SPECTRAL_FLOOR * lam_max or lam_max <= 0.0:
        return np.inf
    return lam_max / lam_min


def numerical_rank(W, floor: float = SPECTRAL_FLOOR) -> int:
    """Number of eigenvalues above floor * lambda_max."""
    vals = spectrum(W)
    lam_max = vals[0]
    if lam_max <= 0.0:
        return 0
    return int(np.sum(vals > floor * lam_max))


def quadratic_form(W, v: np.ndarray) -> float:
    """<v | W | v>."""
    w = _as_array(W)
    v = np.asarray(v, dtype=float)
    return float(v @ w @ v)


def upper_left_block(W, k: int) -> GramMatrix:
    """The k x k upper-left block, as a Gram matrix over the leading functions."""
    w = _as_array(W)
    if not 1 <= k <= w.shape[0]:
        raise ValueError(f"block size {k} out of range for a {w.shape[0]}-matrix")
    n = W.n_controls if isinstance(W, GramMatrix) else 1
    return GramMatrix(w=w[:k, :k].copy(), n_controls=n)


def column_slice(W, k: int) -> np.ndarray:
    """First k entries of column k+1 (the cross terms against function k+1)."""
    w = _as_array(W)
    if not 1 <= k <= w.shape[0] - 1:
        raise ValueError(f"column slice k={k} out of range for a {w.shape[0]}-matrix")
    return w[:k, k].copy()
