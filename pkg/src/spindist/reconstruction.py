"""Identification of the alpha distribution from transverse readings.

The measured reading of pulse u is a convex mixture sum_l P(l) Y(u,
alpha_l); stacking both components of every designed pulse gives a
linear model A p = b over the probability simplex, and identification
is the constrained least-squares problem min_p ||A p - b||^2. The
solver is an accelerated projected-gradient descent (monotone, with
momentum restarts) whose iterates stay exactly on the simplex; the
multistart protocol repeats it from random initializers in a hypercube
around a reference distribution and keeps the run with the smallest
relative error against that reference.

The quadratic form of the problem is A^T A, which equals the Gram
matrix W in the canonical basis: a positive definite W makes the
minimizer unique (all starts agree), while a rank-deficient W leaves
kernel directions along which distinct minimizers share one objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bloch import AlphaGrid, propagate_grid
from .distributions import simplex_project

__all__ = [
    "IdentificationProblem",
    "ReconstructionResult",
    "build_problem",
    "solve_identification",
    "multistart_identify",
    "relative_error",
]

MAX_ITERATIONS = 50_000
REL_DECREASE_TOL = 1e-12

# Consecutive stalled iterations (relative decrease below tolerance)
# after which a run counts as converged even while momentum is active.
_STALL_PATIENCE = 50


@dataclass
class IdentificationProblem:
    """Stacked linear model: row 2m / 2m+1 hold the x / y responses of pulse m."""

    design_rows: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.design_rows = np.asarray(self.design_rows, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if self.design_rows.ndim != 2 or self.design_rows.shape[0] % 2 != 0:
            raise ValueError("design matrix must have two rows per control")
        if self.targets.shape != (self.design_rows.shape[0],):
            raise ValueError(
                f"targets of shape {self.targets.shape} do not match "
                f"{self.design_rows.shape[0]} design rows")

    @property
    def size(self) -> int:
        return self.design_rows.shape[1]

    @property
    def n_controls(self) -> int:
        return self.design_rows.shape[0] // 2

    def objective(self, p: np.ndarray) -> float:
        """||A p - b||^2 at a single point."""
        r = self.design_rows @ np.asarray(p, dtype=float) - self.targets
        return float(r @ r)


@dataclass
class ReconstructionResult:
    p_f: np.ndarray
    objective: float
    n_iterations: int
    converged: bool


def build_problem(controls, grid: AlphaGrid, measurements) -> IdentificationProblem:
    """Assemble the stacked model from designed pulses and their readings.

    Args:
        controls: ControlSet or iterable of pulses.
        grid: alpha discretization shared by model and measurements.
        measurements: (M, 2) reading array (a MeasurementSet works too).
    """
    pulses = tuple(getattr(controls, "pulses", controls))
    readings = getattr(measurements, "readings", measurements)
    readings = np.asarray(readings, dtype=float)
    if readings.shape != (len(pulses), 2):
        raise ValueError(
            f"expected {len(pulses)} readings of shape ({len(pulses)}, 2), "
            f"got {readings.shape}")
    rows = np.concatenate([propagate_grid(p, grid).T for p in pulses], axis=0)
    return IdentificationProblem(design_rows=rows, targets=readings.ravel())


def _batched_solve(problem: IdentificationProblem, inits: np.ndarray,
                   max_iter: int, rel_tol: float):
    """Monotone accelerated projected gradient, one column per initializer.

    Momentum restarts whenever the extrapolated step fails to decrease
    the objective; a run stops once an unaccelerated step (or a long
    stall) leaves a relative decrease below rel_tol. Every iterate is a
    simplex projection, so feasibility is exact throughout.

    Returns:
        (P, f, iters, converged) with one row/entry per initializer.
    """
    A, b = problem.design_rows, problem.targets
    G = A.T @ A
    c = A.T @ b
    const = float(b @ b)
    B, K = inits.shape

    def objective(X):
        return np.einsum("bk,bk->b", X @ G, X) - 2.0 * (X @ c) + const

    X = simplex_project(np.asarray(inits, dtype=float))
    lam_max = float(np.linalg.eigvalsh(G)[-1])
    f = objective(X)
    iters = np.zeros(B, dtype=int)
    if lam_max <= 0.0:
        # zero model: objective is constant, any feasible point is optimal
        return X, f, iters, np.ones(B, dtype=bool)
    step = 1.0 / (2.0 * lam_max)

    Y = X.copy()
    X_prev = X.copy()
    t = np.ones(B)
    converged = np.zeros(B, dtype=bool)
    stall = np.zeros(B, dtype=int)

    for it in range(1, max_iter + 1):
        live = ~converged
        if not np.any(live):
            break
        plain = t <= 1.0
        grad = 2.0 * (Y @ G - c)
        Z = simplex_project(Y - step * grad)
        f_z = objective(Z)

        accept = live & (f_z <= f)
        reject = live & ~accept
        rel_dec = np.zeros(B)
        pos = f > 0
        rel_dec[pos] = (f[pos] - f_z[pos]) / f[pos]
        rel_dec[~pos] = 0.0

        stalled = live & (rel_dec < rel_tol) & (rel_dec >= 0.0)
        stall = np.where(stalled, stall + 1, 0)
        done_now = live & stalled & (plain | (stall >= _STALL_PATIENCE))

        # accepted columns advance with momentum; rejected ones restart at X
        t_acc = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_acc
        Y_acc = Z + mom[:, None] * (Z - X_prev)

        X_prev = np.where(accept[:, None], X, X_prev)
        X = np.where(accept[:, None], Z, X)
        f = np.where(accept, f_z, f)
        Y = np.where(accept[:, None], Y_acc, X)
        t = np.where(accept, t_acc, 1.0)

        iters[live & ~converged] = it
        converged = converged | done_now

    # the expanded quadratic can cancel to tiny negatives; report the
    # exact residual instead
    resid = X @ A.T - b
    f = np.einsum("bk,bk->b", resid, resid)
    return X, f, iters, converged


def solve_identification(problem: IdentificationProblem, init,
                         max_iter: int = MAX_ITERATIONS,
                         rel_tol: float = REL_DECREASE_TOL) -> ReconstructionResult:
    """Minimize ||A p - b||^2 over the simplex from one initializer.

    Infeasible initializers are projected first. Stops when the relative
    objective decrease falls below rel_tol (tested on unaccelerated
    steps, so momentum overshoot cannot end a run early) or at the
    iteration cap, flagged by `converged`.
    """
    init = np.asarray(init, dtype=float)
    if init.shape != (problem.size,):
        raise ValueError(f"expected init of shape ({problem.size},), got {init.shape}")
    P, f, iters, conv = _batched_solve(problem, init[None, :], max_iter, rel_tol)
    return ReconstructionResult(p_f=P[0], objective=float(f[0]),
                                n_iterations=int(iters[0]), converged=bool(conv[0]))


def relative_error(p_star, p_f) -> float:
    """||p_star - p_f|| / ||p_star||."""
    p_star = np.asarray(p_star, dtype=float)
    p_f = np.asarray(p_f, dtype=float)
    ref = np.linalg.norm(p_star)
    if ref == 0.0:
        raise ValueError("reference distribution has zero norm")
    return float(np.linalg.norm(p_star - p_f) / ref)


def multistart_identify(problem: IdentificationProblem, p_star_ref,
                        n_starts: int = 100, radius_factor: float = 100.0,
                        seed=0, max_iter: int = MAX_ITERATIONS,
                        rel_tol: float = REL_DECREASE_TOL,
                        select_by: str = "error", full_output: bool = False):
    """Repeat the solve from initializers around a reference distribution.

    Initializers are drawn uniformly in the hypercube centered at
    p_star_ref with half-width radius_factor * ||p_star_ref|| and
    projected to the simplex. The returned run minimizes the relative
    error against p_star_ref (select_by="objective" switches to the
    residual, for use when no ground truth exists).

    Returns:
        (best ReconstructionResult, min relative error); with
        full_output also a dict holding every run's distribution,
        objective, error and iteration count.
    """
    p_star_ref = np.asarray(p_star_ref, dtype=float)
    if p_star_ref.shape != (problem.size,):
        raise ValueError(
            f"expected reference of shape ({problem.size},), got {p_star_ref.shape}")
    if n_starts < 1:
        raise ValueError(f"n_starts must be at least 1, got {n_starts}")
    if radius_factor < 0:
        raise ValueError(f"radius_factor must be nonnegative, got {radius_factor}")
    if select_by not in ("error", "objective"):
        raise ValueError(f"unknown selection rule {select_by!r}")
    ref_norm = np.linalg.norm(p_star_ref)
    if ref_norm == 0.0:
        raise ValueError("reference distribution has zero norm")

    rng = np.random.default_rng(seed)
    half_width = radius_factor * ref_norm
    inits = p_star_ref + rng.uniform(-half_width, half_width,
                                     size=(n_starts, problem.size))
    P, f, iters, conv = _batched_solve(problem, inits, max_iter, rel_tol)
    errors = np.linalg.norm(P - p_star_ref, axis=1) / ref_norm
    best = int(np.argmin(errors if select_by == "error" else f))
    result = ReconstructionResult(p_f=P[best], objective=float(f[best]),
                                  n_iterations=int(iters[best]),
                                  converged=bool(conv[best]))
    if full_output:
        runs = {"p_f": P, "objective": f, "error": errors,
                "n_iterations": iters, "converged": conv}
        return result, float(errors[best]), runs
    return result, float(errors[best])
