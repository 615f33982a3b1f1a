"""Greedy design of discriminating control pulses (GRA and GRAt).

The loop grows a control set one pulse at a time. With W^k the Gram
matrix accumulated over the pulses chosen so far, a fitting step finds
the coefficients beta that best represent the (k+1)-th basis function
by the first k ones (a kernel direction of the leading (k+1) x (k+1)
block when that block is singular), and a discriminatory step picks the
next pulse maximizing the one-control quadratic form along
v = (beta, -1), i.e. the discrepancy ||sum_j beta_j gamma_j(u) -
gamma_{k+1}(u)||^2. Pulse durations are fixed for GRA and optimized
jointly with the amplitudes for GRAt.

Every inner maximization reduces to max_u ||psi . Y(u)||^2 for a fixed
weight vector psi over the alpha grid, where Y(u) stacks the transverse
readings; `gamma_objective` builds that map and `maximize_over_controls`
solves it by multistart projected quasi-Newton ascent.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from .bloch import AlphaGrid, ControlPulse, _ANGLE_FLOOR, propagate_grid
from .distributions import BasisSet
from .gram import GramMatrix, SPECTRAL_FLOOR, w_accumulate, w_single

__all__ = [
    "GreedyConfig",
    "GreedyIteration",
    "ControlSet",
    "DegenerateBlockError",
    "gamma_objective",
    "maximize_gamma_objective",
    "maximize_over_controls",
    "h_k",
    "fitting_step",
    "discriminatory_step",
    "run_gra",
    "run_grat",
]


class DegenerateBlockError(RuntimeError):
    """The leading Gram block is identically zero; a prior pulse search failed."""


@dataclass(frozen=True)
class GreedyConfig:
    """Parameters of the greedy loop and of its inner pulse maximizer.

    Amplitudes live in the box [-u_m, u_m]^2. Durations are fixed at t_f
    unless optimize_time is set, in which case they are optimized over
    [0, t_f_max] (t_f_max defaults to t_f). Start points for the inner
    maximizer: an n_amp_grid x n_amp_grid amplitude grid (crossed with
    n_time_grid duration slices when optimize_time), each point jittered
    uniformly within its cell, plus n_extra_starts uniform draws.
    """

    u_m: float
    t_f: float
    t_f_max: float | None = None
    optimize_time: bool = False
    n_amp_grid: int = 8
    n_time_grid: int = 5
    n_extra_starts: int = 0
    maxiter: int = 100
    ftol: float = 1e-11
    gtol: float = 1e-9
    fd_step: float = 1e-6
    seed: int = 0
    n_workers: int = 1

    def __post_init__(self):
        if self.u_m <= 0:
            raise ValueError(f"amplitude bound must be positive, got {self.u_m}")
        if self.t_f <= 0:
            raise ValueError(f"duration must be positive, got {self.t_f}")
        if self.t_f_max is not None and self.t_f_max <= 0:
            raise ValueError(f"duration bound must be positive, got {self.t_f_max}")
        if self.n_amp_grid < 1 or self.n_time_grid < 1 or self.n_extra_starts < 0:
            raise ValueError("start counts must give at least one start")
        if self.n_workers < 1:
            raise ValueError(f"n_workers must be at least 1, got {self.n_workers}")

    @property
    def time_bound(self) -> float:
        return self.t_f if self.t_f_max is None else self.t_f_max

    @property
    def n_starts(self) -> int:
        base = self.n_amp_grid ** 2
        if self.optimize_time:
            base *= self.n_time_grid
        return base + self.n_extra_starts


@dataclass(frozen=True)
class GreedyIteration:
    """One outer iteration: fitted coefficients and the achieved maximum."""

    k: int
    beta: np.ndarray
    objective: float


@dataclass(frozen=True)
class ControlSet:
    """Ordered pulses produced by one design method."""

    pulses: tuple
    method: str = ""
    iterations: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))
        object.__setattr__(self, "iterations", tuple(self.iterations))

    def __len__(self) -> int:
        return len(self.pulses)

    def __iter__(self):
        return iter(self.pulses)


def gamma_objective(psi: np.ndarray, grid: AlphaGrid):
    """Map pulse -> ||sum_l psi_l Y(pulse, alpha_l)||^2.

    Args:
        psi: weight vector over the alpha grid (length grid.size).
        grid: alpha discretization with its detuning.

    Returns:
        Callable ControlPulse -> float. Covers every pulse search in the
        design loops: psi = phi_1 for the initialization, psi =
        sum_j beta_j phi_j - phi_{k+1} for the discriminatory step.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (grid.size,):
        raise ValueError(f"expected psi of shape ({grid.size},), got {psi.shape}")

    def objective(pulse: ControlPulse) -> float:
        return float(np.sum((psi @ propagate_grid(pulse, grid)) ** 2))

    scale = 1.0 + grid.alphas
    delta = grid.delta

    def evaluate_many(U: np.ndarray, T: np.ndarray) -> np.ndarray:
        """Objective at a stack of amplitude rows U (B, 2) with durations T (B,).

        Same specialized axis-angle formula as propagate_grid, broadcast
        over the stack; finite-difference gradients evaluate their probe
        points in one call here instead of one propagation each.
        """
        wx = U[:, 0, None] * scale
        wy = U[:, 1, None] * scale
        speed = np.sqrt(wx * wx + wy * wy + delta * delta)
        theta = speed * T[:, None]
        safe = np.where(speed > 0.0, speed, 1.0)
        ct = np.cos(theta)
        st_over = np.sin(theta) / safe
        vers_z = (1.0 - ct) * delta / (safe * safe)
        live = theta >= _ANGLE_FLOOR
        x = ((st_over * wy + wx * vers_z) * live) @ psi
        y = ((wy * vers_z - st_over * wx) * live) @ psi
        return x * x + y * y

    objective.evaluate_many = evaluate_many
    return objective


def _pulse_from(x: np.ndarray, config: GreedyConfig) -> ControlPulse:
    if config.optimize_time:
        # finite-difference probes may overshoot the lower time bound
        t = min(max(float(x[2]), 0.0), config.time_bound)
        return ControlPulse(u_x=float(x[0]), u_y=float(x[1]), t_f=t)
    return ControlPulse(u_x=float(x[0]), u_y=float(x[1]), t_f=config.t_f)


def _start_points(config: GreedyConfig, rng: np.random.Generator) -> np.ndarray:
    """Jittered cell-center grid over the search box, plus uniform extras."""
    n = config.n_amp_grid
    step = 2.0 * config.u_m / n
    centers = -config.u_m + step * (np.arange(n) + 0.5)
    if config.optimize_time:
        tb = config.time_bound
        tstep = tb / config.n_time_grid
        tcent = tstep * (np.arange(config.n_time_grid) + 0.5)
        gx, gy, gt = np.meshgrid(centers, centers, tcent, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel(), gt.ravel()])
        widths = np.array([step, step, tstep])
        lo = np.array([-config.u_m, -config.u_m, 0.0])
        hi = np.array([config.u_m, config.u_m, tb])
    else:
        gx, gy = np.meshgrid(centers, centers, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        widths = np.array([step, step])
        lo = np.array([-config.u_m, -config.u_m])
        hi = np.array([config.u_m, config.u_m])
    pts = pts + rng.uniform(-0.5, 0.5, size=pts.shape) * widths
    if config.n_extra_starts > 0:
        extra = rng.uniform(lo, hi, size=(config.n_extra_starts, pts.shape[1]))
        pts = np.vstack([pts, extra])
    return np.clip(pts, lo, hi)


def maximize_over_controls(objective, config: GreedyConfig, seed=None):
    """Best local maximizer of a pulse objective over the admissible box.

    The objective oscillates heavily at large u_m * t_f (rotation angles
    of order 1e2 rad), so a single ascent is unreliable: each seeded
    start is polished by bound-constrained quasi-Newton ascent (L-BFGS-B
    on the negated objective, central-difference gradients with relative
    step fd_step) and the best polished point wins. Ties keep the first
    find in start order, so results are deterministic per seed.

    Args:
        objective: map ControlPulse -> finite scalar.
        config: search box, start layout and optimizer tolerances.
        seed: overrides config.seed for the start jitter.

    Returns:
        (pulse, value) with value >= objective at every start point.
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    starts = _start_points(config, rng)
    bounds = [(-config.u_m, config.u_m)] * 2
    if config.optimize_time:
        bounds.append((0.0, config.time_bound))

    batch = getattr(objective, "evaluate_many", None)
    if batch is None:

        def neg(x):
            return -objective(_pulse_from(x, config))

        run = dict(fun=neg, jac="3-point",
                   options={"maxiter": config.maxiter, "ftol": config.ftol,
                            "gtol": config.gtol,
                            "finite_diff_rel_step": config.fd_step})
    else:
        n_dim = 3 if config.optimize_time else 2
        probes = np.zeros((2 * n_dim + 1, n_dim))

        def neg_with_grad(x):
            # central differences, h = fd_step relative; all probe points
            # go through one vectorized evaluation
            h = config.fd_step * np.maximum(1.0, np.abs(x))
            probes[:] = x
            for i in range(n_dim):
                probes[1 + 2 * i, i] += h[i]
                probes[2 + 2 * i, i] -= h[i]
            if config.optimize_time:
                U = probes[:, :2]
                T = np.clip(probes[:, 2], 0.0, config.time_bound)
            else:
                U = probes
                T = np.full(probes.shape[0], config.t_f)
            vals = batch(U, T)
            grad = (vals[1::2] - vals[2::2]) / (2.0 * h)
            return -vals[0], -grad

        run = dict(fun=neg_with_grad, jac=True,
                   options={"maxiter": config.maxiter, "ftol": config.ftol,
                            "gtol": config.gtol})

    best_x = starts[0]
    best_val = -np.inf
    for x0 in starts:
        res = minimize(x0=x0, method="L-BFGS-B", bounds=bounds, **run)
        for cand in (res.x, x0):
            val = objective(_pulse_from(cand, config))
            if val > best_val:
                best_val = val
                best_x = cand
    return _pulse_from(best_x, config), float(best_val)


def maximize_gamma_objective(psi, grid, config, seed=None):
    """maximize_over_controls applied to the weight-vector objective psi."""
    return maximize_over_controls(gamma_objective(psi, grid), config, seed=seed)


def h_k(basis: BasisSet, beta, pulse: ControlPulse, grid: AlphaGrid) -> np.ndarray:
    """sum_{j<=k} beta_j gamma_j(pulse) over the first k = len(beta) basis functions."""
    beta = np.asarray(beta, dtype=float)
    if beta.ndim != 1 or beta.size > basis.size:
        raise ValueError(
            f"coefficient vector of length {beta.size} does not fit a "
            f"{basis.size}-function basis")
    if beta.size == 0:
        return np.zeros(2)
    psi = beta @ basis.functions[:beta.size]
    return psi @ propagate_grid(pulse, grid)


def fitting_step(k: int, W) -> np.ndarray:
    """Coefficients beta solving W[:k, :k] beta = W[:k, k].

    Minimizes <beta|W[:k,:k]|beta> - 2 <W[:k,k]|beta>, the squared
    representation error of function k+1 by the first k ones under the
    accumulated Gram matrix. Singular blocks (within the spectral floor)
    fall back to the minimum-norm least-squares solution; k = 1 gives
    beta_1 = W_12 / W_11.

    Raises:
        DegenerateBlockError: the leading block is identically zero.
    """
    w = W.w if isinstance(W, GramMatrix) else np.asarray(W, dtype=float)
    if w.shape[0] < k + 1:
        raise ValueError(f"need a matrix of size at least {k + 1}, got {w.shape[0]}")
    block = w[:k, :k]
    if np.max(np.abs(block)) == 0.0:
        raise DegenerateBlockError(
            f"leading {k}x{k} Gram block is zero; no pulse excites the "
            "current basis functions")
    beta, *_ = np.linalg.lstsq(block, w[:k, k], rcond=SPECTRAL_FLOOR)
    return beta


def discriminatory_step(k: int, beta_k, basis: BasisSet, grid: AlphaGrid,
                        config: GreedyConfig, seed=None):
    """Pulse maximizing the quadratic form of W(u) along v = (beta_k, -1).

    The form equals ||sum_{j<=k} beta_j gamma_j(u) - gamma_{k+1}(u)||^2,
    so the search reduces to the weight vector psi = beta_k . Phi_{1:k}
    - phi_{k+1}. Returns (pulse, achieved value); a positive value means
    the new pulse repairs the rank deficiency located by the fit.
    """
    beta_k = np.asarray(beta_k, dtype=float)
    if beta_k.shape != (k,):
        raise ValueError(f"expected beta of shape ({k},), got {beta_k.shape}")
    if basis.size < k + 1:
        raise ValueError(f"basis has {basis.size} functions, need at least {k + 1}")
    psi = beta_k @ basis.functions[:k] - basis.functions[k]
    if seed is None:
        seed = config.seed + k
    return maximize_over_controls(gamma_objective(psi, grid), config, seed=seed)


def _run_greedy(basis: BasisSet, grid: AlphaGrid, config: GreedyConfig,
                method: str) -> ControlSet:
    if basis.grid_size != grid.size:
        raise ValueError(
            f"basis functions of length {basis.grid_size} do not match a "
            f"{grid.size}-point grid")
    K = basis.size
    pulses = []
    iterations = []

    pulse, value = maximize_gamma_objective(basis.functions[0], grid, config,
                                            seed=config.seed)
    pulses.append(pulse)
    iterations.append(GreedyIteration(k=0, beta=np.zeros(0), objective=value))
    W = w_single(basis, pulse, grid)

    for k in range(1, K):
        beta = fitting_step(k, W)
        pulse, value = discriminatory_step(k, beta, basis, grid, config,
                                           seed=config.seed + k)
        pulses.append(pulse)
        iterations.append(GreedyIteration(k=k, beta=beta, objective=value))
        W = w_accumulate([W, w_single(basis, pulse, grid)])
    return ControlSet(pulses=tuple(pulses), method=method,
                      iterations=tuple(iterations))


def run_gra(basis: BasisSet, grid: AlphaGrid, config: GreedyConfig) -> ControlSet:
    """Design one pulse per basis function at the fixed duration config.t_f.

    Initialization maximizes W_11(u); each of the K-1 following
    iterations runs a fitting step on the accumulated Gram matrix and a
    discriminatory step for the next pulse. The returned set carries the
    per-iteration coefficients and achieved objectives.
    """
    if config.optimize_time:
        config = replace(config, optimize_time=False)
    return _run_greedy(basis, grid, config, method="gra")


def run_grat(basis: BasisSet, grid: AlphaGrid, config: GreedyConfig) -> ControlSet:
    """Same loop with per-pulse durations optimized over [0, t_f_max].

    Duration optimization is governed by config.optimize_time; with the
    flag off this reproduces run_gra exactly (apart from the method tag).
    """
    return _run_greedy(basis, grid, config, method="grat")
