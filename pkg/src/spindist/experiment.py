"""Synthetic measurements, random baselines, and benchmark orchestration.

The pipeline mirrors a two-stage identification experiment: an offline
stage designs control pulses (greedy methods or random baselines), an
online stage measures the ensemble response per pulse, and a final
solve recovers the alpha distribution. Here the online stage is
synthetic: the reading of pulse u is the exact mixture
sum_l P*(l) Y(u, alpha_l), noiseless by default since identification
quality is compared on exact averages (the ensemble's spin count plays
no role beyond metadata). Every random stage draws from its own seed,
derived from one master seed by fixed offsets, so methods can be
compared and rerun in isolation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .bloch import AlphaGrid, ControlPulse, propagate_grid
from .distributions import (BasisSet, alpha_grid, is_distribution, named_target,
                            random_orthonormal_basis,
                            random_probability_distributions)
from .gram import GramMatrix, condition_number, spectrum, w_accumulate, w_single
from .greedy import ControlSet, GreedyConfig, run_gra, run_grat
from .ogra import OgraConfig, OgraResult, run_ogra, run_ograt
from .reconstruction import build_problem, multistart_identify

__all__ = [
    "METHODS",
    "MeasurementSet",
    "BenchmarkScenario",
    "MethodReport",
    "BenchmarkReport",
    "derive_seeds",
    "synthesize_measurements",
    "add_measurement_noise",
    "rcc_controls",
    "rcct_controls",
    "canonical_gram",
    "design_controls",
    "benchmark_method",
    "run_benchmark",
    "rcc_error_draws",
]

METHODS = ("gra", "grat", "ogra", "ograt", "rcc", "rcct")

_DESIGN_OFFSETS = {"gra": 1, "grat": 2, "ogra": 3, "ograt": 4, "rcc": 5, "rcct": 6}
_BASIS_OFFSET = 10
_CANDIDATES_OFFSET = 11
_RECON_OFFSET = 100
# repeated random-control draws step their seeds by this stride
RCC_DRAW_STRIDE = 1000


def derive_seeds(master_seed: int) -> dict:
    """One independent seed per random stage, at fixed offsets from the master.

    Streams: "basis" (orthonormal design basis), "candidates" (extra
    candidate distributions), one per design method, and "recon_<m>"
    per-method reconstruction initializers.
    """
    seeds = {m: master_seed + off for m, off in _DESIGN_OFFSETS.items()}
    seeds["basis"] = master_seed + _BASIS_OFFSET
    seeds["candidates"] = master_seed + _CANDIDATES_OFFSET
    for i, m in enumerate(METHODS):
        seeds["recon_" + m] = master_seed + _RECON_OFFSET + i
    return seeds


@dataclass(frozen=True)
class MeasurementSet:
    """One transverse reading per control of the referenced set."""

    readings: np.ndarray
    controls_ref: ControlSet

    def __post_init__(self):
        readings = np.asarray(self.readings, dtype=float)
        if readings.shape != (len(self.controls_ref), 2):
            raise ValueError(
                f"expected {len(self.controls_ref)} readings of shape "
                f"({len(self.controls_ref)}, 2), got {readings.shape}")
        object.__setattr__(self, "readings", readings)

    def __len__(self) -> int:
        return self.readings.shape[0]


def synthesize_measurements(controls, p_star, grid: AlphaGrid) -> MeasurementSet:
    """Exact ensemble readings sum_l P*(l) Y(u_k, alpha_l), one per pulse.

    p_star must be a probability vector on the grid; readings are convex
    combinations of unit vectors, so each has norm at most 1.
    """
    controls = controls if isinstance(controls, ControlSet) else ControlSet(tuple(controls))
    p_star = np.asarray(p_star, dtype=float)
    if p_star.shape != (grid.size,):
        raise ValueError(f"expected weights of shape ({grid.size},), got {p_star.shape}")
    if not is_distribution(p_star, tol=1e-9):
        raise ValueError("p_star is not a probability distribution on the grid")
    readings = np.array([p_star @ propagate_grid(p, grid) for p in controls.pulses])
    norms = np.linalg.norm(readings, axis=1)
    if np.any(norms > 1.0 + 1e-12):
        raise AssertionError("reading norm exceeds 1; propagation is broken")
    return MeasurementSet(readings=readings, controls_ref=controls)


def add_measurement_noise(ms: MeasurementSet, sigma: float, seed=0) -> MeasurementSet:
    """Independent zero-mean Gaussian perturbation of every coordinate."""
    if sigma < 0:
        raise ValueError(f"noise level must be nonnegative, got {sigma}")
    if sigma == 0.0:
        return MeasurementSet(readings=ms.readings.copy(),
                              controls_ref=ms.controls_ref)
    rng = np.random.default_rng(seed)
    noisy = ms.readings + rng.normal(0.0, sigma, size=ms.readings.shape)
    return MeasurementSet(readings=noisy, controls_ref=ms.controls_ref)


def rcc_controls(count: int, config: GreedyConfig, seed=0) -> ControlSet:
    """Random constant controls: uniform amplitudes, fixed duration config.t_f."""
    if count < 1:
        raise ValueError(f"control count must be at least 1, got {count}")
    rng = np.random.default_rng(seed)
    amps = rng.uniform(-config.u_m, config.u_m, size=(count, 2))
    pulses = tuple(ControlPulse(u_x=a[0], u_y=a[1], t_f=config.t_f) for a in amps)
    return ControlSet(pulses=pulses, method="rcc")


def rcct_controls(count: int, config: GreedyConfig, seed=0) -> ControlSet:
    """Random constant controls with random durations in [0, t_f_max].

    Amplitudes are drawn first, then durations, so the amplitude stream
    matches rcc_controls at the same seed.
    """
    if count < 1:
        raise ValueError(f"control count must be at least 1, got {count}")
    rng = np.random.default_rng(seed)
    amps = rng.uniform(-config.u_m, config.u_m, size=(count, 2))
    times = rng.uniform(0.0, config.time_bound, size=count)
    pulses = tuple(ControlPulse(u_x=a[0], u_y=a[1], t_f=t)
                   for a, t in zip(amps, times))
    return ControlSet(pulses=pulses, method="rcct")


def canonical_gram(controls, grid: AlphaGrid) -> GramMatrix:
    """Accumulated W in the canonical basis (one indicator per grid point).

    The spectrum of W is invariant under orthonormal changes of basis,
    so condition numbers are always reported on this matrix.
    """
    pulses = tuple(getattr(controls, "pulses", controls))
    basis = BasisSet(functions=np.eye(grid.size))
    return w_accumulate([w_single(basis, p, grid) for p in pulses])


@dataclass(frozen=True)
class BenchmarkScenario:
    """Full parameterization of one identification experiment."""

    target: str = "double-peak"
    methods: tuple = METHODS
    K: int = 30
    alpha_min: float = -0.2
    alpha_max: float = 0.2
    delta: float = np.pi / 10
    u_m: float = 10.0
    t_f: float = 16.0
    t_f_max: float = 16.0
    tol: float = 1e-14
    K_plus: int = 60
    n_starts: int | None = None
    n_multistart: int = 100
    radius_factor: float = 100.0
    master_seed: int = 42
    n_workers: int = 1
    # physical ensemble size; identification uses exact averages, so this
    # is metadata only
    spin_count: int = 100_000

    def __post_init__(self):
        if self.K_plus < self.K:
            raise ValueError(
                f"candidate count {self.K_plus} must be at least K = {self.K}")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {METHODS}")

    def grid(self) -> AlphaGrid:
        return alpha_grid(self.K, self.alpha_min, self.alpha_max, self.delta)

    def target_distribution(self, grid: AlphaGrid | None = None) -> np.ndarray:
        grid = self.grid() if grid is None else grid
        if isinstance(self.target, str):
            return named_target(self.target, grid)
        p = np.asarray(self.target, dtype=float)
        if p.shape != (grid.size,):
            raise ValueError(
                f"target weights of shape {p.shape} do not match K = {grid.size}")
        return p


def _config_for(scenario: BenchmarkScenario, seed: int, optimize_time: bool,
                ogra: bool = False):
    kwargs = dict(u_m=scenario.u_m, t_f=scenario.t_f, t_f_max=scenario.t_f_max,
                  optimize_time=optimize_time, seed=seed,
                  n_workers=scenario.n_workers)
    cfg = OgraConfig(tol=scenario.tol, **kwargs) if ogra else GreedyConfig(**kwargs)
    if scenario.n_starts is not None and scenario.n_starts > cfg.n_starts:
        cfg = replace(cfg, n_extra_starts=scenario.n_starts - cfg.n_starts)
    return cfg


def design_basis(scenario: BenchmarkScenario) -> BasisSet:
    """The seeded random orthonormal basis shared by the greedy methods."""
    return random_orthonormal_basis(scenario.K,
                                    derive_seeds(scenario.master_seed)["basis"])


def candidate_functions(scenario: BenchmarkScenario) -> np.ndarray:
    """Candidate set: the design basis extended by random distributions."""
    seeds = derive_seeds(scenario.master_seed)
    basis = random_orthonormal_basis(scenario.K, seeds["basis"])
    n_extra = scenario.K_plus - scenario.K
    if n_extra == 0:
        return basis.functions
    extra = random_probability_distributions(scenario.K, n_extra,
                                             seeds["candidates"])
    return np.vstack([basis.functions, extra])


def design_controls(method: str, scenario: BenchmarkScenario, seed=None):
    """Design one control set by the named method under the scenario seeds.

    Args:
        method: one of gra, grat, ogra, ograt, rcc, rcct.
        scenario: experiment parameters; the design seed comes from the
            master seed unless overridden.
        seed: replaces the derived design seed (used for repeated
            random-control draws).

    Returns:
        (ControlSet, OgraResult or None): the selection result is only
        present for the optimized greedy methods.
    """
    method = method.lower()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    grid = scenario.grid()
    if seed is None:
        seed = derive_seeds(scenario.master_seed)[method]
    optimize_time = method in ("grat", "ograt")

    if method in ("gra", "grat"):
        basis = design_basis(scenario)
        cfg = _config_for(scenario, seed, optimize_time)
        run = run_grat if method == "grat" else run_gra
        return run(basis, grid, cfg), None
    if method in ("ogra", "ograt"):
        phi = candidate_functions(scenario)
        cfg = _config_for(scenario, seed, optimize_time, ogra=True)
        run = run_ograt if method == "ograt" else run_ogra
        result = run(phi, grid, cfg)
        return result.controls, result
    cfg = _config_for(scenario, seed, optimize_time=False)
    maker = rcct_controls if method == "rcct" else rcc_controls
    return maker(scenario.K, cfg, seed), None


@dataclass
class MethodReport:
    """Identification outcome of one method on one scenario."""

    method: str
    n_controls: int = 0
    min_error: float = float("nan")
    objective: float = float("nan")
    condition: float = float("nan")
    spectrum: np.ndarray | None = None
    p_recovered: np.ndarray | None = None
    controls: ControlSet | None = None
    ogra: OgraResult | None = None
    design_seed: int = 0
    recon_seed: int = 0
    elapsed: float = 0.0
    failure: str = ""

    @property
    def ok(self) -> bool:
        return not self.failure

    def summary_dict(self) -> dict:
        d = {"method": self.method, "n_controls": self.n_controls,
             "min_error": self.min_error, "objective": self.objective,
             "condition": self.condition, "design_seed": self.design_seed,
             "recon_seed": self.recon_seed, "elapsed_seconds": self.elapsed}
        if self.spectrum is not None:
            d["spectrum"] = [float(v) for v in self.spectrum]
        if self.p_recovered is not None:
            d["p_recovered"] = [float(v) for v in self.p_recovered]
        if self.failure:
            d["failure"] = self.failure
        return d


@dataclass
class BenchmarkReport:
    """Per-method identification results for one scenario."""

    target: str
    alphas: np.ndarray
    p_star: np.ndarray
    methods: dict
    master_seed: int
    elapsed: float = 0.0
    spin_count: int = 100_000

    @property
    def all_failed(self) -> bool:
        return all(not r.ok for r in self.methods.values())

    def as_dict(self) -> dict:
        return {
            "target": self.target,
            "master_seed": self.master_seed,
            "spin_count": self.spin_count,
            "elapsed_seconds": self.elapsed,
            "alphas": [float(a) for a in self.alphas],
            "p_star": [float(p) for p in self.p_star],
            "methods": {m: r.summary_dict() for m, r in self.methods.items()},
        }

    def format_table(self) -> str:
        """Aligned text table: error and conditioning per method."""
        header = f"{'method':<8} {'controls':>8} {'min rel error':>14} {'cond(W)':>12}"
        lines = [f"target: {self.target}  (master seed {self.master_seed})",
                 header, "-" * len(header)]
        for m, r in self.methods.items():
            if r.ok:
                lines.append(f"{m:<8} {r.n_controls:>8d} {r.min_error:>14.4e} "
                             f"{r.condition:>12.4g}")
            else:
                lines.append(f"{m:<8} {'-':>8} {'failed':>14} {r.failure}")
        return "\n".join(lines)


def benchmark_method(method: str, scenario: BenchmarkScenario, grid: AlphaGrid,
                     p_star: np.ndarray, design_seed=None,
                     recon_seed=None) -> MethodReport:
    """Design, measure, and reconstruct for one method; failures are recorded."""
    seeds = derive_seeds(scenario.master_seed)
    if design_seed is None:
        design_seed = seeds.get(method)
    if recon_seed is None:
        recon_seed = seeds.get("recon_" + method)
    report = MethodReport(method=method, design_seed=design_seed,
                          recon_seed=recon_seed)
    start = time.perf_counter()
    try:
        controls, ogra_result = design_controls(method, scenario, seed=design_seed)
        W = canonical_gram(controls, grid)
        ms = synthesize_measurements(controls, p_star, grid)
        problem = build_problem(controls, grid, ms)
        best, err = multistart_identify(
            problem, p_star, n_starts=scenario.n_multistart,
            radius_factor=scenario.radius_factor, seed=recon_seed)
        report.controls = controls
        report.ogra = ogra_result
        report.n_controls = len(controls)
        report.spectrum = spectrum(W)
        report.condition = condition_number(W)
        report.min_error = err
        report.objective = best.objective
        report.p_recovered = best.p_f
    except Exception as exc:  # per-method isolation: report, don't abort
        report.failure = f"{type(exc).__name__}: {exc}"
    report.elapsed = time.perf_counter() - start
    return report


def run_benchmark(scenario: BenchmarkScenario) -> BenchmarkReport:
    """Design, measure, and reconstruct for every scenario method.

    Per-method failures are captured in the report rather than raised;
    the caller can check `all_failed`.
    """
    start = time.perf_counter()
    grid = scenario.grid()
    p_star = scenario.target_distribution(grid)
    reports = {m: benchmark_method(m, scenario, grid, p_star)
               for m in scenario.methods}
    target_name = scenario.target if isinstance(scenario.target, str) else "custom"
    return BenchmarkReport(target=target_name, alphas=grid.alphas.copy(),
                           p_star=p_star, methods=reports,
                           master_seed=scenario.master_seed,
                           elapsed=time.perf_counter() - start,
                           spin_count=scenario.spin_count)


def rcc_error_draws(scenario: BenchmarkScenario, n_draws: int = 10,
                    method: str = "rcc") -> list:
    """Random-control identification over repeated seed draws.

    Draw i uses design seed master + offset(method) + 1000 i and the
    matching reconstruction seed, so draw 0 reproduces the benchmark's
    random-control row exactly.
    """
    if method not in ("rcc", "rcct"):
        raise ValueError(f"draws are for random-control methods, got {method!r}")
    grid = scenario.grid()
    p_star = scenario.target_distribution(grid)
    seeds = derive_seeds(scenario.master_seed)
    out = []
    for i in range(n_draws):
        out.append(benchmark_method(
            method, scenario, grid, p_star,
            design_seed=seeds[method] + RCC_DRAW_STRIDE * i,
            recon_seed=seeds["recon_" + method] + RCC_DRAW_STRIDE * i))
    return out
