"""Command-line pipelines: design, measure, reconstruct, analyze, benchmark.

Every command is a pure function of (config file, flags, seed) to its
output files: reruns reproduce byte-identical CSVs. Configuration comes
from an optional JSON file whose keys are the RunConfig field names,
overridden by command-line flags (flags win). Exit codes: 0 success,
1 invalid configuration or input files, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import fileio
from .bloch import AlphaGrid, ControlPulse, propagate, rk4_propagate
from .distributions import (alpha_grid, named_target, random_orthonormal_basis,
                            simplex_project)
from .experiment import (METHODS, BenchmarkScenario, add_measurement_noise,
                         canonical_gram, candidate_functions, derive_seeds,
                         design_basis, design_controls, run_benchmark,
                         synthesize_measurements)
from .gram import condition_number, numerical_rank, quadratic_form, spectrum, w_single
from .greedy import DegenerateBlockError, fitting_step, gamma_objective
from .reconstruction import build_problem, multistart_identify

__all__ = ["RunConfig", "main"]


@dataclass
class RunConfig:
    """Scenario parameters shared by all commands; defaults match the
    reference experiment (K = 30 on [-0.2, 0.2], detuning pi/10,
    u_m = 10, t_f = t_f_max = 16, tol = 1e-14, 60 candidates, 100
    reconstruction starts in a radius-100 hypercube)."""

    K: int = 30
    alpha_min: float = -0.2
    alpha_max: float = 0.2
    delta: float = math.pi / 10
    u_m: float = 10.0
    t_f: float = 16.0
    t_f_max: float = 16.0
    tol: float = 1e-14
    K_plus: int = 60
    n_starts: int | None = None
    n_multistart: int = 100
    radius_factor: float = 100.0
    seed: int = 42
    method: str = "gra"
    target: str = "double-peak"
    n_workers: int = 1

    def validate(self) -> None:
        if self.K < 2:
            raise ValueError(f"K must be at least 2, got {self.K}")
        if self.alpha_min >= self.alpha_max:
            raise ValueError("alpha_min must be below alpha_max")
        for name in ("u_m", "t_f", "t_f_max", "tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.K_plus < self.K:
            raise ValueError(f"K_plus must be at least K = {self.K}")
        if self.n_multistart < 1 or self.n_workers < 1:
            raise ValueError("n_multistart and n_workers must be at least 1")
        if self.n_starts is not None and self.n_starts < 1:
            raise ValueError("n_starts must be at least 1 when given")
        if self.radius_factor < 0:
            raise ValueError("radius_factor must be nonnegative")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; "
                             f"choose from {', '.join(METHODS)}")

    def grid(self) -> AlphaGrid:
        return alpha_grid(self.K, self.alpha_min, self.alpha_max, self.delta)

    def scenario(self, methods=None) -> BenchmarkScenario:
        return BenchmarkScenario(
            target=self.target,
            methods=tuple(methods) if methods is not None else METHODS,
            K=self.K, alpha_min=self.alpha_min, alpha_max=self.alpha_max,
            delta=self.delta, u_m=self.u_m, t_f=self.t_f, t_f_max=self.t_f_max,
            tol=self.tol, K_plus=self.K_plus, n_starts=self.n_starts,
            n_multistart=self.n_multistart, radius_factor=self.radius_factor,
            master_seed=self.seed, n_workers=self.n_workers)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # exit code 1 on bad flags instead of argparse's default 2
    def error(self, message):
        raise UsageError(message)


_CONFIG_FLAGS = {
    "k": ("K", int), "alpha_min": ("alpha_min", float),
    "alpha_max": ("alpha_max", float), "delta": ("delta", float),
    "u_m": ("u_m", float), "t_f": ("t_f", float), "t_f_max": ("t_f_max", float),
    "tol": ("tol", float), "k_plus": ("K_plus", int),
    "n_starts": ("n_starts", int), "n_multistart": ("n_multistart", int),
    "radius_factor": ("radius_factor", float), "seed": ("seed", int),
    "method": ("method", str), "target": ("target", str),
    "workers": ("n_workers", int),
}


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON file with RunConfig fields")
    p.add_argument("--out", default=".", help="output directory")
    for flag, (_, typ) in _CONFIG_FLAGS.items():
        p.add_argument("--" + flag.replace("_", "-"), type=typ, default=None)
    return p


def load_config(args) -> RunConfig:
    """RunConfig from defaults, then the JSON file, then flags (flags win)."""
    values = {}
    if args.config:
        data = fileio.read_json(args.config)
        if not isinstance(data, dict):
            raise ValueError(f"{args.config}: config must be a JSON object")
        known = {f.name for f in fields(RunConfig)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"{args.config}: unknown config keys {unknown}")
        values.update(data)
    for flag, (field_name, _) in _CONFIG_FLAGS.items():
        flag_value = getattr(args, flag, None)
        if flag_value is not None:
            values[field_name] = flag_value
    config = RunConfig(**values)
    config.validate()
    return config


def _resolve_target(spec: str, config: RunConfig):
    """A target name on the config grid, or a distribution CSV path.

    Returns (alphas, weights).
    """
    if spec in ("double-peak", "step"):
        grid = config.grid()
        return grid.alphas.copy(), named_target(spec, grid)
    path = Path(spec)
    if path.exists():
        return fileio.read_distribution(path)
    raise ValueError(f"target {spec!r} is neither a known name "
                     "(double-peak, step) nor an existing file")


def _provenance(config: RunConfig, extra: dict) -> dict:
    doc = {"config": asdict(config), "derived_seeds": derive_seeds(config.seed)}
    doc.update(extra)
    return doc


def cmd_design(config: RunConfig, args) -> int:
    out = Path(args.out)
    method = config.method
    scenario = config.scenario()
    controls, ogra_result = design_controls(method, scenario)

    extra = {"method": method, "n_controls": len(controls)}
    if method in ("gra", "grat"):
        extra["basis_hash"] = fileio.basis_hash(design_basis(scenario).functions)
    elif method in ("ogra", "ograt"):
        extra["basis_hash"] = fileio.basis_hash(candidate_functions(scenario))
        extra["stop_reason"] = ogra_result.selection_trace[-1].stop_reason
        extra["selected_candidates"] = list(ogra_result.selected_basis.active_set)
        fileio.write_selection_trace(out / f"{method}_trace.csv",
                                     ogra_result.selection_trace)

    controls_path = out / f"{method}_controls.csv"
    fileio.write_controls(controls_path, controls)
    fileio.write_json(out / f"{method}_design.json", _provenance(config, extra))
    print(f"wrote {controls_path} ({len(controls)} controls)")
    return 0


def cmd_measure(config: RunConfig, args) -> int:
    out = Path(args.out)
    controls = fileio.read_controls(args.controls)
    alphas, p_star = _resolve_target(config.target, config)
    grid = AlphaGrid(alphas=alphas, delta=config.delta)
    ms = synthesize_measurements(controls, p_star, grid)
    if args.sigma:
        ms = add_measurement_noise(ms, args.sigma, seed=config.seed)
    path = out / "measurements.csv"
    fileio.write_measurements(path, ms)
    print(f"wrote {path} ({len(ms)} readings)")
    return 0


def cmd_reconstruct(config: RunConfig, args) -> int:
    out = Path(args.out)
    controls = fileio.read_controls(args.controls)
    readings = fileio.read_measurements(args.measurements)
    if readings.shape[0] != len(controls):
        raise ValueError(
            f"{args.measurements}: {readings.shape[0]} readings do not match "
            f"{len(controls)} controls in {args.controls}")
    grid = config.grid()

    p_true = None
    if args.truth:
        alphas_t, p_true = _resolve_target(args.truth, config)
        if alphas_t.shape != grid.alphas.shape or not np.allclose(
                alphas_t, grid.alphas, rtol=0.0, atol=1e-12):
            raise ValueError(
                f"truth grid does not match the config grid (K = {config.K}, "
                f"[{config.alpha_min}, {config.alpha_max}])")

    problem = build_problem(controls, grid, readings)
    if p_true is not None:
        best, err = multistart_identify(
            problem, p_true, n_starts=config.n_multistart,
            radius_factor=config.radius_factor, seed=config.seed)
    else:
        reference = np.full(grid.size, 1.0 / grid.size)
        best, _ = multistart_identify(
            problem, reference, n_starts=config.n_multistart,
            radius_factor=config.radius_factor, seed=config.seed,
            select_by="objective")

    fileio.write_result(out / "result.csv", grid.alphas, p_true, best.p_f)
    summary = {"objective": best.objective, "n_iterations": best.n_iterations,
               "converged": best.converged, "n_starts": config.n_multistart,
               "radius_factor": config.radius_factor, "seed": config.seed}
    if p_true is not None:
        summary["min_relative_error"] = err
    fileio.write_json(out / "reconstruct.json", summary)
    if p_true is not None:
        print(f"min relative error {err:.6e} (objective {best.objective:.6e})")
    else:
        print(f"objective {best.objective:.6e}")
    return 0


def cmd_spectrum(config: RunConfig, args) -> int:
    out = Path(args.out)
    controls = fileio.read_controls(args.controls)
    grid = config.grid()
    W = canonical_gram(controls, grid)
    values = spectrum(W)
    cond = condition_number(W)
    fileio.write_spectrum(out / "spectrum.csv", values)
    fileio.write_json(out / "spectrum.json", {
        "condition": cond if np.isfinite(cond) else "inf",
        "rank": numerical_rank(W), "n_controls": len(controls)})
    print(f"condition number {cond:.6g} over {len(controls)} controls")
    return 0


def cmd_benchmark(config: RunConfig, args) -> int:
    out = Path(args.out)
    methods = METHODS if not args.methods else tuple(
        m.strip() for m in args.methods.split(",") if m.strip())
    scenario = config.scenario(methods=methods)
    report = run_benchmark(scenario)

    fileio.write_json(out / "report.json", report.as_dict())
    fileio.atomic_write_text(out / "report.txt", report.format_table() + "\n")
    for m, r in report.methods.items():
        if not r.ok:
            continue
        fileio.write_controls(out / f"{m}_controls.csv", r.controls)
        fileio.write_spectrum(out / f"{m}_spectrum.csv", r.spectrum)
        fileio.write_result(out / f"{m}_result.csv", report.alphas,
                            report.p_star, r.p_recovered)
        if r.ogra is not None:
            fileio.write_selection_trace(out / f"{m}_trace.csv",
                                         r.ogra.selection_trace)
    print(report.format_table())
    if report.all_failed:
        print("all methods failed", file=sys.stderr)
        return 2
    return 0


def _validation_checks():
    """Quick oracle suite: (name, passed, detail) per property."""
    rng = np.random.default_rng(2024)
    grid = alpha_grid(8, -0.2, 0.2, math.pi / 10)
    checks = []

    # closed-form rotation against a fixed-step integrator, plus norm conservation
    dev = 0.0
    norm_dev = 0.0
    for _ in range(20):
        pulse = ControlPulse(*rng.uniform(-10, 10, 2), t_f=rng.uniform(0.1, 16))
        alpha = rng.uniform(-0.2, 0.2)
        exact = propagate(pulse, alpha, grid.delta)
        dev = max(dev, float(np.max(np.abs(
            exact - rk4_propagate(pulse, alpha, grid.delta)))))
        norm_dev = max(norm_dev, abs(float(np.linalg.norm(exact)) - 1.0))
    checks.append(("rotation_matches_integrator", dev <= 1e-6, f"max dev {dev:.3e}"))
    checks.append(("norm_conserved", norm_dev <= 1e-12, f"max dev {norm_dev:.3e}"))

    # Gram summand structure: symmetric, PSD, rank at most 2
    basis = random_orthonormal_basis(grid.size, seed=7)
    worst_asym, worst_neg, worst_rank = 0.0, 0.0, 0
    for _ in range(20):
        pulse = ControlPulse(*rng.uniform(-10, 10, 2), t_f=16.0)
        W = w_single(basis, pulse, grid)
        worst_asym = max(worst_asym, float(np.max(np.abs(W.w - W.w.T))))
        vals = spectrum(W)
        worst_neg = min(worst_neg, float(vals[-1]))
        worst_rank = max(worst_rank, numerical_rank(W))
    ok = worst_asym == 0.0 and worst_neg >= -1e-10 and worst_rank <= 2
    checks.append(("gram_summand_structure", ok,
                   f"asym {worst_asym:.1e}, min eig {worst_neg:.1e}, "
                   f"rank {worst_rank}"))

    # quadratic-form identities behind the greedy steps
    worst = 0.0
    for _ in range(10):
        pulse = ControlPulse(*rng.uniform(-10, 10, 2), t_f=16.0)
        W = w_single(basis, pulse, grid)
        k = 3
        beta = rng.normal(size=k)
        v = np.concatenate([beta, [-1.0]])
        form = quadratic_form(W.w[:k + 1, :k + 1], v)
        psi = beta @ basis.functions[:k] - basis.functions[k]
        direct = gamma_objective(psi, grid)(pulse)
        scale = max(abs(form), abs(direct), 1e-30)
        worst = max(worst, abs(form - direct) / scale)
        w11 = gamma_objective(basis.functions[0], grid)(pulse)
        worst = max(worst, abs(w11 - W.w[0, 0]) / max(abs(W.w[0, 0]), 1e-30))
    checks.append(("greedy_objective_identities", worst <= 1e-9,
                   f"max rel dev {worst:.3e}"))

    # two-function closed form of the fitting solve
    W2 = np.array([[2.5, 0.7], [0.7, 1.1]])
    beta = fitting_step(1, W2)
    dev = abs(float(beta[0]) - W2[0, 1] / W2[0, 0])
    checks.append(("fitting_closed_form", dev <= 1e-12, f"dev {dev:.3e}"))

    # simplex projection: feasible output, idempotent, non-expansive
    pts = rng.normal(scale=3.0, size=(50, grid.size))
    proj = simplex_project(pts)
    feasible = (np.all(proj >= 0)
                and np.max(np.abs(proj.sum(axis=1) - 1.0)) <= 1e-9)
    idem = float(np.max(np.abs(simplex_project(proj) - proj)))
    gap = (np.linalg.norm(proj[0] - proj[1])
           <= np.linalg.norm(pts[0] - pts[1]) + 1e-12)
    ok = feasible and idem <= 1e-12 and gap
    checks.append(("simplex_projection", ok, f"idempotency dev {idem:.3e}"))

    # measurement model is linear in the distribution
    pulses = [ControlPulse(*rng.uniform(-10, 10, 2), t_f=16.0) for _ in range(4)]
    p1 = simplex_project(rng.random(grid.size))
    p2 = simplex_project(rng.random(grid.size))
    lam = 0.3
    mix = synthesize_measurements(pulses, lam * p1 + (1 - lam) * p2, grid)
    parts = (lam * synthesize_measurements(pulses, p1, grid).readings
             + (1 - lam) * synthesize_measurements(pulses, p2, grid).readings)
    dev = float(np.max(np.abs(mix.readings - parts)))
    checks.append(("measurement_linearity", dev <= 1e-12, f"max dev {dev:.3e}"))
    return checks


def cmd_validate(config: RunConfig, args) -> int:
    checks = _validation_checks()
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name} ({detail})")
    if args.out != ".":
        fileio.write_json(Path(args.out) / "validate.json",
                          {name: {"passed": bool(ok), "detail": detail}
                           for name, ok, detail in checks})
    return 0 if all(ok for _, ok, _ in checks) else 2


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = _Parser(prog="spindist",
                     description="Design control pulses and identify the "
                                 "inhomogeneity distribution of a spin ensemble.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", parents=[common],
                       help="design a control set (--method)")
    p.set_defaults(handler=cmd_design)

    p = sub.add_parser("measure", parents=[common],
                       help="synthesize readings for a control set")
    p.add_argument("--controls", required=True, help="controls CSV")
    p.add_argument("--sigma", type=float, default=0.0,
                   help="Gaussian noise level (default 0, noiseless)")
    p.set_defaults(handler=cmd_measure)

    p = sub.add_parser("reconstruct", parents=[common],
                       help="recover the distribution from readings")
    p.add_argument("--controls", required=True, help="controls CSV")
    p.add_argument("--measurements", required=True, help="measurements CSV")
    p.add_argument("--truth", default=None,
                   help="reference distribution (name or CSV) for the error metric")
    p.set_defaults(handler=cmd_reconstruct)

    p = sub.add_parser("spectrum", parents=[common],
                       help="eigenvalues and conditioning of a control set")
    p.add_argument("--controls", required=True, help="controls CSV")
    p.set_defaults(handler=cmd_spectrum)

    p = sub.add_parser("benchmark", parents=[common],
                       help="full per-method identification comparison")
    p.add_argument("--methods", default=None,
                   help="comma-separated subset of " + ",".join(METHODS))
    p.set_defaults(handler=cmd_benchmark)

    p = sub.add_parser("validate", parents=[common],
                       help="run the built-in numerical property checks")
    p.set_defaults(handler=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        config = load_config(args)
        return args.handler(config, args)
    except (DegenerateBlockError, np.linalg.LinAlgError, FloatingPointError,
            ZeroDivisionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
