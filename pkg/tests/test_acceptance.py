"""Full-scale acceptance checks, one printed verdict line per criterion.

Run with:

    python3 -m pytest tests/test_acceptance.py -v -s

The shared fixture designs all six control families at the reference
scenario (K = 30, master seed 42) and reconstructs both targets; on one
core that takes about 45 minutes, most of it in the variable-duration
optimized design. Every check prints `criterion N: PASS/FAIL (...)` with
the measured values before asserting, so a failed bound still reports
what was achieved.

Known honest failures at these tolerances, discussed in README.md:
criterion 1 (a fourth-order integrator at step 1e-3 cannot reach 1e-8
deviation for the fastest admissible rotations) and the random-control
clauses of criteria 6, 7 and 8 (with exact synthetic readings and a
solver run to convergence, fixed-duration random controls usually
reconstruct far better than the bounds assume).
"""

import math
import os
import time

import numpy as np
import pytest

import spindist as sd
from spindist.experiment import (METHODS, candidate_functions, design_basis,
                                 design_controls, rcc_error_draws)
from spindist.gram import SPECTRAL_FLOOR
from spindist.greedy import gamma_objective, h_k
from spindist.reconstruction import solve_identification

N_WORKERS = min(8, os.cpu_count() or 1)
# wall-clock budgets are stated for 8 cores; scale them when fewer are available
BUDGET_SCALE = max(1.0, 8.0 / N_WORKERS)


def report(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line, flush=True)
    assert ok, line


def rk4_batch(omegas: np.ndarray, t_f: float, step: float) -> np.ndarray:
    """Classical RK4 for X' = omega x X, one row per constant generator.

    Mirrors the scalar integrator's stepping (n = ceil(t_f / step) uniform
    steps) so the two agree to rounding; vectorizing across pulses keeps
    the hundred-pulse sweep inside the runtime budget.
    """
    n = max(1, math.ceil(t_f / step))
    h = t_f / n
    X = np.zeros((omegas.shape[0], 3))
    X[:, 2] = 1.0
    for _ in range(n):
        k1 = np.cross(omegas, X)
        k2 = np.cross(omegas, X + 0.5 * h * k1)
        k3 = np.cross(omegas, X + 0.5 * h * k2)
        k4 = np.cross(omegas, X + h * k3)
        X = X + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    return X


@pytest.fixture(scope="module")
def full_run():
    """Designs, reconstructions and repeated random draws at full scale."""
    sc = sd.BenchmarkScenario(target="double-peak", master_seed=42,
                              n_workers=N_WORKERS)
    grid = sc.grid()
    seeds = sd.derive_seeds(sc.master_seed)

    t0 = time.perf_counter()
    designs, ogra_results, conditions = {}, {}, {}
    for method in METHODS:
        controls, extra = design_controls(method, sc)
        designs[method] = controls
        if extra is not None:
            ogra_results[method] = extra
        conditions[method] = sd.condition_number(
            sd.canonical_gram(controls, grid))
    design_seconds = time.perf_counter() - t0

    def reconstruct(target_name):
        p_star = sd.named_target(target_name, grid)
        errors, extras = {}, {}
        for method in METHODS:
            ms = sd.synthesize_measurements(designs[method], p_star, grid)
            problem = sd.build_problem(designs[method], grid, ms)
            if method == "ogra" and target_name == "double-peak":
                best, err, runs = sd.multistart_identify(
                    problem, p_star, n_starts=sc.n_multistart,
                    radius_factor=sc.radius_factor,
                    seed=seeds["recon_" + method], full_output=True)
                extras["ogra_runs"] = runs
            else:
                best, err = sd.multistart_identify(
                    problem, p_star, n_starts=sc.n_multistart,
                    radius_factor=sc.radius_factor,
                    seed=seeds["recon_" + method])
            errors[method] = err
        return errors, extras

    t0 = time.perf_counter()
    errors_dp, extras = reconstruct("double-peak")
    draws = rcc_error_draws(sc, n_draws=10)
    dp_seconds = time.perf_counter() - t0

    t0 = time.perf_counter()
    errors_step, _ = reconstruct("step")
    step_seconds = time.perf_counter() - t0

    return {
        "scenario": sc,
        "grid": grid,
        "seeds": seeds,
        "designs": designs,
        "ogra_results": ogra_results,
        "conditions": conditions,
        "errors_dp": errors_dp,
        "errors_step": errors_step,
        "ogra_runs": extras["ogra_runs"],
        "draw_errors": np.array([d.min_error for d in draws]),
        "draw_conditions": np.array([d.condition for d in draws]),
        "design_seconds": design_seconds,
        "dp_seconds": dp_seconds,
        "step_seconds": step_seconds,
    }


def test_criterion_01_propagator_matches_integrator():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    t_f, delta = 16.0, math.pi / 10
    amps = rng.uniform(-10.0, 10.0, size=(100, 2))
    alphas = rng.uniform(-0.2, 0.2, size=100)
    pulses = [sd.ControlPulse(u_x=a[0], u_y=a[1], t_f=t_f) for a in amps]

    exact = np.array([sd.propagate(p, alphas[i], delta)
                      for i, p in enumerate(pulses)])
    norm_dev = float(np.max(np.abs(np.linalg.norm(exact, axis=1) - 1.0)))

    omegas = np.column_stack([(1.0 + alphas) * amps[:, 0],
                              (1.0 + alphas) * amps[:, 1],
                              np.full(100, delta)])
    # tie the batch stepper to the scalar reference before trusting it
    probes = rk4_batch(omegas[:3], t_f, step=1e-3)
    for i in range(3):
        scalar = sd.rk4_propagate(pulses[i], alphas[i], delta, step=1e-3)
        assert np.max(np.abs(probes[i] - scalar)) <= 1e-10

    integrated = rk4_batch(omegas, t_f, step=1e-3)
    dev = float(np.max(np.abs(exact - integrated)))
    elapsed = time.perf_counter() - t0
    report(1, dev <= 1e-8 and norm_dev <= 1e-12 and elapsed < 10.0,
           f"max rk4 deviation {dev:.3e} against 1e-8, "
           f"norm deviation {norm_dev:.3e} against 1e-12, "
           f"{elapsed:.1f}s against 10s")


def test_criterion_02_gram_summand_structure():
    t0 = time.perf_counter()
    sc = sd.BenchmarkScenario(target="double-peak", master_seed=42)
    grid = sc.grid()
    basis = design_basis(sc)
    rng = np.random.default_rng(2)
    worst_asym, worst_neg, worst_rank = 0.0, 0.0, 0
    for _ in range(100):
        pulse = sd.ControlPulse(*rng.uniform(-10, 10, 2), t_f=16.0)
        W = sd.w_single(basis, pulse, grid)
        worst_asym = max(worst_asym, float(np.max(np.abs(W.w - W.w.T))))
        vals = sd.spectrum(W)
        worst_neg = min(worst_neg, float(vals[-1]))
        worst_rank = max(worst_rank, sd.numerical_rank(W))
    elapsed = time.perf_counter() - t0
    report(2, worst_asym == 0.0 and worst_neg >= -1e-10 and worst_rank <= 2
           and elapsed < 30.0,
           f"asymmetry {worst_asym:.1e}, min eigenvalue {worst_neg:.2e} "
           f"against -1e-10, max rank {worst_rank} against 2, "
           f"floor {SPECTRAL_FLOOR:g}, {elapsed:.1f}s against 30s")


def test_criterion_03_objective_identities():
    t0 = time.perf_counter()
    sc = sd.BenchmarkScenario(target="double-peak", master_seed=42)
    grid = sc.grid()
    basis = design_basis(sc)
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        pulse = sd.ControlPulse(*rng.uniform(-10, 10, 2), t_f=16.0)
        W = sd.w_single(basis, pulse, grid)

        gamma1 = h_k(basis, [1.0], pulse, grid)
        lhs = float(gamma1 @ gamma1)
        scale = max(abs(lhs), abs(W.w[0, 0]), 1e-30)
        worst = max(worst, abs(lhs - W.w[0, 0]) / scale)

        k = int(rng.integers(1, basis.size))
        beta = rng.normal(size=k)
        v = np.concatenate([beta, [-1.0]])
        form = sd.quadratic_form(W.w[:k + 1, :k + 1], v)
        psi = beta @ basis.functions[:k] - basis.functions[k]
        direct = gamma_objective(psi, grid)(pulse)
        scale = max(abs(form), abs(direct), 1e-30)
        worst = max(worst, abs(form - direct) / scale)
    elapsed = time.perf_counter() - t0
    report(3, worst <= 1e-9 and elapsed < 30.0,
           f"max relative deviation {worst:.3e} against 1e-9 over 50 "
           f"samples, {elapsed:.1f}s against 30s")


def test_criterion_04_fitting_produces_definite_blocks(full_run):
    sc = full_run["scenario"]
    grid = full_run["grid"]
    basis = design_basis(sc)
    controls = full_run["designs"]["gra"]
    pulses = list(controls.pulses)

    n_singular = 0
    worst_annihilation = 0.0
    min_block_eig = np.inf
    min_form = np.inf
    for record in controls.iterations[1:]:
        k = record.k
        W = sd.w_accumulate([sd.w_single(basis, p, grid)
                             for p in pulses[:k]])
        block_vals = sd.spectrum(W.w[:k, :k])
        min_block_eig = min(min_block_eig, float(block_vals[-1]))

        v = np.concatenate([record.beta, [-1.0]])
        ext = sd.w_accumulate(
            [W, sd.w_single(basis, pulses[k], grid)]).w[:k + 1, :k + 1]
        if block_vals[-1] <= SPECTRAL_FLOOR * block_vals[0]:
            n_singular += 1
            residual = float(np.linalg.norm(ext @ v))
            rel = residual / max(float(np.linalg.norm(ext)), 1e-300)
            worst_annihilation = max(worst_annihilation, rel)

        form = sd.quadratic_form(
            sd.w_single(basis, pulses[k], grid).w[:k + 1, :k + 1], v)
        min_form = min(min_form, form)

    ok = (min_block_eig > 0.0 and min_form > 0.0
          and worst_annihilation <= 1e-8)
    report(4, ok,
           f"min leading-block eigenvalue {min_block_eig:.3e} (positive "
           f"definite), min post-discriminatory form {min_form:.3e} "
           f"(positive), {n_singular} singular blocks met, worst "
           f"annihilation residual {worst_annihilation:.1e} against 1e-8")


def test_criterion_05_two_function_closed_form():
    t0 = time.perf_counter()
    grid = sd.alpha_grid(2, -0.2, 0.2, math.pi / 10)
    basis = sd.random_orthonormal_basis(2, seed=5)
    pulse = sd.ControlPulse(u_x=4.2, u_y=-7.9, t_f=16.0)
    W = sd.w_single(basis, pulse, grid)
    beta = sd.fitting_step(1, W)
    direct = W.w[0, 1] / W.w[0, 0]
    dev = abs(float(beta[0]) - direct)
    elapsed = time.perf_counter() - t0
    report(5, beta.shape == (1,) and dev <= 1e-12 and elapsed < 1.0,
           f"beta_1 deviation {dev:.2e} against 1e-12, "
           f"{elapsed:.2f}s against 1s")


def test_criterion_06_double_peak_scenario(full_run):
    errs = full_run["errors_dp"]
    median_rcc = float(np.median(full_run["draw_errors"]))
    elapsed = (full_run["design_seconds"] + full_run["dp_seconds"])
    budget = 1800.0 * BUDGET_SCALE

    bounds_ok = (errs["gra"] <= 0.02 and errs["grat"] <= 0.02
                 and errs["ogra"] <= 0.005 and errs["ograt"] <= 0.005)
    median_ok = median_rcc >= 0.05
    ordering_ok = errs["ogra"] < errs["gra"] < errs["rcc"]
    runtime_ok = elapsed <= budget

    report(6, bounds_ok and median_ok and ordering_ok and runtime_ok,
           f"errors gra {errs['gra']:.2e} / grat {errs['grat']:.2e} against "
           f"0.02, ogra {errs['ogra']:.2e} / ograt {errs['ograt']:.2e} "
           f"against 0.005, random-control 10-draw median {median_rcc:.2e} "
           f"against >= 0.05, ordering ogra < gra < rcc "
           f"{'holds' if ordering_ok else 'violated'} "
           f"({errs['ogra']:.2e}, {errs['gra']:.2e}, {errs['rcc']:.2e}), "
           f"{elapsed:.0f}s against {budget:.0f}s on {N_WORKERS} workers")


def test_criterion_07_step_scenario(full_run):
    errs = full_run["errors_step"]
    elapsed = full_run["step_seconds"]
    budget = 1800.0 * BUDGET_SCALE

    bounds_ok = (errs["gra"] <= 0.05 and errs["grat"] <= 0.05
                 and errs["ogra"] <= 0.01 and errs["ograt"] <= 0.01)
    best_ok = all(errs["ogra"] <= errs[m] for m in METHODS)
    worst_ok = all(errs["rcc"] >= errs[m] for m in METHODS)
    runtime_ok = elapsed <= budget

    report(7, bounds_ok and best_ok and worst_ok and runtime_ok,
           f"errors gra {errs['gra']:.2e} / grat {errs['grat']:.2e} against "
           f"0.05, ogra {errs['ogra']:.2e} / ograt {errs['ograt']:.2e} "
           f"against 0.01, ogra best {'holds' if best_ok else 'violated'}, "
           f"rcc worst {'holds' if worst_ok else 'violated'} "
           f"(rcc {errs['rcc']:.2e}, rcct {errs['rcct']:.2e}), "
           f"{elapsed:.0f}s against {budget:.0f}s (designs reused)")


def test_criterion_08_conditioning(full_run):
    cond = full_run["conditions"]
    draw_conds = full_run["draw_conditions"]
    n_above = int(np.sum(draw_conds > 1e6))
    ok = cond["ogra"] < 1e3 and cond["gra"] < 1e6 and n_above >= 8
    report(8, ok,
           f"cond ogra {cond['ogra']:.3e} against 1e3, "
           f"gra {cond['gra']:.3e} against 1e6, random-control draws above "
           f"1e6: {n_above}/10 against >= 8")


def test_criterion_09_convex_uniqueness(full_run):
    t0 = time.perf_counter()
    grid = full_run["grid"]
    runs = full_run["ogra_runs"]
    W = sd.canonical_gram(full_run["designs"]["ogra"], grid)
    assert sd.spectrum(W)[-1] > 0.0
    P = runs["p_f"]
    spread = float(np.max(np.linalg.norm(P[:, None, :] - P[None, :, :],
                                         axis=-1)))

    # a single pulse gives two rows for thirty unknowns: minimizers form
    # a face of the simplex and depend on the initializer
    p_star = sd.named_target("double-peak", grid)
    single = sd.ControlSet(pulses=(full_run["designs"]["rcc"].pulses[0],))
    ms = sd.synthesize_measurements(single, p_star, grid)
    problem = sd.build_problem(single, grid, ms)
    rng = np.random.default_rng(9)
    sols = [solve_identification(problem, rng.normal(size=grid.size) * 5.0)
            for _ in range(12)]
    objs = np.array([s.objective for s in sols])
    pf = np.array([s.p_f for s in sols])
    distinct = float(np.max(np.linalg.norm(pf[:, None, :] - pf[None, :, :],
                                           axis=-1)))
    obj_gap = float(objs.max() - objs.min())
    elapsed = time.perf_counter() - t0

    ok = (spread <= 1e-5 and distinct > 1e-4 and obj_gap <= 1e-10
          and elapsed < 300.0)
    report(9, ok,
           f"100-start agreement spread {spread:.2e} against 1e-5 on the "
           f"definite design, rank-deficient spread {distinct:.2e} over "
           f"1e-4 with objective gap {obj_gap:.1e} against 1e-10, "
           f"{elapsed:.0f}s against 300s")


def test_criterion_10_ogra_termination(full_run):
    sc = full_run["scenario"]
    result = full_run["ogra_results"]["ogra"]
    trace = result.selection_trace
    loop_iterations = max(r.iteration for r in trace)
    n_controls = len(result.controls)
    S = result.selected_basis.functions
    ortho_dev = float(np.max(np.abs(S @ S.T - np.eye(S.shape[0]))))

    ok = (sc.tol == 1e-14 and loop_iterations <= sc.K - 1
          and n_controls <= sc.K and ortho_dev <= 1e-10)
    report(10, ok,
           f"tol {sc.tol:g}, {loop_iterations} loop iterations against "
           f"K-1 = {sc.K - 1}, {n_controls} controls against K = {sc.K}, "
           f"stop reason {trace[-1].stop_reason!r}, orthonormality "
           f"deviation {ortho_dev:.2e} against 1e-10")
