"""Constrained least-squares identification: recovery, degeneracy, multistart."""

import numpy as np
import pytest

import spindist as sd
from spindist.gram import quadratic_form
from spindist.reconstruction import relative_error, solve_identification


def random_pulses(rng, count, t_f=16.0):
    return [sd.ControlPulse(u_x=float(rng.uniform(-10, 10)),
                            u_y=float(rng.uniform(-10, 10)),
                            t_f=t_f) for _ in range(count)]


def make_problem(rng, grid, n_controls, p_star):
    controls = sd.ControlSet(pulses=tuple(random_pulses(rng, n_controls)))
    ms = sd.synthesize_measurements(controls, p_star, grid)
    return sd.build_problem(controls, grid, ms), controls


class TestBuildProblem:
    def test_shapes_and_rows(self, grid8, rng):
        p_star = sd.random_probability_distributions(8, 1, seed=2)[0]
        problem, controls = make_problem(rng, grid8, 5, p_star)
        assert problem.size == 8
        assert problem.n_controls == 5
        assert problem.design_rows.shape == (10, 8)
        assert problem.targets.shape == (10,)
        # row pairs hold the transposed transverse readings of each pulse
        for m, pulse in enumerate(controls):
            readings = sd.propagate_grid(pulse, grid8)
            np.testing.assert_allclose(problem.design_rows[2 * m], readings[:, 0],
                                       atol=1e-14)
            np.testing.assert_allclose(problem.design_rows[2 * m + 1],
                                       readings[:, 1], atol=1e-14)

    def test_truth_has_zero_residual(self, grid8, rng):
        p_star = sd.random_probability_distributions(8, 1, seed=2)[0]
        problem, _ = make_problem(rng, grid8, 5, p_star)
        assert problem.objective(p_star) <= 1e-22

    def test_objective_is_gram_quadratic_form(self, grid8, rng):
        # ||A(p - p*)||^2 equals the canonical Gram form at p - p*
        p_star = sd.random_probability_distributions(8, 1, seed=2)[0]
        problem, controls = make_problem(rng, grid8, 4, p_star)
        W = sd.canonical_gram(controls, grid8)
        for _ in range(5):
            p = sd.random_probability_distributions(8, 1, seed=int(rng.integers(1e6)))[0]
            delta = p - p_star
            assert problem.objective(p) == pytest.approx(
                quadratic_form(W, delta), rel=1e-9, abs=1e-15)

    def test_accepts_measurement_set_or_array(self, grid8, rng):
        p_star = np.full(8, 1.0 / 8)
        controls = sd.ControlSet(pulses=tuple(random_pulses(rng, 3)))
        ms = sd.synthesize_measurements(controls, p_star, grid8)
        a = sd.build_problem(controls, grid8, ms)
        b = sd.build_problem(controls, grid8, ms.readings)
        np.testing.assert_array_equal(a.targets, b.targets)


class TestSolveIdentification:
    def test_recovers_point_mass(self, grid8, rng):
        p_star = np.zeros(8)
        p_star[3] = 1.0
        problem, _ = make_problem(rng, grid8, 10, p_star)
        res = solve_identification(problem, np.full(8, 1.0 / 8))
        assert res.converged
        assert relative_error(p_star, res.p_f) <= 1e-5

    def test_result_is_feasible(self, grid8, rng):
        p_star = sd.random_probability_distributions(8, 1, seed=4)[0]
        problem, _ = make_problem(rng, grid8, 6, p_star)
        res = solve_identification(problem, rng.normal(size=8))
        assert np.all(res.p_f >= 0.0)
        assert abs(res.p_f.sum() - 1.0) <= 1e-12

    def test_optimal_init_stops_quickly(self, grid8, rng):
        # zero gradient at the start: the plateau rule fires as soon as
        # its patience window fills
        p_star = sd.random_probability_distributions(8, 1, seed=4)[0]
        problem, _ = make_problem(rng, grid8, 8, p_star)
        res = solve_identification(problem, p_star)
        assert res.converged
        assert res.n_iterations <= 60
        assert res.objective <= 1e-28
        assert relative_error(p_star, res.p_f) <= 1e-10

    def test_objective_never_worse_than_projected_init(self, grid8, rng):
        p_star = sd.random_probability_distributions(8, 1, seed=4)[0]
        problem, _ = make_problem(rng, grid8, 6, p_star)
        for _ in range(5):
            init = rng.normal(size=8)
            res = solve_identification(problem, init)
            start = problem.objective(sd.simplex_project(init))
            assert res.objective <= start + 1e-15

    def test_reported_objective_matches_solution(self, grid8, rng):
        p_star = sd.random_probability_distributions(8, 1, seed=4)[0]
        problem, _ = make_problem(rng, grid8, 6, p_star)
        res = solve_identification(problem, rng.normal(size=8))
        assert res.objective == pytest.approx(problem.objective(res.p_f),
                                              rel=1e-12, abs=1e-18)

    def test_iteration_cap_flags_nonconvergence(self, grid8, rng):
        p_star = sd.random_probability_distributions(8, 1, seed=4)[0]
        problem, _ = make_problem(rng, grid8, 6, p_star)
        res = solve_identification(problem, rng.normal(size=8), max_iter=2)
        assert not res.converged
        assert res.n_iterations == 2

    def test_init_shape_validated(self, grid8, rng):
        p_star = np.full(8, 1.0 / 8)
        problem, _ = make_problem(rng, grid8, 3, p_star)
        with pytest.raises(ValueError):
            solve_identification(problem, np.zeros(5))


class TestDegenerateProblems:
    def test_single_control_has_many_minimizers(self, grid8, rng):
        # one pulse gives two equations for eight unknowns: the optimum
        # is a face of the simplex, reached at different points from
        # different initializers, all with the same (zero) objective
        p_star = sd.random_probability_distributions(8, 1, seed=9)[0]
        problem, _ = make_problem(rng, grid8, 1, p_star)
        sols = [solve_identification(problem, rng.normal(size=8) * 5.0,
                                     max_iter=4000)
                for _ in range(8)]
        for res in sols:
            assert res.objective <= 1e-12
        spread = max(np.linalg.norm(a.p_f - b.p_f)
                     for a in sols for b in sols)
        assert spread > 1e-4

    def test_equal_objectives_across_minimizers(self, grid8, rng):
        p_star = sd.random_probability_distributions(8, 1, seed=9)[0]
        problem, _ = make_problem(rng, grid8, 1, p_star)
        objs = [solve_identification(problem, rng.normal(size=8) * 5.0,
                                     max_iter=4000).objective
                for _ in range(6)]
        assert max(objs) - min(objs) <= 1e-10


class TestRelativeError:
    def test_zero_for_identical(self):
        p = np.array([0.2, 0.8])
        assert relative_error(p, p) == 0.0

    def test_hand_value(self):
        # ||(1,0) - (0,1)|| / ||(1,0)|| = sqrt(2)
        assert relative_error([1.0, 0.0], [0.0, 1.0]) == pytest.approx(np.sqrt(2))

    def test_scale(self):
        assert relative_error([0.5, 0.5], [0.5, 0.0]) == pytest.approx(
            0.5 / np.sqrt(0.5))

    def test_zero_reference_rejected(self):
        with pytest.raises(ValueError):
            relative_error([0.0, 0.0], [1.0, 0.0])


class TestMultistart:
    def test_agrees_on_well_posed_problem(self, grid8, rng):
        p_star = sd.random_probability_distributions(8, 1, seed=5)[0]
        problem, _ = make_problem(rng, grid8, 10, p_star)
        best, err, runs = sd.multistart_identify(
            problem, p_star, n_starts=12, seed=3, full_output=True)
        assert err <= 1e-6
        P = runs["p_f"]
        spread = np.max(np.linalg.norm(P[:, None, :] - P[None, :, :], axis=-1))
        assert spread <= 1e-5

    def test_returns_min_error_run(self, grid8, rng):
        p_star = sd.random_probability_distributions(8, 1, seed=5)[0]
        problem, _ = make_problem(rng, grid8, 4, p_star)
        best, err, runs = sd.multistart_identify(
            problem, p_star, n_starts=10, seed=3, full_output=True)
        assert err == pytest.approx(float(runs["error"].min()))
        assert err == pytest.approx(relative_error(p_star, best.p_f))

    def test_deterministic_per_seed(self, grid8, rng):
        p_star = sd.random_probability_distributions(8, 1, seed=5)[0]
        problem, _ = make_problem(rng, grid8, 4, p_star)
        a, ea = sd.multistart_identify(problem, p_star, n_starts=6, seed=11)
        b, eb = sd.multistart_identify(problem, p_star, n_starts=6, seed=11)
        assert ea == eb
        np.testing.assert_array_equal(a.p_f, b.p_f)

    def test_select_by_objective_without_truth(self, grid8, rng):
        # reference only centers the initializers; selection by objective
        p_star = sd.random_probability_distributions(8, 1, seed=5)[0]
        problem, _ = make_problem(rng, grid8, 10, p_star)
        uniform = np.full(8, 1.0 / 8)
        best, err = sd.multistart_identify(problem, uniform, n_starts=8,
                                           seed=3, select_by="objective")
        assert relative_error(p_star, best.p_f) <= 1e-5

    def test_zero_radius_starts_at_reference(self, grid8, rng):
        p_star = sd.random_probability_distributions(8, 1, seed=5)[0]
        problem, _ = make_problem(rng, grid8, 8, p_star)
        best, err = sd.multistart_identify(problem, p_star, n_starts=3,
                                           radius_factor=0.0, seed=0)
        assert err <= 1e-10

    def test_invalid_selection_mode(self, grid8, rng):
        p_star = np.full(8, 1.0 / 8)
        problem, _ = make_problem(rng, grid8, 3, p_star)
        with pytest.raises(ValueError):
            sd.multistart_identify(problem, p_star, n_starts=2, select_by="norm")
