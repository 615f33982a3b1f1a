"""Greedy design of constant control pulses for identifying the
probability distribution of a spin ensemble's inhomogeneity parameter
from final-time transverse-magnetization readings.

The pieces: exact Bloch propagation under constant pulses (`bloch`),
basis and target distributions on the alpha grid (`distributions`), the
observability Gram matrix (`gram`), greedy pulse design (`greedy`,
`ogra`), simplex-constrained identification (`reconstruction`),
synthetic experiments and benchmarks (`experiment`), file interchange
(`fileio`), and the command-line interface (`cli`).
"""

from .bloch import (AlphaGrid, ControlPulse, generator, propagate,
                    propagate_grid, propagate_transverse, pulse_admissible,
                    rk4_propagate)
from .distributions import (BasisSet, alpha_grid, double_peak_distribution,
                            expand, is_distribution, named_target,
                            random_orthonormal_basis,
                            random_probability_distributions, simplex_project,
                            step_distribution)
from .experiment import (BenchmarkReport, BenchmarkScenario, MeasurementSet,
                         MethodReport, add_measurement_noise, canonical_gram,
                         derive_seeds, design_controls, rcc_controls,
                         rcc_error_draws, rcct_controls, run_benchmark,
                         synthesize_measurements)
from .gram import (GramMatrix, condition_number, gamma_vectors, numerical_rank,
                   quadratic_form, spectrum, w_accumulate, w_single)
from .greedy import (ControlSet, DegenerateBlockError, GreedyConfig,
                     discriminatory_step, fitting_step, h_k,
                     maximize_over_controls, run_gra, run_grat)
from .ogra import (OgraConfig, OgraResult, SelectionRecord, h_S,
                   ogra_discriminatory_step, ogra_fitting_sweep,
                   orthogonalize_into, prune_dependent, run_ogra, run_ograt)
from .reconstruction import (IdentificationProblem, ReconstructionResult,
                             build_problem, multistart_identify,
                             relative_error, solve_identification)

__version__ = "0.1.0"

__all__ = [
    "AlphaGrid", "ControlPulse", "generator", "propagate", "propagate_grid",
    "propagate_transverse", "pulse_admissible", "rk4_propagate",
    "BasisSet", "alpha_grid", "double_peak_distribution", "expand",
    "is_distribution", "named_target", "random_orthonormal_basis",
    "random_probability_distributions", "simplex_project", "step_distribution",
    "GramMatrix", "condition_number", "gamma_vectors", "numerical_rank",
    "quadratic_form", "spectrum", "w_accumulate", "w_single",
    "ControlSet", "DegenerateBlockError", "GreedyConfig",
    "discriminatory_step", "fitting_step", "h_k", "maximize_over_controls",
    "run_gra", "run_grat",
    "OgraConfig", "OgraResult", "SelectionRecord", "h_S",
    "ogra_discriminatory_step", "ogra_fitting_sweep", "orthogonalize_into",
    "prune_dependent", "run_ogra", "run_ograt",
    "IdentificationProblem", "ReconstructionResult", "build_problem",
    "multistart_identify", "relative_error", "solve_identification",
    "BenchmarkReport", "BenchmarkScenario", "MeasurementSet", "MethodReport",
    "add_measurement_noise", "canonical_gram", "derive_seeds",
    "design_controls", "rcc_controls", "rcc_error_draws", "rcct_controls",
    "run_benchmark", "synthesize_measurements",
    "__version__",
]
