"""Outlier-robust Gromov-Wasserstein distances and robust transport primitives.

The package provides:

- robust penalties (Tukey, Huber, truncation) and finite metric-measure
  spaces (:mod:`robustgw.mmspace`);
- transport solvers over a fixed cost: Sinkhorn scaling, an exact
  transportation simplex, truncated-cost transport, the mass-deletion
  robust Wasserstein distance and a truncated Levy-Prokhorov metric
  (:mod:`robustgw.ot_solvers`);
- penalized entropic Gromov-Wasserstein solvers with a brute-force
  polytope oracle (:mod:`robustgw.gw_solvers`);
- locally robust variants on truncated metrics, including the
  alternating inner-product bound and alignment of distribution-valued
  atoms (:mod:`robustgw.lrgw`);
- Gaussian-mixture alignment through closed-form component distances
  (:mod:`robustgw.gaussian_mixture`);
- contamination generators, synthetic shapes and the data-driven
  threshold selector (:mod:`robustgw.contamination`);
- the contamination-sweep experiment harness (:mod:`robustgw.experiments`)
  and a command-line interface (``robustgw``).
"""

from .errors import NumericalError
from .mmspace import (MmSpace, RobustPenalty, build_space, cross_distances,
                      distortion_samples, load_distance_csv, load_points_csv,
                      load_weights_csv, penalty_eval, save_points_csv,
                      space_from_distances, validate_triangle)
from .ot_solvers import (CouplingMatrix, SinkhornConfig, SinkhornResult,
                         exact_ot, levy_prokhorov_trunc, robot_distance,
                         robust_w_eps, robust_w_eps_dual, sinkhorn,
                         truncated_w1, tukey_wasserstein, wasserstein_p)
from .gw_solvers import (BruteOracleResult, GwConfig, GwResult,
                         distortion_cost, egw_solve, gw_brute_oracle,
                         gw_distance, huber_cost_decomposed, local_cost,
                         minimize_quadratic_over_couplings)
from .lrgw import LrigwState, lrgw_distance, lrgw_pmm, lrigw_bound, truncate_space
from .gaussian_mixture import (GaussianComponent, GaussianMixture,
                               mixture_from_json, mixture_gw,
                               mixture_gw_robust, mixture_to_json, w2_gaussian)
from .contamination import (ContaminationSpec, ThresholdEstimate, circle_shape,
                            contaminate, heart_shape, select_tau,
                            two_moons_shape)
from .experiments import (ExperimentRun, MethodSpec, SweepConfig, derive_seed,
                          run_sweep, summarize, write_runs_csv,
                          write_summary_csv)

__version__ = "0.1.0"

__all__ = [
    "NumericalError",
    "MmSpace", "RobustPenalty", "build_space", "cross_distances",
    "distortion_samples", "load_distance_csv", "load_points_csv",
    "load_weights_csv", "penalty_eval", "save_points_csv",
    "space_from_distances", "validate_triangle",
    "CouplingMatrix", "SinkhornConfig", "SinkhornResult", "exact_ot",
    "levy_prokhorov_trunc", "robot_distance", "robust_w_eps",
    "robust_w_eps_dual", "sinkhorn", "truncated_w1", "tukey_wasserstein",
    "wasserstein_p",
    "BruteOracleResult", "GwConfig", "GwResult", "distortion_cost",
    "egw_solve", "gw_brute_oracle", "gw_distance", "huber_cost_decomposed",
    "local_cost", "minimize_quadratic_over_couplings",
    "LrigwState", "lrgw_distance", "lrgw_pmm", "lrigw_bound", "truncate_space",
    "GaussianComponent", "GaussianMixture", "mixture_from_json", "mixture_gw",
    "mixture_gw_robust", "mixture_to_json", "w2_gaussian",
    "ContaminationSpec", "ThresholdEstimate", "circle_shape", "contaminate",
    "heart_shape", "select_tau", "two_moons_shape",
    "ExperimentRun", "MethodSpec", "SweepConfig", "derive_seed", "run_sweep",
    "summarize", "write_runs_csv", "write_summary_csv",
]
