"""Rate allocation for networks of distributed Bayesian learners.

Data sources stream noisy linear measurements over a capacitated network
to learners running Bayesian linear regression; this package constructs
such network instances and allocates per-path transmission rates to
maximize the aggregate expected information gain, via centralized and
distributed Frank-Wolfe and projected-gradient solvers plus throughput
and fairness baselines.
"""

from ._rng import stream, stream_key
from .gradient import (EstimatorParams, GradientEstimate, estimate_gradient,
                       oracle_gradient_1d, poisson_tail, truncation_level)
from .instance import (Instance, InstanceError, LinearProgram, ProblemConfig,
                       RateAllocation, build_instance, infeasibility,
                       lp_linearize, residuals, snap_into_feasible)
from .objective import (InfoMatrix, ObjectiveError, SampleBatch,
                        UtilityEstimate, estimation_error, g_value,
                        map_estimate, marginal_gain, sample_batch,
                        sample_labels, utility_mc)
from .solvers_central import (SolverError, SolverTrace, fw_solve,
                              lp_direction, maxfair_solve, maxtp_solve,
                              pga_solve, project_onto_feasible)
from .solvers_distributed import (LocalityAudit, LocalityError, PDState,
                                  Router, Stepsizes,
                                  StepsizeInstabilityError, dfw_solve,
                                  dmax_solve, dpga_solve, pd_inner)
from .experiments import (ConfigError, ExperimentResult, ExperimentSpec,
                          apply_sweep, benchmark_config, benchmark_instance,
                          benchmark_rows, instance_from_config, load_config,
                          read_results, run)
from .topology import (Graph, Placement, PathSet, TopologyError,
                       fill_capacities, generate, load_edge_list,
                       place_and_route)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "EstimatorParams", "ExperimentResult", "ExperimentSpec",
    "GradientEstimate", "Graph", "InfoMatrix", "Instance", "InstanceError",
    "LinearProgram", "LocalityAudit", "LocalityError", "ObjectiveError",
    "PDState", "PathSet", "Placement", "ProblemConfig", "RateAllocation",
    "Router", "SampleBatch", "SolverError", "SolverTrace", "Stepsizes",
    "StepsizeInstabilityError", "TopologyError", "UtilityEstimate",
    "apply_sweep", "benchmark_config", "benchmark_instance", "benchmark_rows",
    "build_instance", "dfw_solve", "dmax_solve", "dpga_solve",
    "estimate_gradient", "estimation_error", "fill_capacities", "fw_solve",
    "g_value", "generate", "infeasibility", "instance_from_config",
    "load_config", "load_edge_list", "lp_direction", "lp_linearize",
    "map_estimate", "marginal_gain", "maxfair_solve", "maxtp_solve",
    "oracle_gradient_1d", "pd_inner", "pga_solve", "place_and_route",
    "poisson_tail", "project_onto_feasible", "read_results", "residuals",
    "run", "sample_batch", "sample_labels", "snap_into_feasible", "stream",
    "stream_key", "truncation_level", "utility_mc",
]
