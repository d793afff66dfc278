"""Inhomogeneous semi-Markov processes: exact simulation, forward equations and checks."""
from .errors import (ConfigError, ConservationError, DomainError, EvaluationError, ExplosionError, GridError,
                     SMPError, StepSizeError, ToleranceError)
from .forward_solver import (DurationMeasure, RowSolution, TransitionRow, compose, duration_left_derivative,
                             solve_row, support_defect, transition_prob)
from .hazard_kernel import (QuadratureConfig, cumulative_hazard, jump_density, sample_next_jump, survival)
from .monte_carlo import (EstimatorSummary, estimate_duration_cdf, estimate_duration_cdfs, estimate_multijump,
                          estimate_transition)
from .simulator import PathBatch, PathQueryResult, Trajectory, jump_count, simulate_batch, simulate_path, state_at
from .state_model import (Constant, ConstantField, Exponential, IntensityModel, PiecewiseConstant, PowerLaw,
                          ProductField, StateSpace, TableField, constant_model, rate, sup_norm, total_rate, validate,
                          weibull_field, zero_model)
from .verification import (CheckReport, check_derivative_limit, check_dominating_bound, check_forward_residual,
                           check_quick_cycle, check_two_jump, difference_quotient, dominating_bound,
                           embedded_chain_test, forward_residual, quick_cycle_ratio, two_jump_bound)

__version__ = "0.1.0"
