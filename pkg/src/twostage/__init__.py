"""Two-stage grant-free random access: count estimation, table lookup and
covariance-based activity detection with coordinate descent."""

from .system_model import (LinkBudget, SystemConfig, REFERENCE_SIGMA2, normalized_noise_power, sample_activity,
                           generate_phase1_signal, generate_phase2_signal, generate_preambles, trial_rng)
from .estimator import CountEstimate, estimate_count, estimation_error, sample_covariance
from .detector import (DetectionProblem, SolverReport, SolverState, coordinate_step, gradient_component,
                       objective, solve_active_set_cd, solve_cd, solve_kcd, threshold_activities, violation)
from .metrics import ErrorRates, equal_error_rate, mdp_fap, pooled_equal_error_rate
from .protocol import (REFERENCE_TABLE, Codebook, LookupTable, SolverParams, TrialOutcome, calibrate_table,
                       lookup_l2, run_grant_free, run_two_stage)
from .experiments import ExperimentSpec, run_experiment

__version__ = "0.1.0"
