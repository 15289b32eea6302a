"""Exclusive group sparsity: norm, proximal operator, solvers and recovery diagnostics."""
from .partition import (GroupPartition, RestrictedView, canonical_subgradient, omega,
                        omega_dual, omega_dual_restricted, omega_restricted, phi_J,
                        signed_support, subgradient_certificate, support_errors)
from .prox import ProxCertificate, ProxResult, project_dual_ball, prox_omega, prox_scaled, soft_threshold
from .solvers import (RegressionProblem, SolveReport, SolverConfig, classic_lasso_solve,
                      duality_gap, fista_solve, irls_restricted_solve, latent_group_lasso_solve,
                      lipschitz_constant, ls_grad, ls_loss)
from .active_set import (EvolutionMode, SupportState, active_set_solve, evolution_candidates,
                         necessary_condition, sufficient_condition)
from .consistency import (ConsistencyReport, incoherence_gamma, opnorm_omega_dual_to_inf,
                          recovery_trend, witness_check)
from .bench import ExperimentSpec, SweepRow, generate_problem, run_sweep

__version__ = "0.1.0"
