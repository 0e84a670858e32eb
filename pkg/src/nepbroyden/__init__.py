"""Damped rank-one quasi-Newton solvers for nonlinear eigenvalue problems.

Eigenpairs of M(lam) v = 0 are computed as roots of the augmented system
(M(lam) v, c^H v - 1) with secant updates of the Jacobian, its inverse, or a
structured inverse representation that costs one NEP action per iteration.
Deflation locks converged pairs into a minimal invariant pair so restarts
sweep out new eigenvalues. See the cli module for the benchmark harness.
"""

from .broyden import (AugmentedSystem, BroydenBreakdown, DampingRule,
                      GenericResult, GenericState, SolverOptions,
                      build_deflated_system, build_nep_system, damping_gamma,
                      solve_generic, step_h, step_j)
from .core import (DeflationContext, NepProblem, apply_deriv_fd,
                   deflated_residual, nep_matrix, u_apply, u_contour_oracle)
from .deflation import (DeflationResult, InvariantPair, conjugate_extend,
                        coupling_at_shift, deflated_broyden, extend_pair,
                        invariance_residual, invariance_residual_detail,
                        starting_f, starting_triplet)
from .history import CSV_HEADER, ConvergenceHistory
from .linalg import (LuFactorization, eig_smallest, gram_schmidt_append,
                     lu_solve)
from .problems import (MillingConfig, OdeNepConfig, approx_matrix,
                       make_dep_double, make_diag_toy, make_milling_1dof,
                       make_milling_pde, make_qdep, make_random_qep,
                       make_tpdde, make_tpdde_scalar, milling_w)
from .resinv import ResinvResult, resinv_init, resinv_solve, resinv_step
from .structured import (StructuredResult, StructuredState, init_structured,
                         solve_structured, step_structured)

__version__ = "0.1.0"
