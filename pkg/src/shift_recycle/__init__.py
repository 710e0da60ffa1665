"""Krylov solvers for shifted linear systems with subspace recycling."""
from .approx import (ShiftState, UDecomposition, approx_collinear_solve, build_G_tilde,
                     decompose_U, perturbed_projection, residual_bound,
                     solve_family_recursive, update_shift_state)
from .arnoldi import (ArnoldiDecomposition, RecycleSpace, build_deflated_arnoldi,
                      check_shift_invariance, shifted_hessenberg)
from .gmres import (LogEntry, ResidualLog, SolveParams, gmres_cycle, restarted_gmres,
                    shifted_gmres, shifted_gmres_cycle)
from .linalg import (DimensionMismatch, EigFailed, Operator, RankDeficient, ShiftRecycleError,
                     Singular, as_operator, eig_small, largest_principal_angle, least_squares,
                     matvec, solve_square, solve_upper_triangular, thin_qr, to_csr)
from .multideflation import (FamilyBuildFailed, ShiftedDeflationFamily, build_family,
                             implicit_shifted_product, multi_deflation_shifted_rgmres,
                             verify_family)
from .problems import (ParseError, ProblemSpec, Unsupported, bidiagonal_b1, bidiagonal_sequence,
                       load_matrix_market, make_rhs, perturb_bidiagonal, qcd_assemble,
                       save_matrix_market)
from .recycling import (augmented_G, harmonic_ritz_pairs, harmonic_ritz_update,
                        project_initial, recycled_gmres, restart_point, rgmres_cycle,
                        transfer_recycle)

__version__ = '0.1.0'
