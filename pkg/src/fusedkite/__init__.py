"""Fused lasso solvers built around an augmented Lagrangian method with a
semismooth Newton inner loop, plus first-order baselines and a level-set
driver for residual-constrained problems."""

from .linops import DesignMatrix, apply_B, apply_Bt
from .problem import ProblemData
from .prox import (
    ProxResult,
    conjugate_prox,
    fused_prox,
    fused_prox_scaled,
    penalty_value,
    recover_tv_dual,
    soft_threshold,
    tv_prox,
)
from .jacobian import (
    ActiveFlags,
    JacobianRep,
    build_jacobian,
    classify_active,
    jacobian_mat_vec,
)
from .ssn import SsnParams, ssn_solve
from .alm import AlmParams, SolveReport, kkt_residual, nnz_estimate, primal_objective, ssnal_solve
from .baselines import BaselineParams, admm_solve, apg_solve, ladmm_solve, power_method_norm
from .levelset import levelset_solve, mu_upper_bound, phi_eval
from .io_cli import (
    LibsvmFormatError,
    emit_report,
    generate_synthetic,
    lambda_from_alphas,
    normalize_columns,
    parse_csv_dense,
    parse_libsvm,
    read_solution,
    write_csv,
    write_libsvm,
    write_solution,
)

__version__ = "0.1.0"

__all__ = [
    "DesignMatrix",
    "apply_B",
    "apply_Bt",
    "ProblemData",
    "ProxResult",
    "soft_threshold",
    "tv_prox",
    "recover_tv_dual",
    "fused_prox",
    "fused_prox_scaled",
    "conjugate_prox",
    "penalty_value",
    "ActiveFlags",
    "JacobianRep",
    "classify_active",
    "build_jacobian",
    "jacobian_mat_vec",
    "SsnParams",
    "ssn_solve",
    "AlmParams",
    "SolveReport",
    "ssnal_solve",
    "kkt_residual",
    "primal_objective",
    "nnz_estimate",
    "BaselineParams",
    "admm_solve",
    "ladmm_solve",
    "apg_solve",
    "power_method_norm",
    "levelset_solve",
    "mu_upper_bound",
    "phi_eval",
    "LibsvmFormatError",
    "parse_libsvm",
    "parse_csv_dense",
    "write_libsvm",
    "write_csv",
    "normalize_columns",
    "lambda_from_alphas",
    "generate_synthetic",
    "write_solution",
    "read_solution",
    "emit_report",
    "__version__",
]
