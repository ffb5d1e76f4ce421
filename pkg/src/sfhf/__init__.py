"""Saddle-free Hessian-free optimization.

Computes the saddle-free Newton step ``-alpha |H|^{-1} grad f`` with
Hessian-vector products only: ``|H| g`` comes from an ODE for the square
root of ``H^2`` and the division by ``H^2`` from conjugate gradients.
"""

from .dense import (
    DenseSymMatrix,
    eig_sym,
    matrix_abs,
    matrix_sqrt_psd,
    newton_dense_step,
    sfn_dense_step,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DimensionMismatchError,
    IndefiniteOperatorError,
    NonFiniteError,
    SfhfError,
    SingularMatrixError,
)
from .krylov import CgResult, cg_solve
from .linalg import (
    SymmetricOperator,
    axpy,
    compose_square,
    dot,
    power_iteration_norm,
    shift_blend,
)
from .objectives import (
    MlpSpec,
    Objective,
    QuadraticSpec,
    as_hessian_operator,
    make_mlp,
    make_problem,
    make_quadratic,
    make_rosenbrock,
)
from .optimizers import SfhfConfig, TraceRecord, gd_step, run, sfhf_step
from .sqrt_ode import SqrtApplyConfig, SqrtApplyResult, ode_rhs, sqrt_apply

__version__ = "0.1.0"
