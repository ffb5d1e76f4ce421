"""Matrix-free ``A^(1/2) v`` through an initial value problem.

For an SPD operator ``A`` the curve ``x(t) = (t A + (1 - t) I)^(1/2) v``
solves

    x'(t) = -1/2 (t A + (1 - t) I)^(-1) (I - A) x(t),    x(0) = v,

so integrating from ``t = 0`` to ``t = 1`` yields ``A^(1/2) v``.  Each
derivative evaluation needs one product with ``A`` and one CG solve with
``t A + (1 - t) I``; no matrix is ever stored.

The integration runs classical RK4 with ``rk_steps`` uniform steps in a
stretched time variable ``s`` in [0, 1]:

    t(s) = 1 - w(s)^2,    w(s) = (exp(-K s) - exp(-K)) / (1 - exp(-K)),

with ``K = time_grading``.  Components belonging to a small eigenvalue
``lam`` of the rescaled operator behave like ``sqrt(lam + (1 - t))``, which
has a boundary layer of width ``lam`` at ``t = 1``.  The exponential part of
the map spaces the steps geometrically in ``1 - t`` so a fixed number of
steps resolves several decades of eigenvalues.  Squaring makes ``dt/ds``
vanish at ``s = 1``, so the last stage never solves the nearly singular
system at ``t = 1`` and eigenvalues far below the resolved range come out
too large but never with the wrong sign.  ``time_grading = 0`` selects
plain uniform steps in ``t``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DimensionMismatchError, NonFiniteError
from .krylov import cg_solve
from .linalg import as_vector, power_iteration_norm, scale, shift_blend


@dataclass(frozen=True)
class SqrtApplyConfig:
    rk_steps: int = 20
    inner_tol: float = 1e-8
    inner_max_iters: int = 250
    norm_target: float = 0.9
    norm_safety: float = 1.05
    norm_power_iters: int = 100
    norm_seed: int = 0
    time_grading: float = 4.0

    def __post_init__(self):
        if not 0.0 < self.norm_target < 1.0:
            raise ValueError("norm_target must lie in (0, 1)")
        if self.rk_steps < 1:
            raise ValueError("rk_steps must be >= 1")
        if self.inner_tol <= 0.0:
            raise ValueError("inner_tol must be positive")
        if self.inner_max_iters < 1 or self.norm_power_iters < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.norm_safety < 1.0:
            raise ValueError("norm_safety must be >= 1")
        if self.time_grading < 0.0:
            raise ValueError("time_grading must be >= 0")


@dataclass
class SqrtApplyResult:
    result: np.ndarray
    total_operator_applies: int
    scale_used: float
    rhs_evaluations: int = 0
    inner_cg_iterations: int = 0
    max_inner_residual: float = 0.0


def time_map(s, grading):
    """Return ``(t(s), dt/ds)`` for the stretched integration variable."""
    if grading == 0.0:
        return s, 1.0
    if s >= 1.0:
        return 1.0, 0.0
    denom = -np.expm1(-grading)
    e = np.exp(-grading * s)
    w = (e - np.exp(-grading)) / denom
    dw_ds = -grading * e / denom
    return float(1.0 - w * w), float(-2.0 * w * dw_ds)


def _solve_stage(op_hat, t, x, cfg, guess=None):
    # (t A + (1 - t) I) s = (I - A) x
    b = op_hat.apply(x)
    np.subtract(x, b, out=b)
    res = cg_solve(shift_blend(op_hat, t), b, cfg.inner_tol, cfg.inner_max_iters, x0=guess)
    if not res.converged:
        raise ConvergenceError(
            f"inner CG did not converge at t={t:.6g}: relative residual "
            f"{res.final_relative_residual:.3e} after {res.iterations_used} iterations"
        )
    return res


def ode_rhs(opA, t, x, cfg=SqrtApplyConfig()):
    """Right-hand side ``-1/2 (t A + (1-t) I)^(-1) (I - A) x``.

    ``opA`` should already be rescaled so that its norm is below
    ``cfg.norm_target``.  The linear system is solved by CG to
    ``cfg.inner_tol``; failure to converge raises :class:`ConvergenceError`.
    """
    x = as_vector(x, "ode state")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    res = _solve_stage(opA, t, x, cfg)
    sol = res.solution
    sol *= -0.5
    return sol


def sqrt_apply(opA, v, cfg=SqrtApplyConfig()):
    """Approximate ``A^(1/2) v`` for a symmetric positive semi-definite ``A``.

    The operator is first rescaled by ``c = safety * rho / norm_target``
    where ``rho`` is a power-iteration estimate of its largest eigenvalue,
    the rescaled problem is integrated with RK4, and the result is multiplied
    by ``sqrt(c)``.

    Returns
    -------
    SqrtApplyResult
        ``total_operator_applies`` counts every product with ``opA``, power
        iteration included.
    """
    v = as_vector(v, "v")
    if v.shape != (opA.dim,):
        raise DimensionMismatchError(f"v has length {v.size}, operator dim is {opA.dim}")
    start = opA.applications_count

    rho = cfg.norm_safety * power_iteration_norm(opA, cfg.norm_power_iters, cfg.norm_seed)
    if rho == 0.0:
        return SqrtApplyResult(np.zeros_like(v), opA.applications_count - start, 0.0)
    c = rho / cfg.norm_target
    op_hat = scale(opA, 1.0 / c)

    l = cfg.rk_steps
    h = 1.0 / l
    K = cfg.time_grading
    rhs_count = 0
    cg_iters = 0
    worst = 0.0
    guess = None

    def deriv(s, state):
        nonlocal rhs_count, cg_iters, worst, guess
        t, dt_ds = time_map(s, K)
        if dt_ds == 0.0:
            return np.zeros_like(state)
        res = _solve_stage(op_hat, t, state, cfg, guess)
        rhs_count += 1
        cg_iters += res.iterations_used
        worst = max(worst, res.final_relative_residual)
        guess = res.solution
        return res.solution * (-0.5 * dt_ds)

    x = v.copy()
    stage = np.empty_like(v)
    for j in range(l):
        s0 = j / l
        acc = deriv(s0, x)
        np.multiply(acc, 0.5 * h, out=stage)
        stage += x
        k = deriv(s0 + 0.5 * h, stage)
        np.multiply(k, 0.5 * h, out=stage)
        stage += x
        k *= 2.0
        acc += k
        del k
        k = deriv(s0 + 0.5 * h, stage)
        np.multiply(k, h, out=stage)
        stage += x
        k *= 2.0
        acc += k
        del k
        k = deriv((j + 1) / l, stage)
        acc += k
        del k
        acc *= h / 6.0
        x += acc
        del acc
        if not np.isfinite(x).all():
            raise NonFiniteError(f"ODE state became non-finite at RK step {j}")

    x *= np.sqrt(c)
    return SqrtApplyResult(
        result=x,
        total_operator_applies=opA.applications_count - start,
        scale_used=c,
        rhs_evaluations=rhs_count,
        inner_cg_iterations=cg_iters,
        max_inner_residual=worst,
    )
