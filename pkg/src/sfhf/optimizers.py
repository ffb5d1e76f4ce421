"""Saddle-free Hessian-free steps, baselines, and the outer loop.

The saddle-free Newton step ``-alpha |H|^{-1} g`` is computed in two
matrix-free stages using ``|H|^2 = H^2``:

1. ``y = (H^2 + eps I)^(1/2) g``   via :func:`sfhf.sqrt_ode.sqrt_apply`
2. ``(H^2 + eps I) step = -alpha y`` via :func:`sfhf.krylov.cg_solve`

Both stages only touch ``H`` through Hessian-vector products.
"""

import time
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional

import numpy as np

from .dense import MAX_DIM, newton_dense_step, sfn_dense_step
from .errors import ConvergenceError, DimensionMismatchError, NonFiniteError, SfhfError
from .krylov import cg_solve
from .linalg import add_identity, as_vector, compose_square
from .objectives import as_hessian_operator
from .sqrt_ode import SqrtApplyConfig, sqrt_apply

METHODS = ("gd", "newton-dense", "sfn-dense", "sfhf")


@dataclass(frozen=True)
class SfhfConfig:
    alpha: float = 1.0
    damping: float = 1e-6
    sqrt_cfg: SqrtApplyConfig = field(default_factory=SqrtApplyConfig)
    outer_cg_tol: float = 1e-6
    outer_cg_max_iters: int = 250
    max_outer_iters: int = 100
    grad_tol: float = 1e-8

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.damping < 0:
            raise ValueError("damping must be non-negative")
        if not (self.outer_cg_tol > 0 and self.grad_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.outer_cg_max_iters < 1 or self.max_outer_iters < 1:
            raise ValueError("iteration caps must be >= 1")


@dataclass
class TraceRecord:
    """One completed outer iteration, recorded after the step is taken."""

    iter: int
    f_value: float
    grad_norm: float
    step_norm: float
    inner_cg_iters: int = 0
    sqrt_operator_applies: int = 0
    wall_seconds: float = 0.0


@dataclass
class StepInfo:
    """Work done by a single SFHF step.

    Operator applies are products with ``H^2 + eps I`` (two Hessian-vector
    products each).
    """

    inner_cg_iters: int = 0
    outer_cg_iters: int = 0
    sqrt_operator_applies: int = 0
    outer_operator_applies: int = 0
    sqrt_max_inner_residual: float = 0.0
    outer_relative_residual: float = 0.0
    scale_used: float = 0.0

    @property
    def operator_applies(self):
        return self.sqrt_operator_applies + self.outer_operator_applies


def sfhf_step(obj, theta, cfg, grad=None):
    """Saddle-free Hessian-free step at ``theta``.

    Returns ``(step, info)``.  A zero gradient gives a zero step without any
    Hessian work.
    """
    theta = as_vector(theta, "theta")
    if theta.shape != (obj.dim,):
        raise DimensionMismatchError(f"theta has length {theta.size}, objective dim is {obj.dim}")
    g = obj.grad(theta) if grad is None else grad
    info = StepInfo()
    if not np.any(g):
        return np.zeros_like(theta), info

    B = add_identity(compose_square(as_hessian_operator(obj, theta)), cfg.damping)
    sq = sqrt_apply(B, g, cfg.sqrt_cfg)
    info.sqrt_operator_applies = sq.total_operator_applies
    info.inner_cg_iters = sq.inner_cg_iterations
    info.sqrt_max_inner_residual = sq.max_inner_residual
    info.scale_used = sq.scale_used

    y = sq.result
    y *= -cfg.alpha
    before = B.applications_count
    res = cg_solve(B, y, cfg.outer_cg_tol, cfg.outer_cg_max_iters)
    del y
    info.outer_operator_applies = B.applications_count - before
    info.outer_cg_iters = res.iterations_used
    info.outer_relative_residual = res.final_relative_residual
    if not res.converged:
        raise ConvergenceError(
            f"outer CG on H^2 reached relative residual {res.final_relative_residual:.3e} "
            f"after {res.iterations_used} iterations (tol {cfg.outer_cg_tol:g})"
        )
    if not np.isfinite(res.solution).all():
        raise NonFiniteError("SFHF step is not finite")
    return res.solution, info


def gd_step(obj, theta, alpha, grad=None):
    g = obj.grad(theta) if grad is None else grad
    return -alpha * g


class RunResult(NamedTuple):
    theta: np.ndarray
    trace: List[TraceRecord]
    stop_reason: str
    hvp_calls: int = 0
    error: Optional[str] = None


def _counting(obj):
    counter = [0]

    def hvp(theta, v):
        counter[0] += 1
        return obj.hvp(theta, v)

    return type(obj)(obj.name, obj.dim, obj.eval, obj.grad, hvp), counter


def run(obj, theta0, method, cfg, callback: Optional[Callable] = None):
    """Iterate ``theta <- theta + step`` with the chosen method.

    Stops with ``"converged"`` once ``||grad f|| <= cfg.grad_tol``,
    ``"budget"`` after ``cfg.max_outer_iters`` steps, or ``"failed"`` when a
    step raises; the trace gathered so far is kept in every case.

    ``callback(k, theta, grad, step)`` is invoked before each step is
    applied, with the pre-step point and gradient.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if method in ("newton-dense", "sfn-dense") and obj.dim > MAX_DIM:
        raise DimensionMismatchError(f"{method} requires dim <= {MAX_DIM}, got {obj.dim}")

    counted, hvp_calls = _counting(obj)
    theta = as_vector(theta0, "theta0").copy()
    g = counted.grad(theta)
    trace = []
    stop_reason = "budget"
    error = None

    for k in range(cfg.max_outer_iters):
        if np.linalg.norm(g) <= cfg.grad_tol:
            stop_reason = "converged"
            break
        t0 = time.perf_counter()
        info = StepInfo()
        try:
            if method == "gd":
                step = gd_step(counted, theta, cfg.alpha, grad=g)
            elif method == "newton-dense":
                step = newton_dense_step(counted, theta, cfg.alpha, grad=g)
            elif method == "sfn-dense":
                step = sfn_dense_step(counted, theta, cfg.alpha, grad=g)
            else:
                step, info = sfhf_step(counted, theta, cfg, grad=g)
            if callback is not None:
                callback(k, theta, g, step)
            theta = theta + step
            f = counted.eval(theta)
            g = counted.grad(theta)
            if not (np.isfinite(f) and np.isfinite(g).all()):
                raise NonFiniteError(f"objective became non-finite after iteration {k}")
        except SfhfError as exc:
            stop_reason = "failed"
            error = f"iteration {k}: {exc}"
            break
        trace.append(TraceRecord(
            iter=k,
            f_value=float(f),
            grad_norm=float(np.linalg.norm(g)),
            step_norm=float(np.linalg.norm(step)),
            inner_cg_iters=info.inner_cg_iters + info.outer_cg_iters,
            sqrt_operator_applies=info.sqrt_operator_applies,
            wall_seconds=time.perf_counter() - t0,
        ))
    else:
        if np.linalg.norm(g) <= cfg.grad_tol:
            stop_reason = "converged"

    return RunResult(theta, trace, stop_reason, hvp_calls[0], error)
