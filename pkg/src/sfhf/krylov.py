"""Conjugate gradients for symmetric positive (semi-)definite operators."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, IndefiniteOperatorError, NonFiniteError
from .linalg import as_vector

RESIDUAL_REFRESH = 50


@dataclass
class CgResult:
    solution: np.ndarray
    iterations_used: int
    final_relative_residual: float
    converged: bool
    operator_applies: int = 0


def cg_solve(op, b, tol, max_iters, x0=None):
    """Solve ``op x = b`` with unpreconditioned conjugate gradients.

    Parameters
    ----------
    op : SymmetricOperator
        Symmetric positive definite (or semi-definite with ``b`` in range).
    b : array_like
        Right-hand side.
    tol : float
        Target relative residual ``||b - op x|| / ||b||``.
    max_iters : int
        Iteration cap.
    x0 : array_like, optional
        Starting guess, zero when omitted.

    Returns
    -------
    CgResult
        ``final_relative_residual`` is always recomputed explicitly from
        ``b - op x`` at exit.  If the cap is hit, the last iterate (the one
        with the smallest energy-norm error) is returned with
        ``converged=False``.

    Raises
    ------
    IndefiniteOperatorError
        When a search direction has ``p.Ap <= 0``.
    """
    b = as_vector(b, "cg right-hand side")
    if b.shape != (op.dim,):
        raise DimensionMismatchError(f"rhs length {b.size} does not match operator dim {op.dim}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")

    bnorm = np.sqrt(np.dot(b, b))
    if bnorm == 0.0:
        return CgResult(np.zeros_like(b), 0, 0.0, True, 0)

    applies = 0
    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = as_vector(x0, "cg initial guess").copy()
        if x.shape != b.shape:
            raise DimensionMismatchError("x0 and b differ in length")
        r = b - op.apply(x)
        applies += 1

    rr = np.dot(r, r)
    # whether r currently equals b - op(x) computed from scratch
    explicit = True
    p = None
    it = 0

    while True:
        if np.sqrt(rr) / bnorm <= tol:
            if explicit:
                return CgResult(x, it, float(np.sqrt(rr) / bnorm), True, applies)
            r = b - op.apply(x)
            applies += 1
            rr = np.dot(r, r)
            explicit = True
            if np.sqrt(rr) / bnorm <= tol:
                return CgResult(x, it, float(np.sqrt(rr) / bnorm), True, applies)
        if it == max_iters:
            break

        if p is None:
            p = r.copy()
        else:
            p *= rr / rr_old
            p += r
        Ap = op.apply(p)
        applies += 1
        pAp = np.dot(p, Ap)
        if not pAp > 0.0:
            if not np.isfinite(pAp):
                raise NonFiniteError("CG curvature p.Ap is not finite")
            raise IndefiniteOperatorError(
                f"CG breakdown at iteration {it}: p.Ap = {pAp:.3e} <= 0 "
                f"({op.name} is not positive definite)"
            )
        step = rr / pAp
        it += 1
        refresh = it % RESIDUAL_REFRESH == 0
        if not refresh:
            Ap *= step
            r -= Ap
        # Ap is spent; reuse it for step * p
        np.multiply(p, step, out=Ap)
        x += Ap
        if refresh:
            r = b - op.apply(x)
            applies += 1
        explicit = refresh
        rr_old = rr
        rr = np.dot(r, r)
        if not np.isfinite(rr):
            raise NonFiniteError(f"CG residual became non-finite at iteration {it}")

    if not explicit:
        r = b - op.apply(x)
        applies += 1
        rr = np.dot(r, r)
    rel = float(np.sqrt(rr) / bnorm)
    return CgResult(x, it, rel, rel <= tol, applies)
