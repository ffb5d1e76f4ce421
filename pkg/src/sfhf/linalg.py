"""Dense vectors, matrix-free symmetric operators and power iteration.

Vectors are plain 1-D ``float64`` numpy arrays.  Every operator built here is
a :class:`SymmetricOperator` that keeps a tally of how many times it has been
applied, so callers can reason about cost in operator applications instead of
wall time.
"""

import numpy as np

from .errors import ConvergenceError, DimensionMismatchError, NonFiniteError


def as_vector(x, name="vector"):
    """Return ``x`` as a finite 1-D float64 array (no copy when possible)."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DimensionMismatchError(f"{name} must be a non-empty 1-D array, got shape {v.shape}")
    check_finite(v, name)
    return v


def check_finite(v, name="vector"):
    if not np.isfinite(v).all():
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return v


def _check_dims(u, w):
    if u.shape != w.shape:
        raise DimensionMismatchError(f"dimension mismatch: {u.shape[0]} vs {w.shape[0]}")


def dot(u, w):
    """Inner product of two vectors of equal length."""
    u = np.asarray(u, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    _check_dims(u, w)
    return float(np.dot(u, w))


def norm(u):
    return float(np.sqrt(np.dot(u, u)))


def axpy(a, x, y):
    """Return ``a * x + y`` as a new vector."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_dims(x, y)
    with np.errstate(over="ignore", invalid="ignore"):
        out = x * a
        out += y
    return check_finite(out, "axpy result")


class SymmetricOperator:
    """A symmetric linear map known only through its action on vectors.

    Parameters
    ----------
    dim : int
        Dimension ``m`` of the space the operator acts on.
    fn : callable
        ``fn(v) -> w`` computing the product.  It must not modify ``v``.
    name : str, optional
        Label used in error messages.

    Notes
    -----
    ``applications_count`` is mutable state, so a single instance should be
    driven by one thread at a time.
    """

    def __init__(self, dim, fn, name="op"):
        if int(dim) < 1:
            raise ValueError("operator dimension must be positive")
        self.dim = int(dim)
        self._fn = fn
        self.name = name
        self.applications_count = 0

    def apply(self, v):
        if v.shape != (self.dim,):
            raise DimensionMismatchError(
                f"{self.name}: expected vector of length {self.dim}, got shape {v.shape}"
            )
        w = self._fn(v)
        self.applications_count += 1
        if w.shape != (self.dim,):
            raise DimensionMismatchError(f"{self.name}: apply returned shape {w.shape}")
        return check_finite(w, f"{self.name} output")

    __matmul__ = apply

    def __repr__(self):
        return f"SymmetricOperator(name={self.name!r}, dim={self.dim}, applies={self.applications_count})"


def from_matrix(M, name="matrix"):
    """Wrap a dense symmetric matrix as an operator (tests and small demos)."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {M.shape}")
    return SymmetricOperator(M.shape[0], lambda v: M @ v, name=name)


def diagonal(d, name="diag"):
    d = as_vector(d, "diagonal")
    return SymmetricOperator(d.size, lambda v: d * v, name=name)


def identity(dim):
    return SymmetricOperator(dim, lambda v: v.copy(), name="I")


def compose_square(op):
    """Operator ``v -> op(op(v))``; each apply costs two applies of ``op``."""

    def fn(v):
        return op.apply(op.apply(v))

    return SymmetricOperator(op.dim, fn, name=f"({op.name})^2")


def shift_blend(op, t):
    """Operator ``v -> t * op(v) + (1 - t) * v`` for ``t`` in [0, 1]."""
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"blend parameter t must lie in [0, 1], got {t}")
    s = 1.0 - t

    def fn(v):
        w = op.apply(v)
        w *= t
        w += s * v
        return w

    return SymmetricOperator(op.dim, fn, name=f"blend({op.name}, t={t:g})")


def scale(op, c):
    """Operator ``v -> c * op(v)``."""
    c = float(c)

    def fn(v):
        w = op.apply(v)
        w *= c
        return w

    return SymmetricOperator(op.dim, fn, name=f"{c:g}*{op.name}")


def add_identity(op, eps):
    """Operator ``v -> op(v) + eps * v`` (Tikhonov shift)."""
    eps = float(eps)
    if eps == 0.0:
        return op

    def fn(v):
        w = op.apply(v)
        w += eps * v
        return w

    return SymmetricOperator(op.dim, fn, name=f"{op.name}+{eps:g}I")


def power_iteration_norm(op, iters, seed=0):
    """Estimate the largest eigenvalue of a positive semi-definite operator.

    Runs ``iters`` steps of normalized power iteration from a start vector
    drawn from ``numpy.random.default_rng(seed)`` and returns the Rayleigh
    quotient of the last iterate.  For PSD operators that quotient never
    exceeds the spectral norm and is non-decreasing in ``iters``.

    Callers that need an upper bound should inflate the result by a safety
    factor.  Exactly ``iters`` applications of ``op`` are made unless the
    operator annihilates an iterate, in which case ``0.0`` is returned early.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.dim)
    vv = np.dot(v, v)
    if vv == 0.0:
        # re-seed once from an independent stream
        v = np.random.default_rng([seed, 1]).standard_normal(op.dim)
        vv = np.dot(v, v)
        if vv == 0.0:
            raise ConvergenceError("power iteration start vector is zero")
    v /= np.sqrt(vv)

    rho = 0.0
    for _ in range(iters):
        w = op.apply(v)
        rho = np.dot(v, w) / np.dot(v, v)
        ww = np.dot(w, w)
        if ww == 0.0:
            return 0.0
        if not np.isfinite(rho) or not np.isfinite(ww):
            raise NonFiniteError("power iteration produced a non-finite iterate")
        w /= np.sqrt(ww)
        v = w
    return float(rho)
