"""Dense ground truth for small problems.

Symmetric eigendecomposition by cyclic Jacobi rotations, the matrix
functions built on it (absolute value, PSD square root), and the two dense
second-order steps used as baselines and oracles: Newton and saddle-free
Newton.  Everything here is O(m^3) and capped at ``MAX_DIM``.
"""

import numpy as np

from .errors import ConvergenceError, DimensionMismatchError, SingularMatrixError
from .linalg import as_vector

MAX_DIM = 512
SINGULAR_EIG = 1e-10
PSD_CLAMP = 1e-10
PSD_REJECT = 1e-8


class DenseSymMatrix:
    """A small symmetric matrix, symmetrized on construction.

    Construction fails for non-square input, ``m > MAX_DIM``, or an
    asymmetry larger than rounding can explain.
    """

    def __init__(self, entries):
        a = np.array(entries, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise DimensionMismatchError(f"expected a non-empty square matrix, got shape {a.shape}")
        if a.shape[0] > MAX_DIM:
            raise DimensionMismatchError(f"dense oracle is limited to dim <= {MAX_DIM}, got {a.shape[0]}")
        if not np.isfinite(a).all():
            raise ValueError("matrix has non-finite entries")
        scale = max(1.0, float(np.abs(a).max()))
        if np.abs(a - a.T).max() > 1e-8 * scale:
            raise ValueError("matrix is not symmetric")
        self.entries = 0.5 * (a + a.T)

    @property
    def dim(self):
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __repr__(self):
        return f"DenseSymMatrix(dim={self.dim})"


def _as_sym(M):
    return M if isinstance(M, DenseSymMatrix) else DenseSymMatrix(M)


def _round_robin(n):
    """Pairings for one Jacobi sweep: n-1 rounds of disjoint index pairs."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        pairs = [(players[i], players[size - 1 - i]) for i in range(size // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a >= 0 and b >= 0]
        rounds.append((np.array([a for a, _ in pairs]), np.array([b for _, b in pairs])))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def eig_sym(M, tol=1e-14, max_sweeps=60):
    """Eigen-decomposition ``M = U diag(lam) U^T`` by cyclic Jacobi rotations.

    Each sweep visits every off-diagonal pair once, grouped into rounds of
    disjoint pairs so a whole round is applied as one vectorized rotation.
    Iteration stops when the off-diagonal Frobenius mass falls below
    ``tol * ||M||_F``.

    Returns
    -------
    eigenvalues : ndarray, ascending
    eigenvectors : ndarray, columns orthonormal
    """
    a = _as_sym(M).entries.copy()
    n = a.shape[0]
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v
    total = np.linalg.norm(a)
    rounds = _round_robin(n)

    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(a.diagonal()))
        if off <= tol * total or off == 0.0:
            break
        for p, q in rounds:
            apq = a[p, q]
            active = apq != 0.0
            if not active.any():
                continue
            p, q, apq = p[active], q[active], apq[active]
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t[theta == 0.0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # columns then rows: a <- J^T a J
            ap, aq = a[:, p].copy(), a[:, q]
            a[:, p] = c * ap - s * aq
            a[:, q] = s * ap + c * aq
            ap, aq = a[p, :].copy(), a[q, :]
            cc, ss = c[:, None], s[:, None]
            a[p, :] = cc * ap - ss * aq
            a[q, :] = ss * ap + cc * aq
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = v[:, p].copy(), v[:, q]
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
    else:
        raise ConvergenceError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")

    lam = a.diagonal().copy()
    order = np.argsort(lam, kind="stable")
    return lam[order], v[:, order]


def _spectral_apply(U, lam):
    return DenseSymMatrix((U * lam) @ U.T)


def matrix_abs(M):
    """``|M|``: the eigenvalues of ``M`` replaced by their absolute values."""
    lam, U = eig_sym(M)
    return _spectral_apply(U, np.abs(lam))


def matrix_sqrt_psd(M):
    """Principal square root of a positive semi-definite matrix.

    Eigenvalues in ``[-1e-8, 0)`` are treated as rounding noise and clamped
    to zero; anything more negative raises ``ValueError``.
    """
    lam, U = eig_sym(M)
    scale = max(1.0, float(np.abs(lam).max()))
    if lam.min() < -PSD_REJECT * scale:
        raise ValueError(f"matrix is not positive semi-definite (min eigenvalue {lam.min():.3e})")
    return _spectral_apply(U, np.sqrt(np.clip(lam, 0.0, None)))


def materialize_hessian(obj, theta):
    """Dense Hessian from ``m`` Hessian-vector products with basis vectors."""
    theta = as_vector(theta, "theta")
    m = obj.dim
    if m > MAX_DIM:
        raise DimensionMismatchError(f"dense methods are limited to dim <= {MAX_DIM}, got {m}")
    H = np.empty((m, m))
    e = np.zeros(m)
    for i in range(m):
        e[i] = 1.0
        H[:, i] = obj.hvp(theta, e)
        e[i] = 0.0
    return DenseSymMatrix(H)


def _check_invertible(lam, what):
    small = lam[np.abs(lam) <= SINGULAR_EIG]
    if small.size:
        raise SingularMatrixError(f"{what} is singular; near-zero eigenvalues: {small.tolist()}")


def sfn_dense_step(obj, theta, alpha, grad=None):
    """Saddle-free Newton step ``-alpha |H|^{-1} grad f``, computed densely."""
    theta = as_vector(theta, "theta")
    H = materialize_hessian(obj, theta)
    g = obj.grad(theta) if grad is None else grad
    lam, U = eig_sym(H)
    _check_invertible(lam, "|H|")
    return -alpha * (U @ ((U.T @ g) / np.abs(lam)))


def newton_dense_step(obj, theta, alpha, grad=None):
    """Newton step ``-alpha H^{-1} grad f``, computed densely.

    Goes straight to the nearest critical point of the local quadratic model,
    saddles included.
    """
    theta = as_vector(theta, "theta")
    H = materialize_hessian(obj, theta)
    g = obj.grad(theta) if grad is None else grad
    lam, U = eig_sym(H)
    _check_invertible(lam, "H")
    return -alpha * (U @ ((U.T @ g) / lam))
