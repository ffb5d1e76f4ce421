"""Test objectives with exact gradients and Hessian-vector products.

Every objective exposes ``eval(theta)``, ``grad(theta)`` and
``hvp(theta, v)``.  The multilayer perceptron computes ``hvp`` with the
R-operator (forward-over-reverse differentiation) so that no ``m x m``
matrix is ever formed.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DimensionMismatchError
from .linalg import SymmetricOperator, as_vector

FD_STEP = np.finfo(np.float64).eps ** (1.0 / 3.0)


@dataclass(frozen=True)
class Objective:
    name: str
    dim: int
    eval: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hvp: Callable[[np.ndarray, np.ndarray], np.ndarray]


def as_hessian_operator(obj, theta):
    """Freeze ``theta`` and expose ``v -> H(theta) v`` as an operator."""
    theta = as_vector(theta, "theta").copy()
    if theta.shape != (obj.dim,):
        raise DimensionMismatchError(f"theta has length {theta.size}, objective dim is {obj.dim}")
    return SymmetricOperator(obj.dim, lambda v: obj.hvp(theta, v), name=f"H[{obj.name}]")


# -- quadratics ------------------------------------------------------------


@dataclass
class QuadraticSpec:
    """``f(theta) = 1/2 theta^T H theta - b^T theta`` with ``H = U diag(eig) U^T``.

    ``rotation_seed=None`` keeps ``U = I``; otherwise ``U`` is a Haar-random
    orthogonal matrix drawn from that seed.
    """

    eigenvalues: Sequence[float]
    rotation_seed: Optional[int] = None
    linear_term: Optional[Sequence[float]] = None


def random_orthogonal(m, seed):
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((m, m)))
    return q * np.sign(np.diag(r))


def make_quadratic(spec, name="quadratic"):
    lam = as_vector(spec.eigenvalues, "eigenvalues").copy()
    m = lam.size
    b = np.zeros(m) if spec.linear_term is None else as_vector(spec.linear_term, "linear_term").copy()
    if b.shape != (m,):
        raise DimensionMismatchError("linear_term length must match the number of eigenvalues")

    if spec.rotation_seed is None:
        def hmul(v):
            return lam * v
    else:
        U = random_orthogonal(m, spec.rotation_seed)
        H = (U * lam) @ U.T
        H = 0.5 * (H + H.T)

        def hmul(v):
            return H @ v

    def f(theta):
        return float(0.5 * np.dot(theta, hmul(theta)) - np.dot(b, theta))

    def grad(theta):
        g = hmul(theta)
        g -= b
        return g

    def hvp(theta, v):
        return hmul(v)

    return Objective(name, m, f, grad, hvp)


def make_diag_plus_rank_one(d, u, b=None, name="diag-rank-one"):
    """Quadratic with Hessian ``diag(d) + u u^T``; every product costs O(m)."""
    d = as_vector(d, "d").copy()
    u = as_vector(u, "u").copy()
    b = np.zeros_like(d) if b is None else as_vector(b, "b").copy()
    if not d.shape == u.shape == b.shape:
        raise DimensionMismatchError("d, u and b must have equal length")

    def hvp(theta, v):
        w = d * v
        w += np.dot(u, v) * u
        return w

    def f(theta):
        return float(0.5 * np.dot(theta, hvp(theta, theta)) - np.dot(b, theta))

    def grad(theta):
        g = hvp(theta, theta)
        g -= b
        return g

    return Objective(name, d.size, f, grad, hvp)


# -- Rosenbrock -------------------------------------------------------------


def make_rosenbrock(m):
    """Chained Rosenbrock on ``m/2`` independent pairs ``(x, y)``.

    ``f = sum 100 (y - x^2)^2 + (1 - x)^2``, minimized at all ones.
    """
    if m < 2 or m % 2:
        raise ValueError("Rosenbrock dimension must be a positive even integer")

    def f(theta):
        x, y = theta[0::2], theta[1::2]
        return float(np.sum(100.0 * (y - x * x) ** 2 + (1.0 - x) ** 2))

    def grad(theta):
        x, y = theta[0::2], theta[1::2]
        r = y - x * x
        g = np.empty_like(theta)
        g[0::2] = -400.0 * x * r - 2.0 * (1.0 - x)
        g[1::2] = 200.0 * r
        return g

    def hvp(theta, v):
        x, y = theta[0::2], theta[1::2]
        vx, vy = v[0::2], v[1::2]
        hxx = 1200.0 * x * x - 400.0 * y + 2.0
        hxy = -400.0 * x
        w = np.empty_like(v)
        w[0::2] = hxx * vx + hxy * vy
        w[1::2] = hxy * vx + 200.0 * vy
        return w

    return Objective("rosenbrock", m, f, grad, hvp)


# -- multilayer perceptron ---------------------------------------------------

XOR_DATASET = [
    ((0.0, 0.0), (0.0,)),
    ((0.0, 1.0), (1.0,)),
    ((1.0, 0.0), (1.0,)),
    ((1.0, 1.0), (0.0,)),
]


@dataclass
class MlpSpec:
    """Fully connected network, tanh on hidden layers and a linear output.

    Parameters are flattened layer by layer; within a layer the weight
    matrix of shape ``(fan_out, fan_in)`` comes first in row-major order,
    followed by the bias vector.  The loss is the mean squared error over
    all samples and output units.
    """

    layer_sizes: Sequence[int]
    dataset: Sequence = field(default_factory=lambda: list(XOR_DATASET))
    activation: str = "tanh"

    def shapes(self):
        sizes = list(self.layer_sizes)
        return [((n_out, n_in), n_out) for n_in, n_out in zip(sizes[:-1], sizes[1:])]

    @property
    def num_params(self):
        return sum(r * c + nb for (r, c), nb in self.shapes())


def unflatten(spec, theta):
    """Split a flat parameter vector into ``[(W, b), ...]`` views."""
    layers = []
    pos = 0
    for (r, c), nb in spec.shapes():
        W = theta[pos:pos + r * c].reshape(r, c)
        pos += r * c
        layers.append((W, theta[pos:pos + nb]))
        pos += nb
    return layers


def make_mlp(spec, name="mlp"):
    sizes = [int(s) for s in spec.layer_sizes]
    if len(sizes) < 2 or min(sizes) < 1:
        raise DimensionMismatchError("layer_sizes needs at least two positive entries")
    if spec.activation != "tanh":
        raise ValueError(f"unsupported activation {spec.activation!r}; only 'tanh' is available")
    if not spec.dataset:
        raise DimensionMismatchError("dataset is empty")
    X = np.array([np.atleast_1d(np.asarray(x, dtype=float)) for x, _ in spec.dataset])
    T = np.array([np.atleast_1d(np.asarray(t, dtype=float)) for _, t in spec.dataset])
    if X.shape[1] != sizes[0] or T.shape[1] != sizes[-1]:
        raise DimensionMismatchError(
            f"dataset dims ({X.shape[1]} in, {T.shape[1]} out) do not match layer sizes {sizes}"
        )
    spec = MlpSpec(sizes, spec.dataset, spec.activation)
    m = spec.num_params
    n_layers = len(sizes) - 1
    loss_scale = 2.0 / T.size

    def forward(theta):
        acts = [X]
        a = X
        for i, (W, b) in enumerate(unflatten(spec, theta)):
            z = a @ W.T + b
            a = np.tanh(z) if i < n_layers - 1 else z
            acts.append(a)
        return acts

    def f(theta):
        y = forward(theta)[-1]
        return float(np.mean((y - T) ** 2))

    def backward(layers, acts, delta):
        g = np.empty(m)
        pos = m
        for i in reversed(range(n_layers)):
            W, b = layers[i]
            a_in = acts[i]
            pos -= b.size
            g[pos:pos + b.size] = delta.sum(axis=0)
            pos -= W.size
            g[pos:pos + W.size] = (delta.T @ a_in).ravel()
            if i > 0:
                delta = (delta @ W) * (1.0 - acts[i] ** 2)
        return g

    def grad(theta):
        layers = unflatten(spec, theta)
        acts = forward(theta)
        return backward(layers, acts, loss_scale * (acts[-1] - T))

    def hvp(theta, v):
        layers = unflatten(spec, theta)
        dirs = unflatten(spec, v)
        acts = forward(theta)

        # forward pass for the directional derivatives R{a}
        r_acts = [np.zeros_like(X)]
        for i in range(n_layers):
            W, _ = layers[i]
            VW, Vb = dirs[i]
            rz = r_acts[i] @ W.T + acts[i] @ VW.T + Vb
            if i < n_layers - 1:
                rz = (1.0 - acts[i + 1] ** 2) * rz
            r_acts.append(rz)

        # backward pass carrying (delta, R{delta}) for each pre-activation
        delta = loss_scale * (acts[-1] - T)
        r_delta = loss_scale * r_acts[-1]
        out = np.empty(m)
        pos = m
        for i in reversed(range(n_layers)):
            W, b = layers[i]
            VW, _ = dirs[i]
            a_in, r_in = acts[i], r_acts[i]
            pos -= b.size
            out[pos:pos + b.size] = r_delta.sum(axis=0)
            pos -= W.size
            out[pos:pos + W.size] = (r_delta.T @ a_in + delta.T @ r_in).ravel()
            if i > 0:
                d_a = delta @ W
                r_d_a = r_delta @ W + delta @ VW
                dphi = 1.0 - a_in ** 2
                r_delta = r_d_a * dphi - d_a * 2.0 * a_in * r_in
                delta = d_a * dphi
        return out

    return Objective(name, m, f, grad, hvp)


# -- finite-difference checks -------------------------------------------------


def fd_gradient(obj, theta):
    """Central differences of ``obj.eval`` with ``h_i = eps^(1/3) (1 + |theta_i|)``."""
    theta = np.array(theta, dtype=float)
    g = np.empty_like(theta)
    for i in range(theta.size):
        h = FD_STEP * (1.0 + abs(theta[i]))
        old = theta[i]
        theta[i] = old + h
        fp = obj.eval(theta)
        theta[i] = old - h
        fm = obj.eval(theta)
        theta[i] = old
        g[i] = (fp - fm) / (2.0 * h)
    return g


def fd_hvp(obj, theta, v):
    """Central differences of ``obj.grad`` along ``v``."""
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    vn = np.linalg.norm(v)
    if vn == 0.0:
        return np.zeros_like(v)
    h = FD_STEP * (1.0 + np.abs(theta).max()) / vn
    return (obj.grad(theta + h * v) - obj.grad(theta - h * v)) / (2.0 * h)


def relative_error(approx, exact):
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    denom = np.linalg.norm(exact)
    diff = np.linalg.norm(approx - exact)
    return float(diff / denom) if denom > 0 else float(diff)


# -- problem registry -----------------------------------------------------------

PROBLEMS = ("quadratic", "saddle", "rosenbrock", "mlp-xor", "diag-rank-one")


def make_problem(name, params=None, seed=0):
    """Build ``(objective, theta0)`` for a registered problem name.

    Recognized ``params`` keys: ``dim``, ``eigenvalues``, ``rotation_seed``,
    ``linear_term``, ``layers``, ``theta0``, ``init_scale``.
    """
    p = dict(params or {})
    rng = np.random.default_rng(seed)

    if name == "quadratic":
        eig = p.get("eigenvalues")
        if eig is None:
            eig = np.linspace(1.0, 10.0, int(p.get("dim", 2)))
        elif "dim" in p and int(p["dim"]) != len(eig):
            raise ConfigError("dim", f"{p['dim']} does not match {len(eig)} eigenvalues")
        obj = make_quadratic(QuadraticSpec(eig, p.get("rotation_seed"), p.get("linear_term")))
        theta0 = rng.standard_normal(obj.dim) * p.get("init_scale", 1.0)
    elif name == "saddle":
        obj = make_quadratic(QuadraticSpec([2.0, -1.0]), name="saddle")
        theta0 = np.array([0.1, 0.1])
    elif name == "rosenbrock":
        dim = int(p.get("dim", 2))
        obj = make_rosenbrock(dim)
        theta0 = np.tile([-1.2, 1.0], dim // 2)
    elif name == "mlp-xor":
        obj = make_mlp(MlpSpec(p.get("layers", [2, 3, 1])), name="mlp-xor")
        theta0 = rng.standard_normal(obj.dim) * p.get("init_scale", 0.5)
    elif name == "diag-rank-one":
        dim = int(p.get("dim", 1000))
        d = rng.uniform(1.0, 4.0, dim) * rng.choice([-1.0, 1.0], dim)
        u = rng.standard_normal(dim) / np.sqrt(dim)
        obj = make_diag_plus_rank_one(d, u, rng.standard_normal(dim))
        theta0 = np.zeros(dim)
    else:
        raise ConfigError("problem", f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}")

    if p.get("theta0") is not None:
        theta0 = as_vector(p["theta0"], "theta0")
        if theta0.shape != (obj.dim,):
            raise ConfigError("theta0", f"expected {obj.dim} entries, got {theta0.size}")
    return obj, np.array(theta0, dtype=float)
