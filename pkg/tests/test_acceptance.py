"""Acceptance criteria, one test per criterion.

Each test records a one-line PASS/FAIL verdict that is printed in the
terminal summary (and when this file is executed directly).
"""

import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import dense_sqrt_times, peak_live_vectors, random_symmetric, spd_with_spectrum
from sfhf.dense import matrix_abs, matrix_sqrt_psd, newton_dense_step, sfn_dense_step
from sfhf.linalg import from_matrix
from sfhf.objectives import (
    MlpSpec,
    PROBLEMS,
    QuadraticSpec,
    fd_gradient,
    fd_hvp,
    make_mlp,
    make_problem,
    make_quadratic,
    relative_error,
)
from sfhf.optimizers import SfhfConfig, run, sfhf_step
from sfhf.sqrt_ode import SqrtApplyConfig, sqrt_apply

VERDICTS = {}


def verdict(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
    VERDICTS[number] = line
    print(line)
    assert ok, line


def _quad(eigs, seed):
    return make_quadratic(QuadraticSpec(eigs, rotation_seed=seed))


def _symmetric_corpus():
    rng = np.random.default_rng(1001)
    for _ in range(50):
        yield random_symmetric(int(rng.integers(8, 65)), rng)


def test_criterion_01_abs_squared_equals_square():
    t0 = time.perf_counter()
    worst = 0.0
    for M in _symmetric_corpus():
        A = np.asarray(matrix_abs(M))
        M2 = M @ M
        worst = max(worst, np.linalg.norm(A @ A - M2) / np.linalg.norm(M2))
    elapsed = time.perf_counter() - t0
    verdict(1, worst <= 1e-9 and elapsed < 10.0,
            f"max ||A^2 - M^2||/||M^2|| = {worst:.2e} (<= 1e-9), {elapsed:.1f} s (< 10 s)")


def test_criterion_02_sqrt_of_square_is_abs():
    worst = 0.0
    for M in _symmetric_corpus():
        A = np.asarray(matrix_abs(M))
        S = np.asarray(matrix_sqrt_psd(M @ M))
        worst = max(worst, np.linalg.norm(S - A) / np.linalg.norm(A))
    verdict(2, worst <= 1e-9, f"max ||(M^2)^(1/2) - |M|||/|||M||| = {worst:.2e} (<= 1e-9)")


def _spd_case(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(8, 65))
    cond = 10.0 ** rng.uniform(1.0, 4.0)
    lam = np.r_[1.0, cond, 10.0 ** rng.uniform(0.0, np.log10(cond), m - 2)] * rng.uniform(0.1, 10.0)
    M, U = spd_with_spectrum(lam, rng)
    v = rng.standard_normal(m)
    return M, U, lam, v


def test_criterion_03_ode_square_root_accuracy():
    worst = 0.0
    for seed in range(25):
        M, U, lam, v = _spd_case(seed)
        approx = sqrt_apply(from_matrix(M), v, SqrtApplyConfig(rk_steps=20)).result
        worst = max(worst, relative_error(approx, dense_sqrt_times(U, lam, v)))
    e10, e40 = [], []
    for seed in range(100, 120):
        M, U, lam, v = _spd_case(seed)
        exact = dense_sqrt_times(U, lam, v)
        e10.append(relative_error(sqrt_apply(from_matrix(M), v, SqrtApplyConfig(rk_steps=10)).result, exact))
        e40.append(relative_error(sqrt_apply(from_matrix(M), v, SqrtApplyConfig(rk_steps=40)).result, exact))
    ok = worst <= 1e-4 and np.mean(e40) <= np.mean(e10)
    verdict(3, ok, f"l=20 max rel err {worst:.2e} (<= 1e-4); mean err l=40 {np.mean(e40):.2e} "
                   f"vs l=10 {np.mean(e10):.2e}")


def test_criterion_04_sfhf_matches_dense_sfn():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(25):
        rng = np.random.default_rng(2000 + seed)
        m = int(rng.integers(4, 65))
        lam = rng.uniform(0.1, 5.0, m) * rng.choice([-1.0, 1.0], m)
        lam[:2] = [-abs(lam[0]), abs(lam[1])]  # always mixed sign
        q = _quad(lam, seed)
        th = rng.standard_normal(m)
        alpha = float(rng.uniform(0.1, 1.0))
        step, _ = sfhf_step(q, th, SfhfConfig(alpha=alpha, damping=0.0))
        worst = max(worst, relative_error(step, sfn_dense_step(q, th, alpha)))
    elapsed = time.perf_counter() - t0
    verdict(4, worst <= 1e-3 and elapsed < 60.0,
            f"max rel err vs -alpha|H|^-1 g = {worst:.2e} (<= 1e-3), {elapsed:.1f} s (< 60 s)")


def test_criterion_05_convex_agreement_with_newton():
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(3000 + seed)
        m = int(rng.integers(4, 65))
        q = _quad(rng.uniform(0.1, 10.0, m), seed)
        th = rng.standard_normal(m)
        step, _ = sfhf_step(q, th, SfhfConfig(alpha=1.0, damping=0.0))
        worst = max(worst, relative_error(step, newton_dense_step(q, th, 1.0)))
    verdict(5, worst <= 1e-3, f"max rel err vs Newton step = {worst:.2e} (<= 1e-3)")


def test_criterion_06_saddle_escape_contrast():
    q = _quad([2.0, -1.0], None)
    th0 = np.array([0.1, 0.1])
    newton = run(q, th0, "newton-dense", SfhfConfig(alpha=1.0))
    sfhf = run(q, th0, "sfhf", SfhfConfig(alpha=0.5, max_outer_iters=50))
    f = np.array([q.eval(th0)] + [r.f_value for r in sfhf.trace])
    below = np.nonzero(f[1:] < -1.0)[0]
    f_newton = q.eval(newton.theta)
    ok = f_newton == 0.0 and below.size > 0 and bool(np.all(np.diff(f) <= 0))
    first = int(below[0]) if below.size else None
    verdict(6, ok, f"Newton final f = {f_newton:.3g}; SFHF f < -1 at iteration {first} "
                   f"(<= 49), monotone = {bool(np.all(np.diff(f) <= 0))}")


BENCHMARKS = [
    ("quadratic", {"dim": 32, "eigenvalues": list(np.linspace(-5.0, 5.0, 32)), "rotation_seed": 1}, 0.5, 30),
    ("saddle", {}, 0.5, 50),
    ("rosenbrock", {"dim": 4}, 0.5, 60),
    ("mlp-xor", {}, 0.05, 20),
    ("mlp-xor", {}, 0.3, 20),
    ("diag-rank-one", {"dim": 2000}, 0.5, 20),
]


def test_criterion_07_descent_on_every_step():
    checked, violations = 0, []
    for name, params, alpha, iters in BENCHMARKS:
        obj, th0 = make_problem(name, params, seed=7)
        cfg = SfhfConfig(alpha=alpha, damping=1e-6, max_outer_iters=iters)

        def check(k, theta, g, step):
            nonlocal checked
            if np.linalg.norm(g) > cfg.grad_tol:
                checked += 1
                if not g @ step < 0:
                    violations.append((name, k, float(g @ step)))

        res = run(obj, th0, "sfhf", cfg, callback=check)
        assert res.stop_reason != "failed", res.error
    verdict(7, checked > 0 and not violations,
            f"{checked} steps over {len(BENCHMARKS)} runs, {len(violations)} with grad.step >= 0")


def test_criterion_08_r_operator():
    net = make_mlp(MlpSpec([2, 3, 1]))
    rng = np.random.default_rng(8)
    worst_fd, worst_sym = 0.0, 0.0
    for _ in range(10):
        th = rng.standard_normal(net.dim) * 0.5
        v = rng.standard_normal(net.dim)
        worst_fd = max(worst_fd, relative_error(net.hvp(th, v), fd_hvp(net, th, v)))
        u, w = rng.standard_normal(net.dim), rng.standard_normal(net.dim)
        a, b = u @ net.hvp(th, w), w @ net.hvp(th, u)
        worst_sym = max(worst_sym, abs(a - b) / max(abs(a), abs(b)))
    verdict(8, worst_fd <= 1e-4 and worst_sym <= 1e-9,
            f"hvp vs finite differences {worst_fd:.2e} (<= 1e-4), symmetry {worst_sym:.2e} (<= 1e-9)")


def _step_seconds(m, cfg, repeats=5):
    """Best-of-``repeats`` wall time of one step on the size-``m`` problem."""
    obj, th = make_problem("diag-rank-one", {"dim": m}, seed=0)
    g = obj.grad(th)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        sfhf_step(obj, th, cfg, grad=g)
        best = min(best, time.perf_counter() - t0)
    return best


def test_criterion_09_cost_structure():
    cfg = SfhfConfig()
    sc = cfg.sqrt_cfg
    k_cap = max(sc.inner_max_iters, cfg.outer_cg_max_iters)
    # explicit exit residual plus one refresh per 50 outer iterations
    constant = 2 + k_cap // 50
    bound = sc.norm_power_iters + 4 * sc.rk_steps * (k_cap + 2) + k_cap + constant

    obj, th = make_problem("diag-rank-one", {"dim": 10_000}, seed=0)
    calls = [0]
    hvp = obj.hvp

    def counted(theta, v):
        calls[0] += 1
        return hvp(theta, v)

    counted_obj = type(obj)(obj.name, obj.dim, obj.eval, obj.grad, counted)
    _, info = sfhf_step(counted_obj, th, cfg)
    applies = info.operator_applies
    tally_ok = calls[0] == 2 * applies and applies <= bound

    peaks = [peak_live_vectors(lambda: sfhf_step(o, t, cfg, grad=o.grad(t)), m)
             for m in (10_000, 100_000)
             for o, t in [make_problem("diag-rank-one", {"dim": m}, seed=0)]]
    memory_ok = max(peaks) <= 16

    t_small = _step_seconds(10_000, cfg)
    t_large = _step_seconds(100_000, cfg)
    ratio = t_large / t_small
    verdict(9, tally_ok and memory_ok and ratio <= 15.0,
            f"(a) {applies} applies <= bound {bound}, hvp = 2x applies: {calls[0] == 2 * applies}; "
            f"(b) peak {max(peaks):.1f} vectors (<= 16); (c) time ratio {ratio:.1f} (<= 15)")


def test_criterion_10_deterministic_csv(tmp_path):
    config = tmp_path / "run.toml"
    config.write_text('problem = "mlp-xor"\nmethod = "sfhf"\nseed = 7\nalpha = 0.05\nmax_outer_iters = 8\n')
    texts = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        proc = subprocess.run([sys.executable, "-m", "sfhf", "run", str(config), "--out", str(out)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        texts.append([line.rsplit(",", 1)[0] for line in out.read_text().splitlines()])
    verdict(10, texts[0] == texts[1] and len(texts[0]) == 9,
            f"two CLI runs, {len(texts[0]) - 1} rows each, identical apart from wall clock: {texts[0] == texts[1]}")


def test_criterion_11_gradient_checks():
    params = {"quadratic": {"dim": 16, "rotation_seed": 2, "linear_term": list(np.linspace(-1, 1, 16))},
              "rosenbrock": {"dim": 8}, "diag-rank-one": {"dim": 40}}
    rng = np.random.default_rng(11)
    worst = {}
    for name in PROBLEMS:
        obj, _ = make_problem(name, params.get(name, {}), seed=11)
        worst[name] = max(
            relative_error(obj.grad(th), fd_gradient(obj, th))
            for th in (rng.standard_normal(obj.dim) for _ in range(20))
        )
    verdict(11, max(worst.values()) <= 1e-5,
            "max rel err " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " (<= 1e-5)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
