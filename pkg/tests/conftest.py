import numpy as np
import pytest


def random_orthogonal(m, rng):
    q, r = np.linalg.qr(rng.standard_normal((m, m)))
    return q * np.sign(np.diag(r))


def spd_with_spectrum(lam, rng):
    """Dense ``U diag(lam) U^T`` plus its factors, built with numpy only."""
    lam = np.asarray(lam, dtype=float)
    U = random_orthogonal(lam.size, rng)
    M = (U * lam) @ U.T
    return 0.5 * (M + M.T), U


def random_symmetric(m, rng, lo=-10.0, hi=10.0):
    return spd_with_spectrum(rng.uniform(lo, hi, m), rng)[0]


def dense_sqrt_times(U, lam, v):
    return U @ (np.sqrt(lam) * (U.T @ v))


def rel(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def peak_live_vectors(fn, m):
    """Peak traced allocation during ``fn()``, in units of m float64 vectors.

    Anything allocated before the call (the objective's own data, the
    current point) is not counted.
    """
    import gc
    import tracemalloc

    gc.collect()
    tracemalloc.start()
    try:
        tracemalloc.reset_peak()
        base = tracemalloc.get_traced_memory()[0]
        fn()
        peak = tracemalloc.get_traced_memory()[1]
    finally:
        tracemalloc.stop()
    return (peak - base) / (8.0 * m)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[number])
