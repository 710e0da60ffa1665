import numpy as np
import pytest

ACCEPTANCE = []


def positive_real(n, seed, lo=1.0, hi=3.0, skew=1.0):
    """Diagonal in [lo, hi] plus a skew-symmetric part: field of values in
    the strip lo <= Re z <= hi."""
    rng = np.random.default_rng(seed)
    K = rng.standard_normal((n, n))
    return np.diag(np.linspace(lo, hi, n)) + skew * (K - K.T) / np.sqrt(n)


def complex_positive_real(n, seed):
    """Non-Hermitian with real parts of the field of values in [0.2, 3];
    complex entries keep harmonic Ritz values free of conjugate ties."""
    rng = np.random.default_rng(seed)
    S = rng.standard_normal((n, n))
    return positive_real(n, seed, 0.2, 3.0) + 0.5j * (S + S.T) / np.sqrt(n)


def random_matrix(n, seed, shift=3.0):
    rng = np.random.default_rng(seed)
    return shift * np.eye(n) + rng.standard_normal((n, n)) / np.sqrt(n)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def relerr(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance():
    """Record one pass/fail line for the terminal summary."""
    def record(name, passed, detail=''):
        line = '%-4s %s  %s' % ('PASS' if passed else 'FAIL', name, detail)
        ACCEPTANCE.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section('acceptance criteria')
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
