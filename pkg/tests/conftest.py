import numpy as np
import pytest

from kronmde.model import HermitianDysonData, VarianceProfile, make_model


def scalar_data(a, alpha=1.0, scale=1.0, N=1):
    """K = 1 data with a flat profile."""
    a = np.asarray(a, dtype=complex).reshape(-1, 1, 1)
    N = a.shape[0]
    return HermitianDysonData(a=a, alpha=[[[alpha]]], beta=[[[0.0]]], variances=VarianceProfile.flat(N, 1, scale))


def random_data(rng, N, K, ell=2, explicit=True, hermitian_a=True):
    """Random admissible data with an explicit (or flat) profile."""
    alpha = rng.standard_normal((ell, K, K)) + 1j * rng.standard_normal((ell, K, K))
    alpha = (alpha + np.conj(np.swapaxes(alpha, 1, 2))) / 2
    beta = (rng.standard_normal((ell, K, K)) + 1j * rng.standard_normal((ell, K, K))) / 2
    a = rng.standard_normal((N, K, K)) + 1j * rng.standard_normal((N, K, K))
    a = (a + np.conj(np.swapaxes(a, 1, 2))) / 2
    if not hermitian_a:
        a = a - 0.3j * np.eye(K)
    if explicit:
        s = rng.uniform(0, 1, (ell, N, N)) / N
        s = (s + np.swapaxes(s, 1, 2)) / 2
        t = rng.uniform(0, 1, (ell, N, N)) / N
        var = VarianceProfile.explicit(s, t)
    else:
        var = VarianceProfile.flat(N, ell, 1.0)
    return HermitianDysonData(a=a, alpha=alpha, beta=beta, variances=var)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def zero_noise_model(a_tilde, N=None):
    a_tilde = np.asarray(a_tilde, dtype=complex)
    L = a_tilde.shape[-1]
    if a_tilde.ndim == 2:
        N = N or 3
    else:
        N = a_tilde.shape[0]
    return make_model(L, N, beta_tilde=np.zeros((1, L, L)), variances=VarianceProfile.flat(N, 1, 0.0),
                      a_tilde=a_tilde)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
