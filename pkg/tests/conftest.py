import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hp2sph.sphgrid import SphCoeffTriangle, eval_ylm

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_real_coeffs(ell_max, rng):
    """Random coefficients of a real field (a_l^{-m} = (-1)^m conj(a_l^m))."""
    out = SphCoeffTriangle.zeros(ell_max)
    for ell in range(ell_max + 1):
        out.data[ell, ell_max] = rng.standard_normal()
        for m in range(1, ell + 1):
            z = rng.standard_normal() + 1j * rng.standard_normal()
            out.data[ell, ell_max + m] = z
            out.data[ell, ell_max - m] = (-1) ** m * np.conj(z)
    return out


def naive_synthesis(coeffs, lam, theta):
    """Double sum of a_l^m Y_l^m over the triangle, one point set at a time."""
    f = np.zeros(np.shape(lam), dtype=complex)
    for ell, m, a in coeffs.items():
        if a != 0:
            f += a * eval_ylm(ell, m, lam, theta)
    return f


def naive_analysis(values, lam, theta, ell_max):
    """(4 pi / N) sum_i conj(Y_l^m(p_i)) f_i by explicit double sum."""
    n = len(values)
    out = SphCoeffTriangle.zeros(ell_max)
    for ell in range(ell_max + 1):
        for m in range(-ell, ell + 1):
            out.data[ell, ell_max + m] = 4 * np.pi / n * np.sum(np.conj(eval_ylm(ell, m, lam, theta)) * values)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is not None and mod.REPORT:
        terminalreporter.section("acceptance")
        for line in mod.REPORT:
            terminalreporter.write_line(line)
