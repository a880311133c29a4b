import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thermal_spectra.basis import BasisSet, legendre_grid
from thermal_spectra.hamiltonian import Potential, matrix_elements
from thermal_spectra.oracle import (
    SpectrumResult,
    UnconvergedReferenceError,
    harmonic_correlator,
    harmonic_mixture_check,
    harmonic_position_variance,
    harmonic_thermal_density,
    jacobi_diagonalize,
    reference_spectrum,
)


def cubic_roots(a):
    # trigonometric solution of the characteristic cubic of a symmetric 3x3
    q = np.trace(a) / 3
    p1 = a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2
    p2 = np.sum((np.diag(a) - q) ** 2) + 2 * p1
    p = np.sqrt(p2 / 6)
    b = (a - q * np.eye(3)) / p
    r = np.clip(np.linalg.det(b) / 2, -1.0, 1.0)
    phi = np.arccos(r) / 3
    e1 = q + 2 * p * np.cos(phi)
    e3 = q + 2 * p * np.cos(phi + 2 * np.pi / 3)
    return np.sort([e1, 3 * q - e1 - e3, e3])


def test_diagonal_input():
    res = jacobi_diagonalize(np.diag([3.0, 1.0, 2.0]))
    np.testing.assert_array_equal(res.eigenvalues, [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(np.abs(res.eigenvectors), np.eye(3)[:, [1, 2, 0]])


def test_two_by_two_swap():
    res = jacobi_diagonalize([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(res.eigenvalues, [-1.0, 1.0], atol=1e-15)
    v = res.eigenvectors
    np.testing.assert_allclose(np.abs(v), np.full((2, 2), 1 / np.sqrt(2)), atol=1e-15)
    assert v[0, 0] * v[1, 0] < 0 < v[0, 1] * v[1, 1]


@pytest.mark.property
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_two_by_two_closed_form(a, b, c):
    h = np.array([[a, b], [b, c]])
    mid, rad = (a + c) / 2, np.hypot((a - c) / 2, b)
    np.testing.assert_allclose(jacobi_diagonalize(h).eigenvalues, [mid - rad, mid + rad], atol=1e-10)


@pytest.mark.property
def test_three_by_three_against_cubic_roots():
    rng = np.random.default_rng(21)
    for _ in range(100):
        a = rng.normal(size=(3, 3))
        a = a + a.T
        res = jacobi_diagonalize(a)
        np.testing.assert_allclose(res.eigenvalues, cubic_roots(a), atol=1e-10)
        np.testing.assert_allclose(res.eigenvectors.T @ res.eigenvectors, np.eye(3), atol=1e-8)
        np.testing.assert_allclose(a @ res.eigenvectors, res.eigenvectors * res.eigenvalues, atol=1e-10)


def test_errors():
    with pytest.raises(ValueError, match="not symmetric"):
        jacobi_diagonalize([[0.0, 1.0], [0.0, 0.0]])
    h = np.random.default_rng(0).normal(size=(6, 6))
    with pytest.raises(RuntimeError, match="did not converge"):
        jacobi_diagonalize(h + h.T, max_sweeps=1)
    with pytest.raises(ValueError, match="ascending"):
        SpectrumResult(np.array([1.0, 0.0]))


def test_harmonic_in_hermite_forty():
    h = matrix_elements(Potential("harmonic"), BasisSet("hermite", 40)).entries
    np.testing.assert_allclose(jacobi_diagonalize(h).eigenvalues, np.arange(40) + 0.5, atol=1e-10)


def test_reference_matches_fixture(reference_spectra):
    for name, V in [("anharmonic", Potential()), ("harmonic", Potential("harmonic")),
                    ("quartic", Potential("polynomial", (0.0, 0.0, 0.0, 0.0, 1.0)))]:
        ref = reference_spectrum(V)
        np.testing.assert_allclose(ref.eigenvalues, reference_spectra[name]["eigenvalues"], atol=1e-9)
        assert ref.diagnostics["certification_change"] < 1e-7
    np.testing.assert_allclose(reference_spectra["harmonic"]["eigenvalues"], np.arange(10) + 0.5, atol=1e-9)
    gap = reference_spectra["anharmonic"]["eigenvalues"][1] - reference_spectra["anharmonic"]["eigenvalues"][0]
    assert 1.53 <= gap <= 1.63


def test_reference_needs_room():
    with pytest.raises(ValueError):
        reference_spectrum(Potential(), big_m=15)
    # a basis far too small for a deep double well cannot be certified
    with pytest.raises(UnconvergedReferenceError, match="unconverged reference"):
        reference_spectrum(Potential("polynomial", (0.0, 0.0, -20.0, 0.0, 0.1)), big_m=20, check_increment=20)


def test_reference_states_orthonormal():
    ref = reference_spectrum(Potential("harmonic"), big_m=40)
    v = ref.eigenvectors
    np.testing.assert_allclose(v.T @ v, np.eye(10), atol=1e-8)


def test_thermal_density_examples():
    origin = np.sinh(0.5) / np.sqrt(np.pi / 2 * np.sinh(1.0))
    assert harmonic_thermal_density(0.0, 0.0, 1.0) == pytest.approx(origin, rel=1e-15)
    grid = legendre_grid(-15, 15, 400)
    trace = grid.integrate(harmonic_thermal_density(grid.nodes, grid.nodes, 1.0))
    assert trace == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(ValueError):
        harmonic_thermal_density(0.0, 0.0, 0.0)


@pytest.mark.property
@given(st.floats(-4, 4), st.floats(-4, 4), st.floats(0.1, 20))
def test_thermal_density_symmetric(x, y, beta):
    assert harmonic_thermal_density(x, y, beta) == harmonic_thermal_density(y, x, beta)
    assert harmonic_mixture_check(x, y, beta, 12) == harmonic_mixture_check(y, x, beta, 12)


def test_mixture_partial_sums():
    exact = harmonic_thermal_density(0.3, -0.2, 1.0)
    assert harmonic_mixture_check(0.3, -0.2, 1.0, 40) == pytest.approx(exact, abs=1e-10)
    assert harmonic_mixture_check(0.7, 0.1, 20.0, 1) == pytest.approx(harmonic_thermal_density(0.7, 0.1, 20.0), abs=1e-8)
    # pointwise errors oscillate with the sign of H_n(x) H_n(y); the Hilbert-Schmidt
    # error sum_{n >= N} w_n^2 is the quantity that shrinks monotonically
    grid = legendre_grid(-12, 12, 160)
    x, w = grid.nodes, grid.weights
    rho = harmonic_thermal_density(x[:, None], x[None, :], 1.0)
    ww = w[:, None] * w[None, :]
    errs = [np.sum(ww * (harmonic_mixture_check(x[:, None], x[None, :], 1.0, n) - rho) ** 2) for n in range(1, 16)]
    assert np.all(np.diff(errs) < 0)
    tail = (1 - np.exp(-1.0)) ** 2 * np.exp(-2.0 * np.arange(1, 16)) / (1 - np.exp(-2.0))
    np.testing.assert_allclose(errs, tail, rtol=1e-6)
    with pytest.raises(ValueError):
        harmonic_mixture_check(0.0, 0.0, 1.0, 0)


def test_moment_helpers():
    assert harmonic_position_variance(10.0) == pytest.approx(0.5 / np.tanh(5.0), rel=1e-15)
    # C(0) is the thermal variance, C is symmetric about beta/2
    assert harmonic_correlator(0.0, 3.0) == pytest.approx(harmonic_position_variance(3.0), rel=1e-14)
    assert harmonic_correlator(1.0, 3.0) == pytest.approx(harmonic_correlator(2.0, 3.0), rel=1e-14)
