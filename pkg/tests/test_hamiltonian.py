import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from thermal_spectra.basis import BasisSet, QuadratureGrid, legendre_grid
from thermal_spectra.flow import FlowMap, flowed_basis
from thermal_spectra.hamiltonian import (
    HamiltonianMatrix,
    Potential,
    default_grid,
    flow_energy_gradient,
    kinetic_matrix,
    matrix_elements,
    potential_eval,
    variational_energy,
)
from thermal_spectra.vdm import BoltzmannWeights, VariationalDensityMatrix, normalize_columns


def test_potential_values():
    V = Potential("anharmonic")
    assert potential_eval(V, 0.0) == 0.0
    assert potential_eval(V, 2.0) == pytest.approx(-3.0, abs=1e-15)
    assert potential_eval(Potential("harmonic"), 3.0) == 4.5


def test_potential_must_confine():
    for coeffs in [(0.0, 1.0), (0.0, 0.0, -1.0), (0.0, 0.0, 0.0, 1.0)]:
        with pytest.raises(ValueError, match="confining"):
            Potential("polynomial", coeffs)
    assert Potential("polynomial", (0.0, 0.0, 0.0, 0.0, 1.0))(2.0) == 16.0


def test_global_minimum_of_anharmonic():
    V = Potential()
    x0 = V.global_minimum()
    assert abs(V.derivative(x0)) < 1e-12
    assert x0 == pytest.approx(2.383, abs=1e-3)


def test_harmonic_in_hermite_is_diagonal():
    h = matrix_elements(Potential("harmonic"), BasisSet("hermite", 10)).entries
    np.testing.assert_allclose(np.diag(h), np.arange(10) + 0.5, atol=1e-8)
    assert np.max(np.abs(h - np.diag(np.diag(h)))) < 1e-8


def test_free_particle_fourier_kinetic():
    basis = BasisSet("fourier", 9, 10.0)
    t = kinetic_matrix(basis)
    k = np.array([0, 1, 1, 2, 2, 3, 3, 4, 4]) * np.pi / 10
    np.testing.assert_allclose(t, np.diag(0.5 * k * k), atol=1e-15)


def test_kinetic_matrix_matches_derivative_quadrature():
    # independent route: 1/2 int psi_j' psi_k' dx on a fine grid
    for basis in (BasisSet("hermite", 12), BasisSet("fourier", 15, 4.0)):
        lo, hi = basis.domain if basis.family == "fourier" else (-15.0, 15.0)
        grid = legendre_grid(lo, hi, 1200)
        d = basis.evaluate_with_derivatives(grid.nodes, order=1)[1]
        np.testing.assert_allclose(kinetic_matrix(basis), 0.5 * (d * grid.weights) @ d.T, atol=1e-10)


def test_anharmonic_fourier_against_refined_quadrature():
    V = Potential()
    basis = BasisSet("fourier", 40, 10.0)
    h = matrix_elements(V, basis)
    # 10x refinement as a composite rule: 20 panels of 1024 Legendre nodes
    edges = np.linspace(-10, 10, 21)
    panels = [legendre_grid(a, b, 1024) for a, b in zip(edges[:-1], edges[1:])]
    fine_grid = QuadratureGrid(
        np.concatenate([g.nodes for g in panels]), np.concatenate([g.weights for g in panels]), (-10.0, 10.0)
    )
    fine = matrix_elements(V, basis, fine_grid)
    assert np.max(np.abs(h.entries - h.entries.T)) <= 1e-10
    assert np.max(np.abs(h.entries - fine.entries)) < 1e-8


def test_flowed_identity_reproduces_plain_elements():
    V = Potential()
    basis = BasisSet("hermite", 12)
    f = FlowMap.uniform(-10, 10, 40, "affine_plus_sum")
    plain = matrix_elements(V, basis).entries
    flowed = matrix_elements(V, basis, default_grid(basis, f), f).entries
    np.testing.assert_allclose(flowed, plain, atol=1e-9)


def test_asymmetric_matrix_rejected():
    with pytest.raises(ValueError):
        HamiltonianMatrix(np.array([[0.0, 1.0], [0.0, 0.0]]), BasisSet("hermite", 2))


def test_variational_energy_examples():
    H = matrix_elements(Potential("harmonic"), BasisSet("hermite", 10))
    basis = BasisSet("hermite", 10)
    ground = VariationalDensityMatrix(basis, np.eye(10, 3), BoltzmannWeights(np.array([0.0, -800.0, -800.0])))
    assert variational_energy(H, ground) == pytest.approx(0.5, abs=1e-8)
    uniform = VariationalDensityMatrix(basis, np.eye(10, 3), BoltzmannWeights(np.zeros(3)))
    assert variational_energy(H, uniform) == pytest.approx(1.5, abs=1e-8)


def test_variational_energy_brute_force():
    rng = np.random.default_rng(5)
    basis = BasisSet("fourier", 7, 3.0)
    H = matrix_elements(Potential(), basis)
    vdm = VariationalDensityMatrix(basis, normalize_columns(rng.normal(size=(7, 3))), BoltzmannWeights(rng.normal(size=3)))
    p, a, h = vdm.probabilities, vdm.coefficients, H.entries
    brute = sum(p[n] * a[j, n] * a[k, n] * h[j, k] for n in range(3) for j in range(7) for k in range(7))
    assert variational_energy(H, vdm) == pytest.approx(brute, abs=1e-12)
    with pytest.raises(ValueError, match="dimension mismatch"):
        variational_energy(H.entries[:5, :5], vdm)


@pytest.mark.property
@given(c=arrays(float, 40, elements=st.floats(-1, 1)).filter(lambda c: np.linalg.norm(c) > 1e-3))
def test_variational_bound(c, reference_spectra):
    H = _anharmonic_fourier()
    c = c / np.linalg.norm(c)
    assert c @ H @ c >= reference_spectra["anharmonic"]["eigenvalues"][0] - 1e-6


_CACHE = {}


def _anharmonic_fourier():
    if "h" not in _CACHE:
        _CACHE["h"] = matrix_elements(Potential(), BasisSet("fourier", 40, 10.0)).entries
    return _CACHE["h"]


def test_basis_independence_lowest_levels():
    V = Potential()
    herm = np.linalg.eigvalsh(matrix_elements(V, BasisSet("hermite", 40)).entries)[:5]
    four = np.linalg.eigvalsh(_anharmonic_fourier())[:5]
    np.testing.assert_allclose(herm, four, atol=1e-4)


@pytest.mark.property
@pytest.mark.parametrize("variant", ["paper_sum", "affine_plus_sum"])
def test_flow_energy_gradient_matches_finite_difference(variant):
    rng = np.random.default_rng(17)
    V = Potential()
    basis = BasisSet("hermite", 6)
    lo, hi, n = -6.0, 6.0, 12
    base = FlowMap.uniform(lo, hi, n, variant)
    f = base.with_coefficients(base.coefficients + rng.uniform(0, 0.3, n + 1))
    grid = default_grid(basis, f)
    g = rng.normal(size=(6, 6))
    g = g + g.T

    def energy(c):
        return float(np.sum(g * matrix_elements(V, basis, grid, f.with_coefficients(c)).entries))

    analytic = flow_energy_gradient(V, basis, grid, f, g)
    h = 1e-6
    fd = np.array([(energy(f.coefficients + h * e) - energy(f.coefficients - h * e)) / (2 * h) for e in np.eye(n + 1)])
    assert np.max(np.abs(analytic - fd)) <= 1e-5 * np.max(np.abs(fd))


def test_flowed_hamiltonian_symmetric():
    f = FlowMap.uniform(coefficients=np.random.default_rng(0).uniform(0.01, 0.05, 401))
    basis = BasisSet("hermite", 8)
    H = matrix_elements(Potential(), basis, flow=f)
    assert np.max(np.abs(H.entries - H.entries.T)) <= 1e-10
    phi = flowed_basis(basis, f, default_grid(basis, f).nodes, order=0)[0]
    assert phi.shape[0] == 8
