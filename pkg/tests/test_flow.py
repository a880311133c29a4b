import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from thermal_spectra.basis import BasisSet, hermite_function, hermite_functions, trapezoid_grid
from thermal_spectra.flow import (
    DegenerateFlowError,
    FlowMap,
    apply_flow,
    flow_derivative,
    flow_derivative_param_gradient,
    flow_forward,
    flow_param_gradient,
    flowed_basis,
)

FINE = trapezoid_grid(-30.0, 30.0, 24001)


def H(n):
    return lambda x: hermite_function(n, x)


def random_affine(rng, n=20, lo=-4.0, hi=4.0, scale=0.5):
    return FlowMap.uniform(lo, hi, n, "affine_plus_sum", rng.uniform(0, scale, n + 1))


def test_identity_flow():
    f = FlowMap.uniform(variant="affine_plus_sum")
    assert flow_forward(f, 1.7) == pytest.approx(1.7, abs=1e-15)
    assert flow_derivative(f, -3.2) == 1.0
    assert apply_flow(f, H(0), 0.4) == pytest.approx(hermite_function(0, 0.4), abs=1e-15)


def test_single_node_paper_sum():
    f = FlowMap(np.array([0.0]), np.array([2.0]))
    assert flow_forward(f, 0.0) == 0.0
    assert flow_derivative(f, 0.0) == 2.0


def test_two_node_derivative():
    f = FlowMap(np.array([-1.0, 1.0]), np.array([1.0, 1.0]))
    exact = 2.0 / np.cosh(1.0) ** 2
    assert flow_derivative(f, 0.0) == pytest.approx(exact, abs=1e-15)
    assert exact == pytest.approx(0.8399, abs=1e-4)
    h = 1e-6
    fd = (flow_forward(f, h) - flow_forward(f, -h)) / (2 * h)
    assert flow_derivative(f, 0.0) == pytest.approx(fd, rel=1e-8)


def test_degenerate_flow():
    f = FlowMap.uniform(coefficients=np.zeros(401))
    with pytest.raises(DegenerateFlowError, match="degenerate flow"):
        flow_derivative(f, 0.0)
    with pytest.raises(DegenerateFlowError):
        apply_flow(f, H(0), 0.0)


def test_negative_coefficients_rejected():
    with pytest.raises(ValueError):
        FlowMap(np.array([0.0, 1.0]), np.array([1.0, -0.1]))


def test_paper_default_nodes():
    f = FlowMap.uniform()
    assert len(f.nodes) == 401
    assert f.nodes[1] - f.nodes[0] == pytest.approx(0.05)
    # default start is close to the identity in the bulk
    x = np.linspace(-5, 5, 11)
    np.testing.assert_allclose(flow_forward(f, x), x, atol=1e-4)


def test_paper_sum_monotone_on_dense_sweep():
    rng = np.random.default_rng(7)
    f = FlowMap.uniform(coefficients=rng.uniform(0, 0.1, 401))
    y = flow_forward(f, np.linspace(-15, 15, 10_000))
    assert np.all(np.diff(y) > 0)


@pytest.mark.property
@given(arrays(float, 9, elements=st.floats(0, 3)), st.sampled_from(["paper_sum", "affine_plus_sum"]))
def test_monotone_for_any_nonnegative_coefficients(c, variant):
    f = FlowMap.uniform(-2, 2, 8, variant, c)
    y = flow_forward(f, np.linspace(-10, 10, 501))
    assert np.all(np.diff(y) >= 0)


@pytest.mark.property
def test_inner_product_preservation_affine():
    rng = np.random.default_rng(11)
    x = FINE.nodes
    for _ in range(5):
        f = random_affine(rng)
        phi = flowed_basis(BasisSet("hermite", 5), f, x, order=0)[0]
        g = (phi * FINE.weights) @ phi.T
        assert np.max(np.abs(g - np.eye(5))) <= 1e-6


def test_apply_flow_agrees_with_flowed_basis():
    rng = np.random.default_rng(3)
    f = random_affine(rng)
    x = np.linspace(-3, 3, 13)
    phi = flowed_basis(BasisSet("hermite", 4), f, x, order=0)[0]
    for n in range(4):
        np.testing.assert_allclose(phi[n], apply_flow(f, H(n), x), rtol=1e-13, atol=1e-15)


def test_paper_sum_norm_deficit():
    rng = np.random.default_rng(5)
    base = (20 / 800) * np.ones(401)
    f = FlowMap.uniform(coefficients=base * rng.uniform(0.5, 1.5, 401))
    phi = flowed_basis(BasisSet("hermite", 5), f, FINE.nodes, order=0)[0]
    norms = (phi * phi) @ FINE.weights
    assert np.all(norms <= 1 + 1e-9)
    assert np.all(norms >= 1 - 1e-4)


def test_flow_param_gradient_values():
    f = FlowMap.uniform(-2, 2, 8, "paper_sum")
    g = flow_param_gradient(f, f.nodes[3])
    assert g[3] == 0.0
    np.testing.assert_allclose(flow_param_gradient(f, f.nodes[-1] + 50), 1.0, atol=1e-12)
    np.testing.assert_allclose(flow_derivative_param_gradient(f, 0.3), 1 / np.cosh(0.3 - f.nodes) ** 2)


@pytest.mark.property
@given(st.floats(-6, 6), st.integers(0, 8))
def test_flow_param_gradient_matches_finite_difference(x, i):
    f = FlowMap.uniform(-2, 2, 8, "paper_sum")
    h = 1e-6
    up = f.coefficients.copy()
    up[i] += h
    dn = f.coefficients.copy()
    dn[i] -= h
    fd = (flow_forward(f.with_coefficients(up), x) - flow_forward(f.with_coefficients(dn), x)) / (2 * h)
    assert flow_param_gradient(f, x)[i] == pytest.approx(fd, abs=1e-7)


@pytest.mark.property
def test_apply_flow_coefficient_gradient():
    # d/dC_i psi(f) sqrt(f') = psi'(f) t_i sqrt(f') + psi(f) s_i / (2 sqrt(f'))
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        f = random_affine(rng, n=6, scale=1.0)
        n = int(rng.integers(0, 6))
        x = float(rng.uniform(-3, 3))
        i = int(rng.integers(0, 7))
        fx, f1 = f.derivatives(x, order=1)
        psi, dpsi = (v[n] for v in hermite_functions(n + 1, fx, order=1))
        t = flow_param_gradient(f, x)[i]
        s = flow_derivative_param_gradient(f, x)[i]
        analytic = dpsi * t * np.sqrt(f1) + psi * s / (2 * np.sqrt(f1))
        h = 1e-6
        c_up, c_dn = f.coefficients.copy(), f.coefficients.copy()
        c_up[i] += h
        c_dn[i] = max(c_dn[i] - h, 0.0)
        fd = (apply_flow(f.with_coefficients(c_up), H(n), x) - apply_flow(f.with_coefficients(c_dn), H(n), x)) / (
            c_up[i] - c_dn[i]
        )
        worst = max(worst, abs(analytic - fd) / max(abs(analytic), 1e-3))
    assert worst < 1e-5


def test_flowed_basis_derivatives_match_finite_difference():
    rng = np.random.default_rng(9)
    f = random_affine(rng)
    x = np.linspace(-3, 3, 25)
    h = 1e-4
    basis = BasisSet("hermite", 5)
    phi, d1, d2 = flowed_basis(basis, f, x, order=2)
    up, dn = flowed_basis(basis, f, x + h, order=0)[0], flowed_basis(basis, f, x - h, order=0)[0]
    np.testing.assert_allclose(d1, (up - dn) / (2 * h), atol=1e-7)
    np.testing.assert_allclose(d2, (up - 2 * phi + dn) / h**2, atol=1e-5)


@pytest.mark.property
def test_node_count_conserved():
    rng = np.random.default_rng(4)
    f = random_affine(rng, scale=1.0)
    x = np.linspace(-8, 8, 20001)
    phi = flowed_basis(BasisSet("hermite", 6), f, x, order=0)[0]
    for n in range(6):
        row = phi[n][np.abs(phi[n]) > 1e-10]
        assert np.count_nonzero(np.diff(np.sign(row))) == n


def test_flow_round_trip():
    f = FlowMap.uniform(-3, 3, 10, "affine_plus_sum", np.linspace(0, 1, 11))
    g = FlowMap.from_dict(f.to_dict())
    np.testing.assert_array_equal(g.coefficients, f.coefficients)
    assert g.variant == f.variant
