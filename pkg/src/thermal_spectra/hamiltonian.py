"""Potentials and Hamiltonian matrix elements ``H[j, k] = <j| -1/2 d^2/dx^2 + V |k>``.

Units: hbar = m = k_B = 1. The kinetic term is always evaluated in the symmetric
first-derivative form ``1/2 int psi_j' psi_k' dx``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .basis import BasisSet, QuadratureGrid, make_grid
from .flow import FlowMap, flowed_basis

PotentialKind = Literal["harmonic", "anharmonic", "polynomial"]

_BUILTIN = {
    "harmonic": (0.0, 0.0, 0.5),
    # x^4/16 - x^2/2 - x
    "anharmonic": (0.0, -1.0, -0.5, 0.0, 1.0 / 16.0),
}


@dataclass(frozen=True)
class Potential:
    """Polynomial potential; ``coeffs`` are in ascending powers of x."""

    kind: PotentialKind = "anharmonic"
    coeffs: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind in _BUILTIN:
            object.__setattr__(self, "coeffs", _BUILTIN[self.kind])
        elif self.kind == "polynomial":
            if not self.coeffs:
                raise ValueError("polynomial potential needs coefficients")
            object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        else:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        c = np.trim_zeros(np.asarray(self.coeffs, dtype=float), "b")
        degree = len(c) - 1
        if degree < 2 or degree % 2 or c[-1] <= 0:
            raise ValueError("potential is not confining")

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.coeffs)

    def derivative(self, x):
        d = np.polynomial.polynomial.polyder(self.coeffs)
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), d)

    def global_minimum(self, lo: float = -20.0, hi: float = 20.0) -> float:
        xs = np.linspace(lo, hi, 40001)
        x0 = xs[np.argmin(self(xs))]
        # polish with Newton on V'
        d1 = np.polynomial.polynomial.polyder(self.coeffs)
        d2 = np.polynomial.polynomial.polyder(d1)
        for _ in range(50):
            step = np.polynomial.polynomial.polyval(x0, d1) / np.polynomial.polynomial.polyval(x0, d2)
            x0 -= step
            if abs(step) < 1e-14:
                break
        return float(x0)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "polynomial":
            d["coeffs"] = list(self.coeffs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Potential":
        coeffs = d.get("coeffs")
        return cls(d["kind"], tuple(coeffs) if coeffs is not None else None)


def potential_eval(V: Potential, x):
    return V(x)


@dataclass(frozen=True)
class HamiltonianMatrix:
    entries: np.ndarray
    basis: BasisSet

    def __post_init__(self):
        if np.max(np.abs(self.entries - self.entries.T), initial=0.0) > 1e-10:
            raise ValueError("Hamiltonian matrix is not symmetric")


def kinetic_matrix(basis: BasisSet) -> np.ndarray:
    """Exact ``<j| p^2/2 |k>`` for the unflowed basis."""
    m = basis.size
    if basis.family == "fourier":
        k = np.array([(i + 1) // 2 for i in range(m)]) * np.pi / basis.half_width
        return np.diag(0.5 * k * k)
    # 1/2 p^2 in the Hermite basis: diag (2n+1)/4, off-diag -sqrt((n+1)(n+2))/4
    n = np.arange(m)
    t = np.diag((2 * n + 1) / 4.0)
    off = -np.sqrt((n[:-2] + 1) * (n[:-2] + 2)) / 4.0
    t[n[:-2], n[:-2] + 2] = off
    t[n[:-2] + 2, n[:-2]] = off
    return t


def default_grid(basis: BasisSet, flow: FlowMap | None = None) -> QuadratureGrid:
    if flow is None:
        if basis.family == "hermite":
            return make_grid(basis, max(256, basis.size + 8))
        return make_grid(basis)
    if basis.family == "hermite":
        return make_grid(basis, 1024, rule="legendre", half_width=12.0)
    return make_grid(basis)


def matrix_elements(
    V: Potential,
    basis: BasisSet,
    grid: QuadratureGrid | None = None,
    flow: FlowMap | None = None,
) -> HamiltonianMatrix:
    """Hamiltonian in the (optionally flowed) basis.

    Without a flow the kinetic part is exact and analytic; the potential part is
    integrated on ``grid``. With a flow both parts are integrated on the grid using
    the flowed functions.
    """
    if grid is None:
        grid = default_grid(basis, flow)
    w = grid.weights
    x = grid.nodes
    if flow is None:
        psi = basis.evaluate(x)
        h = kinetic_matrix(basis) + (psi * (w * V(x))) @ psi.T
    else:
        phi, dphi = flowed_basis(basis, flow, x, order=1)
        h = 0.5 * (dphi * w) @ dphi.T + (phi * (w * V(x))) @ phi.T
    h = 0.5 * (h + h.T)
    return HamiltonianMatrix(h, basis)


def flow_energy_gradient(
    V: Potential,
    basis: BasisSet,
    grid: QuadratureGrid,
    flow: FlowMap,
    g: np.ndarray,
) -> np.ndarray:
    """Gradient of ``sum_jk g[j,k] H[j,k]`` with respect to the flow coefficients.

    ``H`` is built from the flowed states ``phi_j = psi_j(f) sqrt(f')`` and the
    derivative uses ``d f/dC_i = tanh(x - x_i)``, ``d f'/dC_i = sech^2(x - x_i)``
    and ``d f''/dC_i = -2 tanh sech^2``.
    """
    x = grid.nodes
    f, f1, f2 = flow.derivatives(x, order=2)
    s = np.sqrt(f1)
    s1 = f2 / (2 * s)
    gv, g1, g2 = basis.evaluate_with_derivatives(f, order=2)
    phi = gv * s
    dphi = g1 * f1 * s + gv * s1
    a0 = g @ phi      # (M, X)
    a1 = g @ dphi
    vx = V(x)
    coeff_t = np.sum(a1 * (g2 * f1 * s + g1 * s1), axis=0) + 2 * vx * np.sum(a0 * g1, axis=0) * s
    coeff_u = (np.sum(a1 * (g1 * (s + f1 / (2 * s)) - gv * s1 / (2 * s * s)), axis=0)
               + vx * np.sum(a0 * gv, axis=0) / s)
    coeff_v = np.sum(a1 * gv, axis=0) / (2 * s)
    t = np.tanh(x[:, None] - flow.nodes)
    u = 1.0 - t * t
    v = -2.0 * t * u
    w = grid.weights
    return (w * coeff_t) @ t + (w * coeff_u) @ u + (w * coeff_v) @ v


def variational_energy(H: HamiltonianMatrix | np.ndarray, vdm) -> float:
    """``sum_n p_n a_n^T H a_n``."""
    h = H.entries if isinstance(H, HamiltonianMatrix) else np.asarray(H)
    a = vdm.coefficients
    if h.shape != (a.shape[0], a.shape[0]):
        raise ValueError(f"dimension mismatch: H {h.shape} vs coefficients {a.shape}")
    energies = np.einsum("jn,jk,kn->n", a, h, a)
    return float(vdm.probabilities @ energies)
