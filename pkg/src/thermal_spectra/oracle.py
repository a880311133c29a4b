"""Ground truth: dense Jacobi diagonalisation and closed-form harmonic oscillator results."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import BasisSet, hermite_functions
from .flow import FlowMap, flowed_basis
from .hamiltonian import Potential, matrix_elements


class UnconvergedReferenceError(RuntimeError):
    def __init__(self, msg="unconverged reference"):
        super().__init__(msg)


@dataclass
class SpectrumResult:
    """Eigenvalues (ascending) with basis-coefficient eigenvectors in the columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None
    basis: BasisSet | None = None
    method: str = "oracle"
    diagnostics: dict = field(default_factory=dict)
    flow: FlowMap | None = None
    # in-memory only (training history, final variational state); not serialised
    extras: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=float)
        if np.any(np.diff(self.eigenvalues) < 0):
            raise ValueError("eigenvalues must be ascending")
        if self.eigenvectors is not None:
            self.eigenvectors = np.asarray(self.eigenvectors, dtype=float)

    @property
    def gaps(self) -> np.ndarray:
        return self.eigenvalues - self.eigenvalues[0]

    def wavefunctions(self, x, n_states: int | None = None) -> np.ndarray:
        if self.eigenvectors is None or self.basis is None:
            raise ValueError("spectrum carries no eigenstates")
        k = self.eigenvectors.shape[1] if n_states is None else n_states
        phi = flowed_basis(self.basis, self.flow, x, order=0)[0]
        return self.eigenvectors[:, :k].T @ phi

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "eigenvalues": self.eigenvalues.tolist(),
            "eigenvectors": None if self.eigenvectors is None else self.eigenvectors.tolist(),
            "basis": None if self.basis is None else self.basis.to_dict(),
            "flow": None if self.flow is None else self.flow.to_dict(),
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpectrumResult":
        return cls(
            np.asarray(d["eigenvalues"]),
            None if d.get("eigenvectors") is None else np.asarray(d["eigenvectors"]),
            None if d.get("basis") is None else BasisSet.from_dict(d["basis"]),
            d.get("method", "oracle"),
            d.get("diagnostics", {}),
            None if d.get("flow") is None else FlowMap.from_dict(d["flow"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "SpectrumResult":
        return cls.from_dict(json.loads(Path(path).read_text()))


def jacobi_diagonalize(h, tol: float = 1e-12, max_sweeps: int = 100) -> SpectrumResult:
    """Cyclic Jacobi rotations on a dense symmetric matrix.

    Sweeps until the largest off-diagonal entry is below ``tol`` times
    ``max(1, |h|_F)``.
    """
    a = np.array(h, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-8:
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    threshold = tol * max(1.0, np.linalg.norm(a))
    iu = np.triu_indices(n, 1)
    sweeps = 0
    while True:
        off = np.max(np.abs(a[iu]), initial=0.0)
        if off < threshold:
            break
        if sweeps >= max_sweeps:
            raise RuntimeError("Jacobi iteration did not converge")
        sweeps += 1
        for p in range(n - 1):
            row = np.abs(a[p, p + 1 :])
            for q in np.nonzero(row > 0.1 * threshold)[0] + p + 1:
                apq = a[p, q]
                if abs(apq) <= 0.1 * threshold:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    evals = np.diag(a).copy()
    order = np.argsort(evals, kind="stable")
    vecs = v[:, order]
    # deterministic sign: largest-magnitude component positive
    idx = np.argmax(np.abs(vecs), axis=0)
    vecs = vecs * np.sign(vecs[idx, np.arange(n)])
    return SpectrumResult(evals[order], vecs, method="oracle", diagnostics={"sweeps": sweeps})


def reference_spectrum(
    V: Potential,
    big_m: int = 120,
    n_levels: int = 10,
    check_increment: int = 20,
    certify_tol: float = 1e-7,
) -> SpectrumResult:
    """Lowest ``n_levels`` eigenpairs from a large Hermite basis, certified by
    agreement with a basis ``check_increment`` functions larger."""
    if big_m < 2 * n_levels:
        raise ValueError("big_m must be at least twice the number of levels")
    results = []
    for m in (big_m, big_m + check_increment):
        basis = BasisSet("hermite", m)
        h = matrix_elements(V, basis).entries
        results.append((basis, jacobi_diagonalize(h)))
    (basis, res), (_, check) = results
    diff = np.max(np.abs(res.eigenvalues[:n_levels] - check.eigenvalues[:n_levels]))
    if diff > certify_tol:
        raise UnconvergedReferenceError(f"unconverged reference (max change {diff:.3g})")
    return SpectrumResult(
        res.eigenvalues[:n_levels],
        res.eigenvectors[:, :n_levels],
        basis,
        "oracle",
        {"big_m": big_m, "certification_change": float(diff), "potential": V.to_dict()},
    )


def harmonic_thermal_density(x, y, beta: float):
    """Closed-form normalised thermal density matrix of ``V = x^2/2``."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pref = np.sinh(beta / 2) / np.sqrt(np.pi / 2 * np.sinh(beta))
    return pref * np.exp(-(x * x + y * y) / (2 * np.tanh(beta)) + x * y / np.sinh(beta))


def harmonic_mixture_check(x, y, beta: float, n_terms: int):
    """Partial eigen-sum ``sum_{n < n_terms} exp(-beta E_n) H_n(x) H_n(y) / Z``."""
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    hx = hermite_functions(n_terms, x)[0]
    hy = hermite_functions(n_terms, y)[0]
    # exp(-beta (n + 1/2)) * Z^{-1} with Z = 1 / (2 sinh(beta/2))
    w = np.exp(-beta * np.arange(n_terms)) * (1.0 - np.exp(-beta))
    return np.tensordot(w, hx * hy, axes=1)


def harmonic_position_variance(beta: float) -> float:
    """Thermal ``<x^2>`` of the unit harmonic oscillator."""
    return 0.5 / np.tanh(beta / 2)


def harmonic_correlator(tau, beta: float):
    """Thermal ``<x(0) x(tau)>`` of the unit harmonic oscillator."""
    tau = np.asarray(tau, dtype=float)
    return np.cosh(beta / 2 - tau) / (2 * np.sinh(beta / 2))
