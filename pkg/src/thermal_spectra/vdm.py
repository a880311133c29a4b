"""The variational density matrix ``rho = sum_n p_n |n><n|`` with states expanded in a
basis, ``|n> = sum_j a[j, n] |j>``, and Boltzmann weights from a softmax over logits.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .basis import BasisSet
from .flow import FlowMap


class CollapsedStateError(ValueError):
    def __init__(self, msg="collapsed state"):
        super().__init__(msg)


class SupportMismatchError(ValueError):
    def __init__(self, msg="support mismatch"):
        super().__init__(msg)


def softmax_weights(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def softmax_backward(p: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. probabilities back through the softmax."""
    return p * (grad_p - p @ grad_p)


def normalize_columns(coeffs) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    norms = np.linalg.norm(coeffs, axis=0)
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        raise CollapsedStateError()
    return coeffs / norms


def overlap_matrix(coeffs) -> np.ndarray:
    return coeffs.T @ coeffs


def orthogonality_penalty(coeffs) -> float:
    """Sum over pairs ``n < m`` of the squared overlap of columns ``n`` and ``m``."""
    g = overlap_matrix(np.asarray(coeffs, dtype=float))
    off = g - np.diag(np.diag(g))
    return 0.5 * float(np.sum(off * off))


def orthogonality_penalty_gradient(coeffs) -> np.ndarray:
    g = overlap_matrix(coeffs)
    off = g - np.diag(np.diag(g))
    return 2.0 * coeffs @ off


def entropy_diag(p) -> float:
    p = np.asarray(p, dtype=float)
    nz = p > 0
    return float(-np.sum(p[nz] * np.log(p[nz])))


def qre_diag(p, q) -> float:
    """Relative entropy of commuting density matrices (KL divergence of spectra)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    nz = p > 0
    if np.any(q[nz] <= 0):
        raise SupportMismatchError()
    return float(max(np.sum(p[nz] * np.log(p[nz] / q[nz])), 0.0))


@dataclass
class BoltzmannWeights:
    logits: np.ndarray
    temperature: float = 1.0
    p_perp: float = 1e-6

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=float)
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    @property
    def probabilities(self) -> np.ndarray:
        return softmax_weights(self.logits)

    @property
    def energies(self) -> np.ndarray:
        """``-T log p_n``: variational eigenvalues, defined up to a common constant."""
        return -self.temperature * np.log(self.probabilities)


def eigenvalue_report(weights: BoltzmannWeights) -> np.ndarray:
    """Energy gaps ``lambda_n - lambda_min``, sorted ascending (first entry 0)."""
    p = weights.probabilities
    if np.any(p <= 0):
        raise ValueError("eigenvalue report needs strictly positive weights")
    lam = -weights.temperature * np.log(p)
    return np.sort(lam - lam.min())


def state_order(weights: BoltzmannWeights) -> np.ndarray:
    """Indices of the variational states from lowest to highest energy."""
    return np.argsort(-weights.logits, kind="stable")


@dataclass
class VariationalDensityMatrix:
    basis: BasisSet
    coefficients: np.ndarray
    weights: BoltzmannWeights
    flow: FlowMap | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        m, n = self.coefficients.shape
        if m != self.basis.size:
            raise ValueError(f"coefficient rows {m} != basis size {self.basis.size}")
        if len(self.weights.logits) != n:
            raise ValueError("one logit per state required")

    @property
    def n_states(self) -> int:
        return self.coefficients.shape[1]

    @property
    def probabilities(self) -> np.ndarray:
        return self.weights.probabilities

    @classmethod
    def initial(
        cls,
        basis: BasisSet,
        n_states: int,
        temperature: float = 1.0,
        rng: np.random.Generator | None = None,
        noise: float = 1e-3,
        flow: FlowMap | None = None,
        p_perp: float = 1e-6,
    ) -> "VariationalDensityMatrix":
        """Identity block plus small Gaussian noise, normalised; logits ``-n``."""
        if n_states > basis.size:
            raise ValueError("n_states must not exceed the basis size")
        rng = np.random.default_rng(0) if rng is None else rng
        a = np.eye(basis.size, n_states) + noise * rng.standard_normal((basis.size, n_states))
        weights = BoltzmannWeights(-np.arange(n_states, dtype=float), temperature, p_perp)
        return cls(basis, normalize_columns(a), weights, flow)

    def density_matrix(self) -> np.ndarray:
        """``rho[j, j'] = sum_n p_n a[j, n] a[j', n]`` in the basis."""
        return (self.coefficients * self.probabilities) @ self.coefficients.T

    def replace(self, **changes) -> "VariationalDensityMatrix":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "basis": self.basis.to_dict(),
            "coefficients": self.coefficients.tolist(),
            "logits": self.weights.logits.tolist(),
            "temperature": self.weights.temperature,
            "p_perp": self.weights.p_perp,
            "flow": None if self.flow is None else self.flow.to_dict(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VariationalDensityMatrix":
        flow = None if d.get("flow") is None else FlowMap.from_dict(d["flow"])
        weights = BoltzmannWeights(d["logits"], d["temperature"], d.get("p_perp", 1e-6))
        return cls(BasisSet.from_dict(d["basis"]), np.asarray(d["coefficients"]), weights, flow,
                   d.get("meta", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "VariationalDensityMatrix":
        return cls.from_dict(json.loads(Path(path).read_text()))
