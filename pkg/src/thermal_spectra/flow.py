"""Quantum flows: monotone 1-d maps that act on wavefunctions as
``psi(f(x)) * sqrt(f'(x))``, preserving L2 inner products.

The map is a sum of tanh steps on a uniform sublattice of nodes,
``f(x) = sum_i C_i tanh(x - x_i)`` (``paper_sum``), optionally plus the identity
(``affine_plus_sum``), which makes it a true bijection of the real line.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

Variant = Literal["paper_sum", "affine_plus_sum"]


class DegenerateFlowError(ValueError):
    def __init__(self, msg="degenerate flow"):
        super().__init__(msg)


def _sech2(d):
    # 1 - tanh^2 cancels to 0 beyond |d| ~ 19; this form stays positive
    e = np.exp(-2.0 * np.abs(d))
    return 4.0 * e / (1.0 + e) ** 2


@dataclass(frozen=True)
class FlowMap:
    nodes: np.ndarray
    coefficients: np.ndarray
    variant: Variant = "paper_sum"

    def __post_init__(self):
        if self.variant not in ("paper_sum", "affine_plus_sum"):
            raise ValueError(f"unknown flow variant {self.variant!r}")
        nodes = np.asarray(self.nodes, dtype=float)
        coeffs = np.asarray(self.coefficients, dtype=float)
        if nodes.shape != coeffs.shape or nodes.ndim != 1:
            raise ValueError("nodes and coefficients must be 1-d and equal length")
        if np.any(coeffs < 0):
            raise ValueError("flow coefficients must be non-negative")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def uniform(
        cls,
        lo: float = -10.0,
        hi: float = 10.0,
        n: int = 400,
        variant: Variant = "paper_sum",
        coefficients=None,
    ) -> "FlowMap":
        """Nodes ``x_i = lo + (hi - lo) i / n`` for ``i = 0..n``.

        Default coefficients start the map at (approximately) the identity: zero
        for ``affine_plus_sum``; ``(hi - lo) / (2 n)`` for ``paper_sum``, since each
        tanh step contributes ``2 C_i`` to the total rise and the node spacing is
        ``(hi - lo) / n``.
        """
        nodes = lo + (hi - lo) * np.arange(n + 1) / n
        if coefficients is None:
            c0 = 0.0 if variant == "affine_plus_sum" else (hi - lo) / (2 * n)
            coefficients = np.full(n + 1, c0)
        return cls(nodes, np.asarray(coefficients, dtype=float), variant)

    def with_coefficients(self, coefficients) -> "FlowMap":
        return FlowMap(self.nodes, np.asarray(coefficients, dtype=float), self.variant)

    @property
    def affine(self) -> float:
        return 1.0 if self.variant == "affine_plus_sum" else 0.0

    def _delta(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x[..., None] - self.nodes

    def derivatives(self, x, order: int = 2) -> tuple[np.ndarray, ...]:
        """``(f, f', f'', ...)`` at ``x`` up to ``order`` (at most 3)."""
        x = np.asarray(x, dtype=float)
        d = self._delta(x)
        t = np.tanh(d)
        c = self.coefficients
        out = [t @ c + self.affine * x]
        if order >= 1:
            sech2 = _sech2(d)
            out.append(sech2 @ c + self.affine)
        if order >= 2:
            out.append((-2.0 * sech2 * t) @ c)
        if order >= 3:
            out.append((sech2 * (6.0 * t * t - 2.0)) @ c)
        return tuple(out)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "nodes": self.nodes.tolist(),
            "coefficients": self.coefficients.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FlowMap":
        return cls(np.asarray(d["nodes"]), np.asarray(d["coefficients"]), d["variant"])


def flow_forward(f: FlowMap, x):
    return f.derivatives(x, order=0)[0]


def flow_derivative(f: FlowMap, x):
    if f.variant == "paper_sum" and not np.any(f.coefficients > 0):
        raise DegenerateFlowError()
    return f.derivatives(x, order=1)[1]


def apply_flow(f: FlowMap, psi: Callable, x):
    """``psi(f(x)) * sqrt(f'(x))`` for a wavefunction callable ``psi``."""
    fx = flow_forward(f, x)
    return psi(fx) * np.sqrt(flow_derivative(f, x))


def flow_param_gradient(f: FlowMap, x) -> np.ndarray:
    """``d f(x) / d C_i = tanh(x - x_i)``, shape ``x.shape + (n_nodes,)``."""
    return np.tanh(f._delta(x))


def flow_derivative_param_gradient(f: FlowMap, x) -> np.ndarray:
    """``d f'(x) / d C_i = sech^2(x - x_i)``."""
    return _sech2(f._delta(x))


def flowed_basis(basis, f: FlowMap | None, x, order: int = 1) -> tuple[np.ndarray, ...]:
    """Flowed basis functions ``phi_j(x) = psi_j(f(x)) sqrt(f'(x))`` and x-derivatives.

    Returns ``(phi, dphi, d2phi)`` truncated to ``order + 1`` entries, each of shape
    ``(basis.size,) + x.shape``. With ``f is None`` this is the plain basis.
    """
    x = np.asarray(x, dtype=float)
    if f is None:
        return basis.evaluate_with_derivatives(x, order=order)
    fd = f.derivatives(x, order=order + 1)
    fx, f1 = fd[0], fd[1]
    if np.any(f1 <= 0):
        raise DegenerateFlowError()
    g = basis.evaluate_with_derivatives(fx, order=order)
    s = np.sqrt(f1)
    out = [g[0] * s]
    if order >= 1:
        f2 = fd[2]
        s1 = f2 / (2 * s)
        out.append(g[1] * f1 * s + g[0] * s1)
    if order >= 2:
        f3 = fd[3]
        s2 = f3 / (2 * s) - f2 * f2 / (4 * s**3)
        out.append(g[2] * f1 * f1 * s + g[1] * (f2 * s + 2 * f1 * s1) + g[0] * s2)
    return tuple(out)
