"""Orthonormal single-particle bases and the quadrature grids used to integrate them.

Two families are supported:

* ``hermite``: the Hermite functions, eigenstates of the unit harmonic oscillator,
  orthonormal on the whole real line.
* ``fourier``: the constant / sine / cosine modes of a box ``[-L, L]``, with index 0
  the constant, odd indices sines and even indices cosines.

All functions here are pure and vectorised over ``x``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import special

Family = Literal["hermite", "fourier"]

MAX_HERMITE_ORDER = 256
DEFAULT_RESOLUTION = {"hermite": 256, "fourier": 2048}


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class BasisSet:
    family: Family
    size: int
    half_width: float | None = None

    def __post_init__(self):
        if self.family not in ("hermite", "fourier"):
            raise ValueError(f"unknown basis family {self.family!r}")
        if self.size < 1:
            raise ValueError("basis size must be >= 1")
        if self.family == "fourier":
            if self.half_width is None or self.half_width <= 0:
                raise ValueError("fourier basis needs half_width > 0")
        elif self.size > MAX_HERMITE_ORDER:
            raise OverflowError("basis order overflow")

    @property
    def domain(self) -> tuple[float, float]:
        if self.family == "fourier":
            return (-self.half_width, self.half_width)
        return (-np.inf, np.inf)

    def evaluate(self, x) -> np.ndarray:
        """Values of all basis functions, shape ``(size,) + x.shape``."""
        return self.evaluate_with_derivatives(x, order=0)[0]

    def evaluate_with_derivatives(self, x, order: int = 1) -> tuple[np.ndarray, ...]:
        """Return ``(psi, dpsi, d2psi)`` truncated to ``order + 1`` entries."""
        x = np.asarray(x, dtype=float)
        if self.family == "hermite":
            return hermite_functions(self.size, x, order=order)
        return fourier_modes(self.size, x, self.half_width, order=order)

    def to_dict(self) -> dict:
        d = {"family": self.family, "size": self.size}
        if self.half_width is not None:
            d["half_width"] = self.half_width
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSet":
        return cls(d["family"], int(d["size"]), d.get("half_width"))


@dataclass(frozen=True)
class QuadratureGrid:
    nodes: np.ndarray
    weights: np.ndarray
    domain: tuple[float, float]
    rule: str = field(default="custom")

    def __post_init__(self):
        if self.nodes.shape != self.weights.shape or self.nodes.ndim != 1:
            raise GridError("nodes and weights must be 1-d arrays of equal length")
        if np.any(np.diff(self.nodes) <= 0):
            raise GridError("nodes must be strictly increasing")
        if np.any(self.weights <= 0):
            raise GridError("weights must be positive")

    def integrate(self, values) -> np.ndarray:
        """Integrate along the last axis."""
        return np.asarray(values) @ self.weights

    def __len__(self):
        return len(self.nodes)


def _check_order(n: int) -> None:
    if n < 0:
        raise ValueError("order must be non-negative")
    if n >= MAX_HERMITE_ORDER:
        raise OverflowError("basis order overflow")


def hermite_functions(m: int, x, order: int = 0) -> tuple[np.ndarray, ...]:
    """Normalised Hermite functions ``H_0 .. H_{m-1}`` and optionally derivatives.

    Uses the recurrence on the normalised functions,
    ``H_{n+1} = x sqrt(2/(n+1)) H_n - sqrt(n/(n+1)) H_{n-1}``, which never forms
    factorials. Derivatives use ``H_n' = sqrt(n/2) H_{n-1} - sqrt((n+1)/2) H_{n+1}``
    and ``H_n'' = (x^2 - 2n - 1) H_n``.
    """
    _check_order(m - 1)
    x = np.asarray(x, dtype=float)
    out = np.empty((m + 1,) + x.shape)
    out[0] = np.pi ** -0.25 * np.exp(-0.5 * x * x)
    out[1] = np.sqrt(2.0) * x * out[0]
    for n in range(1, m):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    psi = out[:m]
    result = [psi]
    if order >= 1:
        n = np.arange(m).reshape((m,) + (1,) * x.ndim)
        lower = np.concatenate([np.zeros((1,) + x.shape), out[: m - 1]])
        result.append(np.sqrt(n / 2.0) * lower - np.sqrt((n + 1) / 2.0) * out[1 : m + 1])
    if order >= 2:
        result.append((x * x - 2 * n - 1) * psi)
    return tuple(result)


def hermite_function(n: int, x):
    """Single normalised Hermite function ``H_n(x)``."""
    _check_order(n)
    val = hermite_functions(n + 1, x)[0][n]
    return float(val) if np.ndim(val) == 0 else val


def _fourier_index(i: int) -> tuple[int, str]:
    if i == 0:
        return 0, "const"
    return (i + 1) // 2, ("sin" if i % 2 else "cos")


def fourier_mode(j: int, x: float, L: float) -> float:
    """Mode ``j`` of the box ``[-L, L]``; raises outside the box."""
    if L <= 0:
        raise ValueError("L must be positive")
    if j < 0:
        raise ValueError("mode index must be non-negative")
    if abs(x) > L:
        raise ValueError(f"x={x} outside the box [-{L}, {L}]")
    return float(fourier_modes(j + 1, np.asarray(x, dtype=float), L)[0][j])


def fourier_modes(m: int, x, L: float, order: int = 0) -> tuple[np.ndarray, ...]:
    """All modes ``0 .. m-1`` (and derivatives); identically zero outside the box."""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) <= L
    vals = [np.zeros((m,) + x.shape) for _ in range(order + 1)]
    norm = 1.0 / np.sqrt(L)
    vals[0][0] = 1.0 / np.sqrt(2 * L)
    for i in range(1, m):
        j, kind = _fourier_index(i)
        k = j * np.pi / L
        s, c = np.sin(k * x), np.cos(k * x)
        if kind == "sin":
            seq = (s, k * c, -k * k * s)
        else:
            seq = (c, -k * s, -k * k * c)
        for d in range(order + 1):
            vals[d][i] = norm * seq[d]
    return tuple(np.where(inside, v, 0.0) for v in vals)


def gauss_hermite_grid(resolution: int) -> QuadratureGrid:
    """Gauss-Hermite nodes with weights rescaled by ``exp(x^2)``.

    The rescaled weight is the reciprocal Christoffel function
    ``1 / sum_k H_k(x_i)^2``, evaluated with the stable recurrence so that no
    ``exp(-x^2)`` underflow occurs at large node counts.
    """
    nodes, _ = special.roots_hermite(resolution)
    psi = hermite_functions(resolution, nodes)[0] if resolution <= MAX_HERMITE_ORDER else None
    if psi is None:
        raise OverflowError("basis order overflow")
    weights = 1.0 / np.sum(psi * psi, axis=0)
    return QuadratureGrid(nodes, weights, (-np.inf, np.inf), "gauss-hermite")


def legendre_grid(lo: float, hi: float, resolution: int) -> QuadratureGrid:
    nodes, weights = special.roots_legendre(resolution)
    half = 0.5 * (hi - lo)
    return QuadratureGrid(lo + half * (nodes + 1.0), half * weights, (lo, hi), "gauss-legendre")


def trapezoid_grid(lo: float, hi: float, resolution: int) -> QuadratureGrid:
    nodes = np.linspace(lo, hi, resolution)
    h = (hi - lo) / (resolution - 1)
    weights = np.full(resolution, h)
    weights[[0, -1]] *= 0.5
    return QuadratureGrid(nodes, weights, (lo, hi), "trapezoid")


def _min_points(basis: BasisSet, lo: float, hi: float) -> int:
    """Points needed on ``[lo, hi]`` for 4 per shortest oscillation of the top mode."""
    if basis.family == "fourier":
        top = basis.size // 2
        if top == 0:
            return 2
        wavelength = 2 * basis.half_width / top
    else:
        wavelength = 2 * np.pi / np.sqrt(2 * basis.size + 1)
    return int(np.ceil(4 * (hi - lo) / wavelength))


def make_grid(
    basis: BasisSet,
    resolution: int | None = None,
    rule: str | None = None,
    half_width: float = 12.0,
) -> QuadratureGrid:
    """Quadrature grid adequate for inner products of ``basis`` functions.

    Default rules: Gauss-Hermite (reweighted) for the Hermite family, Gauss-Legendre
    on ``[-L, L]`` for the Fourier family. ``rule`` may be ``"trapezoid"`` (uniform,
    the natural rule for purely periodic integrands) or ``"legendre"``; for the
    Hermite family those rules use the interval ``[-half_width, half_width]``,
    which is what flowed states need.
    """
    if resolution is None:
        resolution = DEFAULT_RESOLUTION[basis.family]
    if resolution < 2:
        raise GridError("under-resolved grid")
    if rule is None:
        rule = "gauss-hermite" if basis.family == "hermite" else "legendre"
    if basis.family == "fourier":
        lo, hi = -basis.half_width, basis.half_width
    else:
        lo, hi = -half_width, half_width

    if rule == "gauss-hermite":
        if basis.family != "hermite":
            raise GridError("gauss-hermite rule only applies to the hermite family")
        if resolution < basis.size:
            raise GridError("under-resolved grid")
        return gauss_hermite_grid(resolution)
    if resolution < _min_points(basis, lo, hi):
        raise GridError("under-resolved grid")
    if rule == "legendre":
        return legendre_grid(lo, hi, resolution)
    if rule == "trapezoid":
        return trapezoid_grid(lo, hi, resolution)
    raise ValueError(f"unknown quadrature rule {rule!r}")


def gram_matrix(basis: BasisSet, grid: QuadratureGrid) -> np.ndarray:
    psi = basis.evaluate(grid.nodes)
    g = (psi * grid.weights) @ psi.T
    return 0.5 * (g + g.T)
