"""Lattice baseline: position correlator on periodic paths and a cosh-plus-constant fit.

``C(tau) = <q(0) q(tau)>`` is estimated by averaging over samples and over the
time circle. At low temperature it behaves as ``A cosh(dE (tau - beta/2)) + B``
with ``dE = E_1 - E_0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class AmbiguousFitError(RuntimeError):
    def __init__(self, msg="ambiguous fit"):
        super().__init__(msg)


MIN_PATHS = 100
GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass
class CorrelatorEstimate:
    taus: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    n_samples: int
    beta: float
    block_means: np.ndarray | None = field(default=None, repr=False)

    def reflection_residual(self) -> np.ndarray:
        """``(C(tau_z) - C(beta - tau_z)) / combined error`` for ``z = 1 .. N-1``."""
        c = self.values[1:]
        r = c[::-1]
        err = np.hypot(self.errors[1:], self.errors[1:][::-1])
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(err > 0, (c - r) / err, 0.0)

    def to_rows(self):
        return np.column_stack([self.taus, self.values, self.errors])


def path_correlators(paths) -> np.ndarray:
    """Translation-averaged ``(1/N) sum_z q_z q_{z+k}`` for each path (rows)."""
    q = np.atleast_2d(np.asarray(paths, dtype=float))
    n = q.shape[1]
    fq = np.fft.rfft(q, axis=1)
    return np.fft.irfft(fq * np.conj(fq), n=n, axis=1) / n


def jackknife(block_means: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and jackknife standard error from per-block means (blocks on axis 0)."""
    k = len(block_means)
    total = block_means.sum(axis=0)
    loo = (total - block_means) / (k - 1)
    mean = total / k
    err = np.sqrt((k - 1) / k * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    return mean, err


def correlator_from_samples(per_sample: np.ndarray, beta: float, n_blocks: int = 50) -> CorrelatorEstimate:
    """Block-jackknife estimate from per-sample (or per-sweep) correlators in MCMC order."""
    per_sample = np.asarray(per_sample, dtype=float)
    n, n_slices = per_sample.shape
    n_blocks = min(n_blocks, n)
    if n_blocks < 2:
        raise ValueError("need at least two samples for jackknife errors")
    usable = n - n % n_blocks
    blocks = per_sample[:usable].reshape(n_blocks, -1, n_slices).mean(axis=1)
    mean, err = jackknife(blocks)
    taus = beta / n_slices * np.arange(n_slices)
    return CorrelatorEstimate(taus, mean, err, n, beta, blocks)


def estimate_correlator(paths, beta: float, n_blocks: int = 50) -> CorrelatorEstimate:
    """Correlator of periodic paths given in MCMC order; errors by block jackknife."""
    paths = np.atleast_2d(np.asarray(paths, dtype=float))
    if len(paths) < MIN_PATHS:
        raise ValueError(f"too few paths ({len(paths)} < {MIN_PATHS})")
    return correlator_from_samples(path_correlators(paths), beta, n_blocks)


@dataclass
class CoshFit:
    A: float
    B: float
    delta_e: float
    chi2: float
    dof: int
    covariance: np.ndarray
    window: tuple[float, float]
    ambiguous: bool = False
    delta_e_jackknife_error: float | None = None

    def __post_init__(self):
        if not np.isfinite(self.chi2):
            raise ValueError("non-finite chi2")

    @property
    def delta_e_error(self) -> float:
        return float(np.sqrt(max(self.covariance[2, 2], 0.0)))

    def to_dict(self) -> dict:
        return {
            "A": self.A,
            "B": self.B,
            "delta_e": self.delta_e,
            "delta_e_error": self.delta_e_error,
            "delta_e_jackknife_error": self.delta_e_jackknife_error,
            "chi2": self.chi2,
            "dof": self.dof,
            "chi2_per_dof": self.chi2 / self.dof if self.dof > 0 else float("nan"),
            "covariance": self.covariance.tolist(),
            "window": list(self.window),
            "ambiguous": self.ambiguous,
        }


def cosh_model(tau, A, B, delta_e, beta):
    return A * np.cosh(delta_e * (np.asarray(tau) - beta / 2)) + B


def _linear_ab(x, c, w, delta_e, beta):
    """Weighted least squares for (A, B) at fixed dE; returns (A, B, chi2)."""
    g = np.cosh(delta_e * (x - beta / 2))
    design = np.column_stack([g, np.ones_like(g)])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(design * sw[:, None], c * sw, rcond=None)
    r = c - design @ coef
    return coef[0], coef[1], float(np.sum(w * r * r))


def _golden_min(fn, lo, hi, tol=1e-10, max_iter=200):
    a, b = lo, hi
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = fn(x1), fn(x2)
    for _ in range(max_iter):
        if b - a < tol * max(1.0, abs(a) + abs(b)):
            break
        if f1 < f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = fn(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = fn(x2)
    return (x1, f1) if f1 < f2 else (x2, f2)


def default_window(beta: float) -> tuple[float, float]:
    return (beta / 10, beta - beta / 10)


def _select(corr: CorrelatorEstimate, window):
    lo, hi = default_window(corr.beta) if window is None else window
    if not lo < hi:
        raise ValueError("degenerate fit window")
    tol = 1e-9 * corr.beta
    sel = (corr.taus >= lo - tol) & (corr.taus <= hi + tol)
    if sel.sum() < 5:
        raise ValueError("fit window contains fewer than 5 points")
    return sel, (float(lo), float(hi))


def _profile_fit(x, c, w, beta, scan):
    prof = np.array([_linear_ab(x, c, w, de, beta)[2] for de in scan])
    i = int(np.argmin(prof))
    lo = scan[max(i - 1, 0)]
    hi = scan[min(i + 1, len(scan) - 1)]
    de, chi2 = _golden_min(lambda e: _linear_ab(x, c, w, e, beta)[2], lo, hi)
    return de, chi2, prof


def fit_delta_e(
    corr: CorrelatorEstimate,
    fit_window: tuple[float, float] | None = None,
    scan: np.ndarray | None = None,
    strict: bool = False,
) -> CoshFit:
    """Uncorrelated chi^2 fit of ``A cosh(dE (tau - beta/2)) + B``.

    Profiles over ``dE`` (grid scan, then golden-section refinement) with A, B
    solved by weighted linear least squares. The covariance is the Gauss-Newton
    inverse Hessian at the optimum. If block means are available, a jackknife
    error on ``dE`` is also reported. A second local minimum of the profile
    within one unit of chi^2 of the best flags the fit as ambiguous (raised when
    ``strict``).
    """
    sel, window = _select(corr, fit_window)
    x = corr.taus[sel]
    c = corr.values[sel]
    err = corr.errors[sel]
    if np.any(err <= 0):
        raise ValueError("fit needs strictly positive errors")
    w = 1.0 / err**2
    beta = corr.beta
    if scan is None:
        scan = np.linspace(0.01, 10.0, 2000)
    de, chi2, prof = _profile_fit(x, c, w, beta, scan)
    A, B, _ = _linear_ab(x, c, w, de, beta)

    # other local minima of comparable depth
    interior = np.nonzero((prof[1:-1] < prof[:-2]) & (prof[1:-1] < prof[2:]))[0] + 1
    far = [k for k in interior if abs(scan[k] - de) > 5 * (scan[1] - scan[0])]
    ambiguous = any(prof[k] - chi2 < 1.0 for k in far)
    if ambiguous and strict:
        raise AmbiguousFitError()

    u = x - beta / 2
    g = np.cosh(de * u)
    jac = np.column_stack([g, np.ones_like(g), A * u * np.sinh(de * u)])
    fisher = jac.T @ (w[:, None] * jac)
    try:
        cov = np.linalg.inv(fisher)
    except np.linalg.LinAlgError:
        cov = np.full((3, 3), np.nan)

    jk_err = None
    if corr.block_means is not None and len(corr.block_means) >= 2:
        blocks = corr.block_means[:, sel]
        k = len(blocks)
        loo = (blocks.sum(axis=0) - blocks) / (k - 1)
        # refine around the central value; the jackknife replicas are close to it
        local = np.linspace(max(de - 0.5, 1e-3), de + 0.5, 201)
        reps = np.array([_profile_fit(x, r, w, beta, local)[0] for r in loo])
        jk_err = float(np.sqrt((k - 1) / k * np.sum((reps - reps.mean()) ** 2)))

    return CoshFit(float(A), float(B), float(de), float(chi2), int(len(x) - 3), cov, window,
                   bool(ambiguous), jk_err)
