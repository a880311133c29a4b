"""Static SVG figures (optional; needs matplotlib). Output is byte-stable for equal inputs."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Date": None, "Creator": None}


def _save(fig, path):
    with plt.rc_context({"svg.hashsalt": "thermal-spectra", "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def wavefunction_plot(path, x, psi):
    fig, ax = plt.subplots(figsize=(6, 4))
    for n, row in enumerate(psi):
        ax.plot(x, row, lw=1, label=f"n={n}")
    ax.set_xlabel("x")
    ax.set_ylabel(r"$\psi_n(x)$")
    ax.legend(fontsize=7, ncol=2)
    _save(fig, path)


def coefficient_heatmap(path, abs_coeffs):
    fig, ax = plt.subplots(figsize=(5, 5))
    im = ax.imshow(np.asarray(abs_coeffs), cmap="viridis", aspect="auto", origin="upper")
    ax.set_xlabel("state n")
    ax.set_ylabel("basis index j")
    fig.colorbar(im, ax=ax, label=r"$|a_{j,n}|$")
    _save(fig, path)


def correlator_plot(path, corr, fit):
    from .lattice import cosh_model

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(corr.taus, corr.values, corr.errors, fmt=".", ms=3, lw=0.8)
    t = np.linspace(corr.taus[0], corr.taus[-1], 400)
    ax.plot(t, cosh_model(t, fit.A, fit.B, fit.delta_e, corr.beta), lw=1,
            label=f"dE = {fit.delta_e:.3f}")
    ax.set_xlabel(r"$\tau$")
    ax.set_ylabel(r"$C(\tau)$")
    ax.legend()
    _save(fig, path)
