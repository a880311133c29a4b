"""Quantum variational inference: minimise the free energy of a variational density matrix.

    L = sum_n p_n a_n^T H a_n + T sum_n p_n log p_n + c_perp * L_perp

over unit-norm coefficient columns ``a_n``, softmax logits and (optionally) flow
coefficients, with ``H`` re-evaluated on the flowed basis when a flow is present.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .basis import BasisSet, QuadratureGrid
from .flow import FlowMap
from .hamiltonian import (
    HamiltonianMatrix,
    Potential,
    default_grid,
    flow_energy_gradient,
    matrix_elements,
)
from .optim import AdamState, DivergedError, adam_step
from .oracle import SpectrumResult
from .vdm import (
    VariationalDensityMatrix,
    normalize_columns,
    orthogonality_penalty,
    orthogonality_penalty_gradient,
    softmax_backward,
    state_order,
)

log = logging.getLogger(__name__)


@dataclass
class QviConfig:
    temperature: float = 3.0
    n_states: int = 10
    c_perp: float = 1e3
    max_steps: int = 200_000
    learning_rate: float = 1e-3
    basis: BasisSet = field(default_factory=lambda: BasisSet("fourier", 40, 10.0))
    flow: FlowMap | None = None
    init_noise: float = 1e-3
    convergence_tol: float = 1e-10
    convergence_window: int = 500
    log_every: int = 100
    checkpoint_every: int = 0
    # remove the radial part of the coefficient gradient before the Adam step
    project_gradient: bool = True

    def __post_init__(self):
        if self.temperature <= 0 or self.c_perp < 0:
            raise ValueError("temperature must be positive and c_perp non-negative")
        if not 1 <= self.n_states <= self.basis.size:
            raise ValueError("need 1 <= n_states <= basis size")
        if self.max_steps < 0:
            raise ValueError("max_steps must be non-negative")


def _entries(H) -> np.ndarray:
    return H.entries if isinstance(H, HamiltonianMatrix) else np.asarray(H, dtype=float)


def qvi_loss_terms(H, vdm: VariationalDensityMatrix, c_perp: float) -> dict:
    """Energy, ``T sum p log p`` and penalty terms, plus their sum under ``total``."""
    h = _entries(H)
    a = vdm.coefficients
    if h.shape != (a.shape[0], a.shape[0]):
        raise ValueError(f"dimension mismatch: H {h.shape} vs coefficients {a.shape}")
    p = vdm.probabilities
    energies = np.einsum("jn,jk,kn->n", a, h, a)
    energy = float(p @ energies)
    nz = p > 0
    neg_entropy = vdm.weights.temperature * float(np.sum(p[nz] * np.log(p[nz])))
    penalty = c_perp * orthogonality_penalty(a)
    return {
        "energy": energy,
        "neg_entropy": neg_entropy,
        "penalty": penalty,
        "total": energy + neg_entropy + penalty,
    }


def qvi_loss(H, vdm: VariationalDensityMatrix, c_perp: float) -> float:
    return qvi_loss_terms(H, vdm, c_perp)["total"]


def qvi_gradient(
    H,
    vdm: VariationalDensityMatrix,
    c_perp: float,
    potential: Potential | None = None,
    grid: QuadratureGrid | None = None,
) -> dict:
    """Analytic gradient with respect to ``coefficients``, ``logits`` and, if the
    state carries a flow, ``flow`` (its coefficients). The flow term needs the
    potential and the grid on which ``H`` was built."""
    h = _entries(H)
    a = vdm.coefficients
    if h.shape != (a.shape[0], a.shape[0]):
        raise ValueError(f"dimension mismatch: H {h.shape} vs coefficients {a.shape}")
    p = vdm.probabilities
    temp = vdm.weights.temperature
    ha = h @ a
    energies = np.sum(a * ha, axis=0)
    grads = {
        "coefficients": 2.0 * ha * p + c_perp * orthogonality_penalty_gradient(a),
        "logits": softmax_backward(p, energies + temp * (np.log(p) + 1.0)),
    }
    if vdm.flow is not None:
        if potential is None:
            raise ValueError("flow gradient needs the potential")
        grid = default_grid(vdm.basis, vdm.flow) if grid is None else grid
        g = (a * p) @ a.T
        grads["flow"] = flow_energy_gradient(potential, vdm.basis, grid, vdm.flow, g)
    return grads


def project_tangent(coeffs: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Drop the component of each gradient column along its (unit) coefficient column."""
    return grad - coeffs * np.sum(coeffs * grad, axis=0)


def spectrum_from_vdm(vdm: VariationalDensityMatrix, H, method: str, diagnostics: dict) -> SpectrumResult:
    """Gaps ``lambda_n - lambda_0`` from the logits, states ordered by weight."""
    order = state_order(vdm.weights)
    temp = vdm.weights.temperature
    lam = -temp * np.log(vdm.probabilities[order])
    gaps = lam - lam[0]
    a = vdm.coefficients[:, order]
    diag = dict(diagnostics)
    if H is not None:
        energies = np.sum(a * (_entries(H) @ a), axis=0)
        diag["rayleigh_energies"] = energies.tolist()
        diag["rayleigh_gaps"] = (energies - energies[0]).tolist()
    diag["probabilities"] = vdm.probabilities[order].tolist()
    diag["orthogonality_penalty"] = orthogonality_penalty(a)
    return SpectrumResult(gaps, a, vdm.basis, method, diag, vdm.flow)


def write_checkpoint(path, vdm, state: AdamState, step: int) -> None:
    if path is None:
        return
    doc = {"step": step, "vdm": vdm.to_dict(), "optimizer": state.to_dict()}
    Path(path).write_text(json.dumps(doc))


def train_qvi(
    cfg: QviConfig,
    V: Potential,
    seed: int = 0,
    checkpoint_path=None,
    grid: QuadratureGrid | None = None,
) -> SpectrumResult:
    """Adam on the QVI loss; after every step clamp ``C >= 0`` and renormalise columns.

    The returned result carries the gaps, the ordered coefficient matrix and
    diagnostics; ``extras`` holds the training log and the final state.
    """
    rng = np.random.default_rng(seed)
    vdm = VariationalDensityMatrix.initial(
        cfg.basis, cfg.n_states, cfg.temperature, rng, cfg.init_noise, cfg.flow
    )
    flow = cfg.flow
    if flow is not None and grid is None:
        grid = default_grid(cfg.basis, flow)
    H = matrix_elements(V, cfg.basis, grid, flow)
    state = AdamState(learning_rate=cfg.learning_rate)
    history = []
    window_ref = None
    converged = False
    step = 0
    terms = qvi_loss_terms(H, vdm, cfg.c_perp)
    for step in range(1, cfg.max_steps + 1):
        grads = qvi_gradient(H, vdm, cfg.c_perp, V, grid)
        if cfg.project_gradient:
            grads["coefficients"] = project_tangent(vdm.coefficients, grads["coefficients"])
        params = {"coefficients": vdm.coefficients, "logits": vdm.weights.logits}
        if flow is not None:
            params["flow"] = flow.coefficients
        try:
            state, new = adam_step(state, params, grads)
        except DivergedError:
            write_checkpoint(checkpoint_path, vdm, state, step)
            raise
        if flow is not None:
            flow = flow.with_coefficients(np.maximum(new["flow"], 0.0))
            H = matrix_elements(V, cfg.basis, grid, flow)
        vdm = vdm.replace(
            coefficients=normalize_columns(new["coefficients"]),
            weights=replace(vdm.weights, logits=new["logits"]),
            flow=flow,
        )

        terms = qvi_loss_terms(H, vdm, cfg.c_perp)
        if not np.isfinite(terms["total"]):
            write_checkpoint(checkpoint_path, vdm, state, step)
            raise DivergedError()
        if cfg.log_every and step % cfg.log_every == 0:
            history.append({"step": step, **terms, "min_p": float(vdm.probabilities.min())})
        if cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            write_checkpoint(checkpoint_path, vdm, state, step)
        if step % cfg.convergence_window == 0:
            if window_ref is not None and abs(window_ref - terms["total"]) < cfg.convergence_tol:
                converged = True
                break
            window_ref = terms["total"]

    log.info("qvi finished after %d steps (converged=%s), loss %.12g", step, converged, terms["total"])
    diag = {
        "steps": step,
        "converged": converged,
        "final_loss": terms,
        "temperature": cfg.temperature,
        "c_perp": cfg.c_perp,
        "seed": seed,
    }
    result = spectrum_from_vdm(vdm, H, "qvi", diag)
    result.extras.update(history=history, vdm=vdm, hamiltonian=H)
    return result
