"""Quantum maximum likelihood: fit a variational density matrix to sampled path endpoints.

Endpoint pairs ``(x_i, y_i)`` of open Euclidean paths are draws from
``rho_T(y, x)`` (up to normalisation). The empirical loss is

    L = -(1/N_q) sum_i [ log p_perp + sum_n log(p_n / p_perp) psi_n(y_i) psi_n(x_i) ]
        + c_perp * L_perp

where ``p_perp`` is a fixed weight on the complement of the modelled subspace.
Three families are supported: ``mixture`` (Hermite mixing coefficients),
``mixture_flow`` (mixing plus one flow shared by all basis functions) and
``flow_only`` (unmixed flowed Hermite functions).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .basis import BasisSet
from .flow import FlowMap, flowed_basis
from .hamiltonian import Potential, matrix_elements
from .optim import AdamState, DivergedError, adam_step
from .oracle import SpectrumResult
from .qvi import project_tangent, spectrum_from_vdm, write_checkpoint
from .sampler import ActionConfig, SamplerSettings, sample_open_paths
from .vdm import (
    BoltzmannWeights,
    VariationalDensityMatrix,
    normalize_columns,
    orthogonality_penalty,
    orthogonality_penalty_gradient,
)

log = logging.getLogger(__name__)

Family = Literal["mixture", "mixture_flow", "flow_only"]
FAMILIES: tuple[str, ...] = ("mixture", "mixture_flow", "flow_only")


@dataclass
class QmlConfig:
    beta: float = 1.0
    n_states: int = 5
    c_perp: float = 1e2
    p_perp: float = 1e-6
    batch_size: int = 500
    max_steps: int = 20_000
    learning_rate: float = 1e-3
    # flow coefficients start near 0.025; a shared 1e-3 Adam step jitters them by
    # about 4% per step and swamps the coefficient fit
    flow_learning_rate: float | None = 1e-5
    family: Family = "mixture"
    basis_size: int = 10
    flow_variant: str = "paper_sum"
    flow_range: tuple[float, float] = (-10.0, 10.0)
    flow_intervals: int = 400
    init_noise: float = 1e-3
    log_every: int = 100
    checkpoint_every: int = 0
    project_gradient: bool = True

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown QML family {self.family!r}")
        if self.batch_size < 1 or self.p_perp <= 0 or self.beta <= 0:
            raise ValueError("batch_size >= 1, p_perp > 0 and beta > 0 required")
        if self.flow_learning_rate is not None and self.flow_learning_rate <= 0:
            raise ValueError("flow_learning_rate must be positive")
        if self.n_states > self.basis_size:
            raise ValueError("n_states must not exceed basis_size")

    @property
    def temperature(self) -> float:
        return 1.0 / self.beta

    def make_basis(self) -> BasisSet:
        # flow_only uses exactly one (flowed) Hermite function per state
        m = self.n_states if self.family == "flow_only" else self.basis_size
        return BasisSet("hermite", m)

    def make_flow(self) -> FlowMap | None:
        if self.family == "mixture":
            return None
        lo, hi = self.flow_range
        return FlowMap.uniform(lo, hi, self.flow_intervals, self.flow_variant)


def state_amplitude(vdm: VariationalDensityMatrix, n: int, x) -> np.ndarray:
    """``psi_n(x) = sum_j a[j, n] phi_j(x)`` with ``phi_j`` the (flowed) basis."""
    if not 0 <= n < vdm.n_states:
        raise IndexError("state index out of range")
    phi = flowed_basis(vdm.basis, vdm.flow, x, order=0)[0]
    return np.tensordot(vdm.coefficients[:, n], phi, axes=1)


def _amplitudes(vdm, x):
    phi = flowed_basis(vdm.basis, vdm.flow, x, order=0)[0]
    return phi, vdm.coefficients.T @ phi


def _check_endpoints(endpoints) -> np.ndarray:
    e = np.asarray(endpoints, dtype=float).reshape(-1, 2)
    return e


def qml_loss_terms(vdm: VariationalDensityMatrix, endpoints, c_perp: float, p_perp: float) -> dict:
    """Loss pieces: ``-log p_perp``, the projection term and the penalty; ``total`` is the sum."""
    e = _check_endpoints(endpoints)
    p = vdm.probabilities
    if p.min() <= p_perp:
        log.debug("p_perp %.3g is not below min p_n %.3g", p_perp, p.min())
    w = np.log(p / p_perp)
    if len(e):
        _, px = _amplitudes(vdm, e[:, 0])
        _, py = _amplitudes(vdm, e[:, 1])
        proj = np.mean(px * py, axis=1)
    else:
        proj = np.zeros(vdm.n_states)
    complement = -float(np.log(p_perp))
    projection = -float(w @ proj)
    penalty = c_perp * orthogonality_penalty(vdm.coefficients)
    total = complement + projection + penalty
    if not np.isfinite(total):
        raise DivergedError()
    return {
        "complement": complement,
        "projection": projection,
        "penalty": penalty,
        "total": total,
        "mean_projections": proj,
    }


def qml_empirical_loss(vdm: VariationalDensityMatrix, endpoints, c_perp: float, p_perp: float) -> float:
    return qml_loss_terms(vdm, endpoints, c_perp, p_perp)["total"]


def qml_gradient(vdm: VariationalDensityMatrix, endpoints, c_perp: float, p_perp: float) -> dict:
    """Analytic gradient with respect to ``coefficients``, ``logits`` and ``flow``.

    Endpoints are constants (no differentiation through the sampler).
    """
    e = _check_endpoints(endpoints)
    a = vdm.coefficients
    p = vdm.probabilities
    w = np.log(p / p_perp)
    grads = {"coefficients": c_perp * orthogonality_penalty_gradient(a)}
    nq = len(e)
    if nq == 0:
        grads["logits"] = np.zeros_like(p)
        if vdm.flow is not None:
            grads["flow"] = np.zeros_like(vdm.flow.coefficients)
        return grads

    xs, ys = e[:, 0], e[:, 1]
    if vdm.flow is None:
        phi_x, psi_x = _amplitudes(vdm, xs)
        phi_y, psi_y = _amplitudes(vdm, ys)
    else:
        # one tanh table for both endpoint sets, reused by the flow gradient
        pts = np.concatenate([xs, ys])
        t = np.tanh(pts[:, None] - vdm.flow.nodes)
        u = 1.0 - t * t
        f = t @ vdm.flow.coefficients + vdm.flow.affine * pts
        s = np.sqrt(u @ vdm.flow.coefficients + vdm.flow.affine)
        gv, g1 = vdm.basis.evaluate_with_derivatives(f, order=1)
        phi = gv * s
        psi = a.T @ phi
        phi_x, phi_y = phi[:, :nq], phi[:, nq:]
        psi_x, psi_y = psi[:, :nq], psi[:, nq:]
    proj = np.mean(psi_x * psi_y, axis=1)
    # d/d log p_n = -proj_n, then through log-softmax
    grads["logits"] = -proj + p * proj.sum()
    # sym(R) a_n with R = mean phi(y) phi(x)^T
    r_a = (phi_y @ psi_x.T + phi_x @ psi_y.T) / (2 * nq)
    grads["coefficients"] = grads["coefficients"] - 2.0 * r_a * w

    if vdm.flow is not None:
        # d psi_n(pt)/dC_i = (a_n . psi'(f)) s t_i + (a_n . psi(f)) u_i / (2 s);
        # each point is paired with the amplitude at its partner endpoint
        partner = np.concatenate([psi_y, psi_x], axis=1) * w[:, None]
        alpha = np.sum(partner * (a.T @ g1), axis=0) * s
        beta_ = np.sum(partner * (a.T @ gv), axis=0) / (2 * s)
        grads["flow"] = -(alpha @ t + beta_ @ u) / nq
    return grads


def initial_state(cfg: QmlConfig, rng: np.random.Generator) -> VariationalDensityMatrix:
    basis = cfg.make_basis()
    flow = cfg.make_flow()
    if cfg.family == "flow_only":
        weights = BoltzmannWeights(-np.arange(cfg.n_states, dtype=float), cfg.temperature, cfg.p_perp)
        return VariationalDensityMatrix(basis, np.eye(cfg.n_states), weights, flow)
    return VariationalDensityMatrix.initial(
        basis, cfg.n_states, cfg.temperature, rng, cfg.init_noise, flow, cfg.p_perp
    )


def endpoint_bank(
    V: Potential,
    beta: float,
    n_samples: int,
    n_slices: int = 32,
    seed: int = 0,
    settings: SamplerSettings | None = None,
) -> np.ndarray:
    """Sample ``n_samples`` endpoint pairs from open paths (rounded up to whole sweeps)."""
    cfg = ActionConfig(beta, n_slices, V, "open")
    return sample_open_paths(cfg, n_samples, seed=seed, settings=settings).endpoints


def diagonal_dominance(coeffs) -> float:
    """``sum_n a[n, n]^2 / sum_{j,n} a[j, n]^2``."""
    a = np.asarray(coeffs, dtype=float)
    k = min(a.shape)
    return float(np.sum(np.diag(a[:k, :k]) ** 2) / np.sum(a * a))


def train_qml(
    cfg: QmlConfig,
    V: Potential,
    endpoints: np.ndarray,
    seed: int = 0,
    checkpoint_path=None,
) -> SpectrumResult:
    """Adam on the empirical QML loss with batches cycled (reshuffled per epoch)
    from a pre-generated endpoint bank.

    ``extras`` of the result holds the training log and final state. Diagnostics
    flag ``p_perp_violation`` when ``p_perp >= min p_n`` at the end.
    """
    bank = _check_endpoints(endpoints)
    if len(bank) < cfg.batch_size:
        raise ValueError("endpoint bank smaller than one batch")
    rng = np.random.default_rng(seed)
    vdm = initial_state(cfg, rng)
    learn_coeffs = cfg.family != "flow_only"
    rates = {} if cfg.flow_learning_rate is None else {"flow": cfg.flow_learning_rate}
    state = AdamState(learning_rate=cfg.learning_rate, rates=rates)
    perm = rng.permutation(len(bank))
    cursor = 0
    history = []
    if cfg.batch_size < 100:
        log.warning("batch size %d is small; QML convergence is sensitive to it", cfg.batch_size)
    terms = None
    for step in range(1, cfg.max_steps + 1):
        if cursor + cfg.batch_size > len(bank):
            perm = rng.permutation(len(bank))
            cursor = 0
        batch = bank[perm[cursor : cursor + cfg.batch_size]]
        cursor += cfg.batch_size

        grads = qml_gradient(vdm, batch, cfg.c_perp, cfg.p_perp)
        params = {"logits": vdm.weights.logits}
        if learn_coeffs:
            g = grads["coefficients"]
            if cfg.project_gradient:
                g = project_tangent(vdm.coefficients, g)
            params["coefficients"] = vdm.coefficients
        if vdm.flow is not None:
            params["flow"] = vdm.flow.coefficients
        step_grads = {k: (g if k == "coefficients" else grads[k]) for k in params}
        try:
            state, new = adam_step(state, params, step_grads)
        except DivergedError:
            write_checkpoint(checkpoint_path, vdm, state, step)
            raise
        changes = {"weights": replace(vdm.weights, logits=new["logits"])}
        if learn_coeffs:
            changes["coefficients"] = normalize_columns(new["coefficients"])
        if vdm.flow is not None:
            changes["flow"] = vdm.flow.with_coefficients(np.maximum(new["flow"], 0.0))
        vdm = vdm.replace(**changes)

        if cfg.log_every and step % cfg.log_every == 0:
            terms = qml_loss_terms(vdm, batch, cfg.c_perp, cfg.p_perp)
            history.append({
                "step": step,
                "total": terms["total"],
                "complement": terms["complement"],
                "projection": terms["projection"],
                "penalty": terms["penalty"],
                "l_perp": orthogonality_penalty(vdm.coefficients),
                "min_p": float(vdm.probabilities.min()),
            })
        if cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            write_checkpoint(checkpoint_path, vdm, state, step)

    p_min = float(vdm.probabilities.min())
    if p_min <= cfg.p_perp:
        log.warning("p_perp %.3g >= min p_n %.3g at the end of training", cfg.p_perp, p_min)
    H = matrix_elements(V, vdm.basis, flow=vdm.flow)
    diag = {
        "family": cfg.family,
        "steps": cfg.max_steps,
        "beta": cfg.beta,
        "batch_size": cfg.batch_size,
        "bank_size": int(len(bank)),
        "c_perp": cfg.c_perp,
        "p_perp": cfg.p_perp,
        "p_perp_violation": p_min <= cfg.p_perp,
        "seed": seed,
        "diagonal_dominance": diagonal_dominance(vdm.coefficients),
    }
    result = spectrum_from_vdm(vdm, H, "qml", diag)
    result.extras.update(history=history, vdm=vdm, hamiltonian=H)
    return result

