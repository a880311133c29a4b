"""Adam and a central finite-difference gradient checker."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class DivergedError(RuntimeError):
    def __init__(self, msg="diverged"):
        super().__init__(msg)


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    # per-parameter learning rates overriding ``learning_rate``
    rates: dict = field(default_factory=dict)
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.epsilon <= 0 or self.learning_rate <= 0 or any(r <= 0 for r in self.rates.values()):
            raise ValueError("epsilon and learning rates must be positive")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "rates": dict(self.rates),
            "step_count": self.step_count,
            "first_moment": {k: v.tolist() for k, v in self.first_moment.items()},
            "second_moment": {k: v.tolist() for k, v in self.second_moment.items()},
        }


def adam_step(state: AdamState, params: dict, grads: dict) -> tuple[AdamState, dict]:
    """One bias-corrected Adam update over a dict of named arrays.

    The state is updated in place and returned along with new parameter arrays.
    """
    if params.keys() != grads.keys():
        raise ValueError("params and grads must have the same keys")
    for k in params:
        if np.shape(params[k]) != np.shape(grads[k]):
            raise ValueError(f"shape mismatch for {k!r}: {np.shape(params[k])} vs {np.shape(grads[k])}")
        if not np.all(np.isfinite(grads[k])):
            raise DivergedError()
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new = {}
    for k, p in params.items():
        g = np.asarray(grads[k], dtype=float)
        m = state.first_moment.get(k)
        v = state.second_moment.get(k)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.first_moment[k] = m
        state.second_moment[k] = v
        new[k] = p - state.rates.get(k, state.learning_rate) * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return state, new


def finite_diff_gradient(loss: Callable[[np.ndarray], float], params, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of one array."""
    params = np.array(params, dtype=float)
    grad = np.zeros_like(params)
    flat = params.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss(params)
        flat[i] = orig - h
        down = loss(params)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad
