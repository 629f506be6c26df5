"""SGD-with-momentum and Adam parameter updates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractError
from .tensor import Tensor


@dataclass
class OptimizerState:
    """Update rule plus per-parameter moment buffers.

    Buffers are aligned index-for-index with the parameter list the state was
    built for; ``optimizer_step`` rejects mismatched shapes.
    """

    kind: str = "adam"  # "adam" | "sgd"
    lr: float = 0.001
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], kind: str = "adam", **kw) -> "OptimizerState":
        if kind not in ("adam", "sgd"):
            raise ContractError(f"unknown optimizer kind {kind!r}")
        state = cls(kind=kind, **kw)
        if state.lr <= 0:
            raise ContractError(f"learning rate must be positive, got {state.lr}")
        state.m = [np.zeros(p.data.shape) for p in params]
        state.v = [np.zeros(p.data.shape) for p in params] if kind == "adam" else []
        return state


def optimizer_step(state: OptimizerState, params: Sequence[Tensor]) -> None:
    """Apply one update to every parameter, then clear their gradients."""
    if len(params) != len(state.m):
        raise ContractError(
            f"optimizer state holds {len(state.m)} buffers but got {len(params)} params"
        )
    for i, p in enumerate(params):
        if p.grad is None:
            raise ContractError(f"parameter {i} has no gradient; run backward first")
        if p.grad.shape != p.data.shape:
            raise ContractError(f"parameter {i}: grad shape {p.grad.shape} != {p.data.shape}")
        if state.m[i].shape != p.data.shape:
            raise ContractError(f"parameter {i} does not match optimizer buffers")
    state.step_count += 1
    t = state.step_count
    for i, p in enumerate(params):
        g = p.grad
        if state.kind == "sgd":
            state.m[i] = state.momentum * state.m[i] + g
            p.data -= state.lr * state.m[i]
        else:
            state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
            state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
            m_hat = state.m[i] / (1.0 - state.beta1 ** t)
            v_hat = state.v[i] / (1.0 - state.beta2 ** t)
            p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        p.grad = None
