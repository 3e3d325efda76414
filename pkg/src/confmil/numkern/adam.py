from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError
from .ops import ParamStore


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: ParamStore = field(default_factory=dict)
    v: ParamStore = field(default_factory=dict)

    @classmethod
    def fresh(cls, params: ParamStore, lr: float = 1e-3, **kw) -> "AdamState":
        zeros = {k: np.zeros_like(p) for k, p in params.items()}
        return cls(lr=lr, m=zeros, v={k: z.copy() for k, z in zeros.items()}, **kw)


def adam_step(params: ParamStore, grads: ParamStore, state: AdamState, lr: float | None = None):
    """One bias-corrected Adam update.

    Returns new parameter arrays; the moment buffers in ``state`` are
    replaced and ``state.t`` advances by one.
    """
    if grads.keys() != params.keys():
        raise ShapeError(f"gradient keys {sorted(grads)} do not match params {sorted(params)}")
    if not state.m:
        state.m = {k: np.zeros_like(p) for k, p in params.items()}
        state.v = {k: np.zeros_like(p) for k, p in params.items()}
    lr = state.lr if lr is None else lr
    t = state.t + 1
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    out = {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape or state.m[k].shape != p.shape:
            raise ShapeError(f"{k}: param {p.shape}, grad {g.shape}, moment {state.m[k].shape}")
        m = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[k] + (1.0 - state.beta2) * (g * g)
        out[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        state.m[k] = m
        state.v[k] = v
    state.t = t
    return out, state
