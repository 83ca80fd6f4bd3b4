"""Adam with bias correction, the trainer behind the loss minimization."""

from dataclasses import dataclass

import numpy as np

from .layers import ParameterSet


@dataclass
class AdamState:
    m: ParameterSet
    v: ParameterSet
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def init(params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        return AdamState(m=ParameterSet.zeros_like(params),
                         v=ParameterSet.zeros_like(params),
                         t=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params, grads, state):
    """One update; returns (new params, new state). Inputs are not mutated."""
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        if not np.isfinite(g).all():
            raise ValueError(f"non-finite gradient in tensor {name}")
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_params[name] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name], new_v[name] = m, v
    return (ParameterSet(new_params),
            AdamState(m=ParameterSet(new_m), v=ParameterSet(new_v), t=t,
                      lr=state.lr, beta1=state.beta1, beta2=state.beta2, eps=state.eps))
