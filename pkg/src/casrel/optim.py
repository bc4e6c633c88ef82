"""Adam with bias correction."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params, **hyper):
        state = cls(**hyper)
        for name, value in params.items():
            state.m[name] = np.zeros_like(value)
            state.v[name] = np.zeros_like(value)
        return state


def adam_step(params, grads, state):
    """One Adam update. Returns ``(new_params, new_state)``; inputs are not mutated."""
    missing = [k for k in params if k not in grads]
    if missing:
        raise KeyError(f"no gradient for parameter(s): {', '.join(sorted(missing))}")
    t = state.step + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, parameter has {p.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1.0 - state.beta1) * g if m is None else state.beta1 * m + (1.0 - state.beta1) * g
        v = (1.0 - state.beta2) * (g * g) if v is None else state.beta2 * v + (1.0 - state.beta2) * (g * g)
        new_m[name] = m
        new_v[name] = v
        new_params[name] = p - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    new_state = AdamState(state.lr, state.beta1, state.beta2, state.eps, t, new_m, new_v)
    return new_params, new_state
