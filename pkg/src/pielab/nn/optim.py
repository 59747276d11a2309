from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParamSet


@dataclass
class SGDState:
    velocity: dict[str, np.ndarray] = field(default_factory=dict)
    steps: int = 0


def fresh_state(params: ParamSet) -> SGDState:
    return SGDState({n: np.zeros_like(v) for n, v in params.items()}, 0)


def opt_step(params: ParamSet, grads: dict[str, np.ndarray], mask, state: SGDState,
             lr: float, momentum: float = 0.9) -> tuple[ParamSet, SGDState]:
    """One in-place SGD(+momentum) step.

    ``mask`` maps layer names to boolean keep-arrays (a PruneMask or a plain
    dict, or None). Masked positions get no update and are pinned to +0.0,
    and their momentum is cleared so nothing leaks back in later.
    """
    layers = {} if mask is None else mask.layers if hasattr(mask, "layers") else mask
    for name, w in params.items():
        g = grads[name]
        keep = layers.get(name)
        if keep is not None:
            g = np.where(keep, g, 0)
        v = state.velocity.get(name)
        if v is None:
            v = state.velocity[name] = np.zeros_like(w)
        if momentum:
            v *= w.dtype.type(momentum)
            v += g
        else:
            v[...] = g
        w -= w.dtype.type(lr) * v
        if keep is not None:
            w[~keep] = 0.0
            v[~keep] = 0.0
    state.steps += 1
    return params, state
