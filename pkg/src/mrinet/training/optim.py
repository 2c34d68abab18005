import numpy as np

from ..errors import ConfigError, TrainingHalted


class AdamState:
    """First/second moment estimates per parameter plus the step counter."""

    def __init__(self, params=None):
        self.m = {}
        self.v = {}
        self.t = 0
        for name, p in (params or {}).items():
            self.m[name] = np.zeros_like(p)
            self.v[name] = np.zeros_like(p)


def adam_step(params, grads, state: AdamState, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """In-place bias-corrected Adam update of every parameter named in ``grads``."""
    if lr <= 0 or not (0 <= beta1 < 1) or not (0 <= beta2 < 1):
        raise ConfigError(f"invalid Adam hyperparameters lr={lr}, beta1={beta1}, beta2={beta2}")
    bad = [name for name, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise TrainingHalted(f"non-finite gradient in {len(bad)} parameter(s), first: {sorted(bad)[0]}")
    state.t += 1
    t = state.t
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name in sorted(grads):
        p = params[name]
        g = np.asarray(grads[name]).astype(p.dtype, copy=False)
        if g.shape != p.shape:
            raise ConfigError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name] = beta1 * state.m[name] + (1 - beta1) * g
        v = state.v[name] = beta2 * state.v[name] + (1 - beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        params[name] = (p - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype, copy=False)
    return params, state
