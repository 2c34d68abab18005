"""Central finite-difference check of reverse-mode gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tape import Tape, Var, backward, value_of


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    probes: int
    nan_detected: bool
    worst_index: tuple | None = None

    @property
    def passed(self) -> bool:
        return not self.nan_detected and self.max_rel_error < self.tolerance


def _scalar(v) -> float:
    return float(np.asarray(value_of(v)).reshape(()))


def finite_difference_check(f, point, tolerance=1e-5, probes=100, seed=0, denom_floor=1e-4):
    """Compare the tape gradient of scalar ``f`` at ``point`` with central differences.

    ``f`` must accept either an array or a tracked ``Var`` (any function built
    from :mod:`mrinet.engine.ops` does). ``probes`` coordinates are sampled
    (with replacement only when ``point`` is smaller than ``probes``); the step
    is ``1e-6 * max(1, |x_i|)``. Relative error is ``|a - n| / max(|a|, |n|,
    denom_floor)``, the floor absorbing cancellation noise on near-zero entries.
    """
    point = np.array(point, dtype=np.float64)
    tape = Tape()
    x = tape.watch(point)
    out = f(x)
    if not isinstance(out, Var):
        raise TypeError("f did not record anything on the tape; is it built from engine.ops?")
    analytic = backward(tape, out)[x]

    rng = np.random.default_rng(seed)
    size = point.size
    flat = rng.choice(size, size=probes, replace=size < probes)
    worst, worst_idx, nan = 0.0, None, False
    for k in flat:
        idx = np.unravel_index(k, point.shape)
        h = 1e-6 * max(1.0, abs(point[idx]))
        plus = point.copy()
        plus[idx] += h
        minus = point.copy()
        minus[idx] -= h
        numeric = (_scalar(f(plus)) - _scalar(f(minus))) / (2 * h)
        a = float(analytic[idx])
        if not (np.isfinite(numeric) and np.isfinite(a)):
            nan = True
            continue
        err = abs(a - numeric) / max(abs(a), abs(numeric), denom_floor)
        if err > worst:
            worst, worst_idx = err, tuple(int(i) for i in idx)
    return GradCheckReport(worst, tolerance, int(probes), nan, worst_idx)
