"""Strict single-threaded mode for reproducibility checks."""
from __future__ import annotations

import contextlib

from threadpoolctl import threadpool_limits

_strict_depth = 0


def is_strict() -> bool:
    return _strict_depth > 0


@contextlib.contextmanager
def strict_mode(enabled: bool = True):
    """Pin BLAS to one thread and disable worker pools inside the block."""
    global _strict_depth
    if not enabled:
        yield
        return
    _strict_depth += 1
    try:
        with threadpool_limits(limits=1):
            yield
    finally:
        _strict_depth -= 1
