"""Shuffled, optionally augmented mini-batch generation."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterator, NamedTuple

import numpy as np

from ..engine.determinism import is_strict
from ..errors import ConfigError, IterationError
from .dataset import DatasetIndex
from .image import AugmentParams, apply_augmentation, decode_and_resize, draw_augmentation, preprocess, sample_rng


class Batch(NamedTuple):
    images: np.ndarray
    labels: np.ndarray
    indices: np.ndarray


def num_batches(n: int, batch_size: int) -> int:
    return -(-n // batch_size)


def epoch_order(n: int, shuffle_seed: int, epoch: int, shuffle: bool = True) -> np.ndarray:
    if not shuffle:
        return np.arange(n)
    return np.random.default_rng([int(shuffle_seed), int(epoch)]).permutation(n)


class ImageLoader:
    """Decodes and resizes index entries, memoizing the raw resized pixels."""

    def __init__(self, index: DatasetIndex, target=(50, 50), cache: bool = True):
        self.index = index
        self.target = tuple(target)
        self._cache: dict[int, np.ndarray] | None = {} if cache else None

    def __call__(self, i: int) -> np.ndarray:
        if self._cache is not None and i in self._cache:
            return self._cache[i]
        img = decode_and_resize(self.index.path(i), self.target)
        if self._cache is not None:
            self._cache[i] = img
        return img


def batch_iter(
    index: DatasetIndex,
    batch_size: int = 128,
    shuffle_seed: int = 0,
    epoch: int = 0,
    augment: bool = False,
    augment_params: AugmentParams | None = None,
    preprocessing: str = "scale_pm1",
    loader: Callable[[int], np.ndarray] | None = None,
    target=(50, 50),
    shuffle: bool = True,
    workers: int = 0,
) -> Iterator[Batch]:
    """Yield ``ceil(N / batch_size)`` batches covering every sample once.

    Order is a permutation seeded by ``(shuffle_seed, epoch)``; augmentation
    draws are keyed by ``(shuffle_seed, epoch, sample index)``, so results do
    not depend on ``workers``. Strict mode forces ``workers=0``.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    n = len(index)
    if n == 0:
        raise IterationError("cannot iterate over an empty dataset index")
    params = augment_params or AugmentParams()
    load = loader or ImageLoader(index, target)
    labels = index.labels
    order = epoch_order(n, shuffle_seed, epoch, shuffle)

    def prepare(i):
        img = load(int(i))
        if augment:
            rec = draw_augmentation(params, sample_rng(shuffle_seed, epoch, int(i)), img.shape)
            img = apply_augmentation(img, rec)
        return preprocess(np.asarray(img, dtype=np.float32), preprocessing)

    pool = ThreadPoolExecutor(workers) if workers > 0 and not is_strict() else None
    try:
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            # map() preserves submission order regardless of completion order
            images = list(pool.map(prepare, idx)) if pool else [prepare(i) for i in idx]
            yield Batch(np.stack(images).astype(np.float32, copy=False), labels[idx], idx)
    finally:
        if pool is not None:
            pool.shutdown()
