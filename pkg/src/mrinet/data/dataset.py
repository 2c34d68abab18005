"""Dataset index over a five-class directory tree, stratified split and manifests."""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import SplitError, TaxonomyError

log = logging.getLogger(__name__)

CLASS_NAMES = ("benign", "malignant", "no_stroke", "no_tumor", "stroke")
CLASS_IDS = {name: i for i, name in enumerate(CLASS_NAMES)}
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass
class DatasetIndex:
    """Records of (path relative to ``root``, class id), sorted by path.

    ``declared`` lists class ids that must be populated (a scanned tree
    declares all five); ``None`` means only the classes present matter.
    """

    root: Path | None
    records: list[tuple[str, int]] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    declared: tuple[int, ...] | None = None

    def __post_init__(self):
        self.records = sorted(self.records)
        paths = [p for p, _ in self.records]
        if len(set(paths)) != len(paths):
            raise ValueError("duplicate paths in dataset index")
        for p, c in self.records:
            if not 0 <= c < len(CLASS_NAMES):
                raise ValueError(f"class id {c} for {p} outside 0..{len(CLASS_NAMES) - 1}")

    def __len__(self):
        return len(self.records)

    @property
    def labels(self) -> np.ndarray:
        return np.array([c for _, c in self.records], dtype=np.int64)

    def class_counts(self) -> dict[str, int]:
        counts = {name: 0 for name in CLASS_NAMES}
        for _, c in self.records:
            counts[CLASS_NAMES[c]] += 1
        return counts

    def path(self, i: int) -> Path:
        rel = self.records[i][0]
        return Path(rel) if self.root is None else Path(self.root) / rel


def scan_dataset(root) -> DatasetIndex:
    """Index ``<root>/<class>/*.{png,jpg,jpeg}`` for the five fixed classes."""
    root = Path(root)
    if not root.is_dir():
        raise TaxonomyError(f"dataset root {root} is not a directory")
    present = sorted(p.name for p in root.iterdir() if p.is_dir())
    missing = [c for c in CLASS_NAMES if c not in present]
    if missing:
        raise TaxonomyError(f"missing class directory: {', '.join(missing)}")
    extra = [d for d in present if d not in CLASS_IDS]
    if extra:
        raise TaxonomyError(f"unexpected directory in dataset root: {', '.join(extra)}")
    records, skipped = [], []
    for name in CLASS_NAMES:
        for dirpath, dirnames, filenames in os.walk(root / name):
            dirnames.sort()
            for fn in sorted(filenames):
                if not fn.lower().endswith(IMAGE_SUFFIXES):
                    continue
                full = Path(dirpath) / fn
                rel = full.relative_to(root).as_posix()
                if not os.access(full, os.R_OK):
                    log.warning("skipping unreadable file %s", full)
                    skipped.append(rel)
                    continue
                records.append((rel, CLASS_IDS[name]))
    return DatasetIndex(root, records, skipped, tuple(range(len(CLASS_NAMES))))


def split_counts(class_counts: list[int], train_frac: float) -> list[int]:
    """Per-class train counts: floors, topped up by largest remainder to hit round(frac*total)."""
    total = sum(class_counts)
    exact = [train_frac * n for n in class_counts]
    counts = [math.floor(x + 1e-9) for x in exact]
    target = math.floor(train_frac * total + 0.5 + 1e-9)
    remainders = sorted(range(len(counts)), key=lambda i: (-(exact[i] - counts[i]), i))
    k = 0
    while sum(counts) < target and k < len(remainders):
        i = remainders[k]
        if counts[i] < class_counts[i]:
            counts[i] += 1
        k += 1
    return counts


def stratified_split(index: DatasetIndex, train_frac: float = 0.8, seed: int = 0):
    """Disjoint per-class shuffled split; returns (train, val) indexes."""
    if not 0 < train_frac < 1:
        raise SplitError(f"train fraction must be strictly between 0 and 1, got {train_frac}")
    by_class: dict[int, list[tuple[str, int]]] = {}
    for rec in index.records:
        by_class.setdefault(rec[1], []).append(rec)
    present = sorted(by_class)
    if not present:
        raise SplitError("cannot split an empty index")
    empty = [CLASS_NAMES[c] for c in (index.declared or ()) if c not in by_class]
    if empty:
        raise SplitError(f"class with 0 images: {', '.join(empty)}")
    counts = split_counts([len(by_class[c]) for c in present], train_frac)
    rng = np.random.default_rng(seed)
    train, val = [], []
    for c, k in zip(present, counts):
        recs = by_class[c]
        order = rng.permutation(len(recs))
        train += [recs[i] for i in order[:k]]
        val += [recs[i] for i in order[k:]]
    return (
        DatasetIndex(index.root, train, declared=index.declared),
        DatasetIndex(index.root, val, declared=index.declared),
    )


def format_manifest(index: DatasetIndex) -> str:
    return "".join(f"{p}\t{c}\n" for p, c in index.records)


def write_manifest(index: DatasetIndex, path) -> None:
    from ..training.checkpoint import atomic_write_bytes

    atomic_write_bytes(path, format_manifest(index).encode("utf-8"))


def read_manifest(path, root=None) -> DatasetIndex:
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rel, cid = line.rsplit("\t", 1)
            records.append((rel, int(cid)))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: expected 'path<TAB>class_id'") from None
    return DatasetIndex(Path(root) if root is not None else None, records)
