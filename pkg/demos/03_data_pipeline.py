"""
From a directory tree to batches
================================

Writes a throwaway five-class tree of synthetic images, splits it, draws a
few augmentations and iterates one epoch of batches.
"""

import tempfile
from pathlib import Path

import numpy as np

from mrinet.data import (
    CLASS_NAMES,
    AugmentParams,
    ImageLoader,
    apply_augmentation,
    batch_iter,
    draw_augmentation,
    sample_rng,
    save_png,
    scan_dataset,
    stratified_split,
)

root = Path(tempfile.mkdtemp())
rng = np.random.default_rng(0)
for c, name in enumerate(CLASS_NAMES):
    for i in range(10):
        img = np.full((64, 64, 3), 40.0 * c) + rng.normal(0, 10, (64, 64, 3))
        save_png(np.clip(img, 0, 255), root / name / f"{i:02d}.png")

index = scan_dataset(root)
train, val = stratified_split(index, 0.8, seed=0)
print("train per class:", train.class_counts())
print("val per class:  ", val.class_counts())

# Each sample's augmentation is keyed by (seed, epoch, index), so the draw
# below is the one the training loop will use for sample 3 in epoch 0.
params = AugmentParams()
record = draw_augmentation(params, sample_rng(0, 0, 3), (50, 50))
print("draw for sample 3:", record)
loader = ImageLoader(train, (50, 50))
augmented = apply_augmentation(loader(3), record)
print("augmented shape:", augmented.shape)

for batch in batch_iter(train, batch_size=16, shuffle_seed=0, epoch=0, augment=True, loader=loader):
    print("batch", batch.images.shape, "labels", np.bincount(batch.labels, minlength=5))
