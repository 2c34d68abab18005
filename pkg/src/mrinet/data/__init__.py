from .batches import Batch, ImageLoader, batch_iter, epoch_order, num_batches
from .dataset import (
    CLASS_IDS,
    CLASS_NAMES,
    DatasetIndex,
    format_manifest,
    read_manifest,
    scan_dataset,
    split_counts,
    stratified_split,
    write_manifest,
)
from .image import (
    AugmentParams,
    AugmentRecord,
    Sample,
    apply_augmentation,
    augment_sample,
    decode_and_resize,
    decode_image,
    default_preprocessing,
    draw_augmentation,
    preprocess,
    resize_bilinear,
    sample_rng,
    save_png,
    unpreprocess,
)

__all__ = [
    "AugmentParams",
    "AugmentRecord",
    "Batch",
    "CLASS_IDS",
    "CLASS_NAMES",
    "DatasetIndex",
    "ImageLoader",
    "Sample",
    "apply_augmentation",
    "augment_sample",
    "batch_iter",
    "decode_and_resize",
    "decode_image",
    "default_preprocessing",
    "draw_augmentation",
    "epoch_order",
    "format_manifest",
    "num_batches",
    "preprocess",
    "read_manifest",
    "resize_bilinear",
    "sample_rng",
    "save_png",
    "scan_dataset",
    "split_counts",
    "stratified_split",
    "unpreprocess",
    "write_manifest",
]
