"""Image decoding, bilinear resizing, augmentation and model-specific preprocessing.

Images are ``(H, W, 3)`` float32 arrays. Pixel coordinates put the centre of
pixel ``(r, c)`` at ``(y, x) = (r, c)``; the resize uses the half-pixel
(aligned-corners false) convention.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..errors import ConfigError, DecodeError

RESNET_BGR_MEANS = np.array([103.939, 116.779, 123.68], dtype=np.float32)
PREPROCESS_MODES = ("resnet_means", "scale_pm1")


@dataclass
class AugmentParams:
    rotation_max_deg: float = 15.0
    shift_max_frac: float = 0.10
    zoom_max_frac: float = 0.10
    hflip_prob: float = 0.5

    def __post_init__(self):
        if min(self.rotation_max_deg, self.shift_max_frac, self.zoom_max_frac) < 0:
            raise ConfigError("augmentation magnitudes must be >= 0")
        if self.shift_max_frac >= 1 or self.zoom_max_frac >= 1:
            raise ConfigError("shift and zoom fractions must be < 1")
        if not 0 <= self.hflip_prob <= 1:
            raise ConfigError("hflip_prob must lie in [0, 1]")

    @classmethod
    def none(cls):
        return cls(0.0, 0.0, 0.0, 0.0)


@dataclass
class AugmentRecord:
    flip: bool = False
    angle_deg: float = 0.0
    zoom: float = 1.0
    shift_x: float = 0.0
    shift_y: float = 0.0

    def as_dict(self):
        return asdict(self)


@dataclass
class Sample:
    image: np.ndarray
    label: int
    source: str = ""
    augmentation: AugmentRecord | None = None
    extra: dict = field(default_factory=dict)


def resize_bilinear(image: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize with half-pixel centres and edge clamping, no antialiasing."""
    h_in, w_in = image.shape[:2]
    h_out, w_out = size
    img = image.astype(np.float64)

    def axis(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0, n_in - 1)
        i0 = np.floor(src).astype(np.int64)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, src - i0

    y0, y1, fy = axis(h_in, h_out)
    x0, x1, fx = axis(w_in, w_out)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bottom = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return (top * (1 - fy) + bottom * fy).astype(np.float32)


def decode_image(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            return np.asarray(rgb, dtype=np.float32)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from None


def decode_and_resize(path, target=(50, 50)) -> np.ndarray:
    img = decode_image(path)
    if img.shape[:2] == tuple(target):
        return img
    return resize_bilinear(img, target)


# -- augmentation ---------------------------------------------------------------


def sample_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Per-sample generator, independent of iteration order and workers."""
    return np.random.default_rng([int(seed), int(epoch), int(index)])


def draw_augmentation(params: AugmentParams, rng: np.random.Generator, shape) -> AugmentRecord:
    h, w = shape[:2]
    flip = bool(rng.random() < params.hflip_prob)
    angle = float(rng.uniform(-params.rotation_max_deg, params.rotation_max_deg))
    zoom = float(rng.uniform(1 - params.zoom_max_frac, 1 + params.zoom_max_frac))
    shift_x = float(rng.uniform(-params.shift_max_frac, params.shift_max_frac) * w)
    shift_y = float(rng.uniform(-params.shift_max_frac, params.shift_max_frac) * h)
    return AugmentRecord(flip, angle + 0.0, zoom, shift_x + 0.0, shift_y + 0.0)


def _snap(q):
    r = np.round(q)
    return np.where(np.abs(q - r) < 1e-9, r, q)


def apply_augmentation(image: np.ndarray, rec: AugmentRecord) -> np.ndarray:
    """Apply flip -> rotation -> zoom -> shift as one resampling.

    Positive angles rotate counter-clockwise as displayed; zoom > 1
    magnifies; positive shifts move content right/down. Samples falling
    outside the image take the nearest edge pixel.
    """
    if not rec.flip and rec.angle_deg == 0 and rec.zoom == 1 and rec.shift_x == 0 and rec.shift_y == 0:
        return image.copy()
    h, w = image.shape[:2]
    cy, cx = (h - 1) / 2, (w - 1) / 2
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    # invert each forward step, last first
    x = (xx - rec.shift_x - cx) / rec.zoom
    y = (yy - rec.shift_y - cy) / rec.zoom
    t = np.deg2rad(rec.angle_deg)
    c, s = np.cos(t), np.sin(t)
    x, y = c * x - s * y + cx, s * x + c * y + cy
    if rec.flip:
        x = (w - 1) - x
    x = np.clip(_snap(x), 0, w - 1)
    y = np.clip(_snap(y), 0, h - 1)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    img = image.astype(np.float64)
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return (top * (1 - fy) + bottom * fy).astype(image.dtype)


def augment_sample(sample: Sample, params: AugmentParams, seed: int, epoch: int, index: int) -> Sample:
    rec = draw_augmentation(params, sample_rng(seed, epoch, index), sample.image.shape)
    return Sample(apply_augmentation(sample.image, rec), sample.label, sample.source, rec)


# -- preprocessing ----------------------------------------------------------------


def preprocess(image: np.ndarray, mode: str) -> np.ndarray:
    """Map [0, 255] RGB pixels to the model's input range."""
    if mode == "resnet_means":
        return image[..., ::-1] - RESNET_BGR_MEANS
    if mode == "scale_pm1":
        return image / np.float32(127.5) - np.float32(1.0)
    raise ConfigError(f"unknown preprocessing mode {mode!r}; expected one of {PREPROCESS_MODES}")


def unpreprocess(image: np.ndarray, mode: str) -> np.ndarray:
    if mode == "resnet_means":
        return (image + RESNET_BGR_MEANS)[..., ::-1]
    if mode == "scale_pm1":
        return (image + np.float32(1.0)) * np.float32(127.5)
    raise ConfigError(f"unknown preprocessing mode {mode!r}")


def default_preprocessing(model: str) -> str:
    return "resnet_means" if model == "resnet50" else "scale_pm1"


def save_png(image: np.ndarray, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    arr = np.clip(np.round(image), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)
