from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from ..data.image import PREPROCESS_MODES, AugmentParams, default_preprocessing
from ..errors import ConfigError

MODELS = ("resnet50", "mobilenetv2")


@dataclass
class TrainConfig:
    model: str = "resnet50"
    depth: str = "full"
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 128
    epochs: int = 50
    seed: int = 0
    backbone_mode: str = "finetune"
    bn_mode: str = "train"
    augment: bool = True
    augment_params: AugmentParams = field(default_factory=AugmentParams)
    preprocessing: str | None = None
    input_size: tuple[int, int] = (50, 50)
    num_classes: int = 5
    checkpoint_every_epoch: bool = True

    def __post_init__(self):
        if isinstance(self.augment_params, dict):
            self.augment_params = AugmentParams(**self.augment_params)
        self.input_size = tuple(int(v) for v in self.input_size)
        if self.preprocessing is None:
            self.preprocessing = default_preprocessing(self.model)
        self.validate()

    def validate(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.depth not in ("full", "reduced"):
            raise ConfigError(f"depth must be 'full' or 'reduced', got {self.depth!r}")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("beta1 and beta2 must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be > 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")
        if self.backbone_mode not in ("finetune", "frozen"):
            raise ConfigError("backbone_mode must be 'finetune' or 'frozen'")
        if self.bn_mode not in ("train", "infer"):
            raise ConfigError("bn_mode must be 'train' or 'infer'")
        if self.preprocessing not in PREPROCESS_MODES:
            raise ConfigError(f"preprocessing must be one of {PREPROCESS_MODES}")
        if len(self.input_size) != 2 or min(self.input_size) < 1:
            raise ConfigError("input_size must be (height, width)")
        if self.num_classes != 5:
            raise ConfigError("the class taxonomy is fixed at 5 classes")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["input_size"] = list(self.input_size)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        if isinstance(data.get("augment_params"), dict):
            aug_known = {f.name for f in dataclasses.fields(AugmentParams)}
            bad = sorted(set(data["augment_params"]) - aug_known)
            if bad:
                raise ConfigError(f"unknown augment_params key(s): {', '.join(bad)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
