from ..engine.kernels import sparse_categorical_crossentropy_forward as sparse_categorical_crossentropy
from .checkpoint import (
    Checkpoint,
    apply_checkpoint,
    atomic_write_bytes,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    read_tensors,
    save_checkpoint,
)
from .config import MODELS, TrainConfig
from .loop import (
    EvalResult,
    History,
    HistoryRow,
    TrainResult,
    build_from_config,
    evaluate,
    predict,
    train_model,
    train_step,
)
from .optim import AdamState, adam_step

__all__ = [
    "AdamState",
    "Checkpoint",
    "EvalResult",
    "History",
    "HistoryRow",
    "MODELS",
    "TrainConfig",
    "TrainResult",
    "adam_step",
    "apply_checkpoint",
    "atomic_write_bytes",
    "build_from_config",
    "decode_checkpoint",
    "encode_checkpoint",
    "evaluate",
    "load_checkpoint",
    "predict",
    "read_tensors",
    "save_checkpoint",
    "sparse_categorical_crossentropy",
    "train_model",
    "train_step",
]
