"""Training loop, evaluation and single-image prediction."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..architectures import build_model
from ..data.batches import ImageLoader, batch_iter
from ..data.dataset import CLASS_NAMES, DatasetIndex
from ..data.image import decode_and_resize, preprocess
from ..engine import kernels, ops
from ..engine.tape import Tape, backward
from ..errors import EvaluationError, TrainingHalted
from ..graph import BACKBONE, HEAD, NetworkGraph, forward, watch_params
from .checkpoint import apply_checkpoint, atomic_write_bytes, load_checkpoint, save_checkpoint
from .config import TrainConfig
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)

CSV_HEADER = "epoch,train_loss,train_acc,val_loss,val_acc"


@dataclass
class HistoryRow:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    seconds: float = 0.0

    def as_list(self):
        vals = [self.train_loss, self.train_acc, self.val_loss, self.val_acc]
        return [self.epoch, *(v if np.isfinite(v) else None for v in vals)]

    @classmethod
    def from_list(cls, row):
        return cls(int(row[0]), *(float("nan") if v is None else float(v) for v in row[1:5]))


@dataclass
class History:
    rows: list[HistoryRow] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        for r in self.rows:
            vals = [f"{v:.6g}" for v in (r.train_loss, r.train_acc, r.val_loss, r.val_acc)]
            lines.append(",".join([str(r.epoch), *vals]))
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        atomic_write_bytes(path, self.to_csv().encode("utf-8"))

    def column(self, name: str) -> list[float]:
        return [getattr(r, name) for r in self.rows]


@dataclass
class EvalResult:
    loss: float
    accuracy: float
    confusion: np.ndarray

    def as_dict(self):
        return {
            "accuracy": self.accuracy,
            "class_names": list(CLASS_NAMES),
            "confusion_matrix": self.confusion.tolist(),
            "loss": self.loss,
            "total": int(self.confusion.sum()),
        }


@dataclass
class TrainResult:
    graph: NetworkGraph
    history: History
    adam: AdamState


def build_from_config(config: TrainConfig) -> NetworkGraph:
    return build_model(config.model, (*config.input_size, 3), config.num_classes, config.seed, config.depth)


def trainable_names(graph: NetworkGraph, config: TrainConfig) -> list[str]:
    if config.backbone_mode == "frozen":
        return graph.param_names(HEAD)
    return graph.param_names()


def _bn_modes(config: TrainConfig):
    if config.backbone_mode == "frozen" or config.bn_mode == "infer":
        return {BACKBONE: False}
    return None


def train_step(graph, images, labels, config, adam, names, rng):
    """One optimizer step. Returns (loss, number of correct predictions)."""
    tape = Tape()
    pv = watch_params(tape, graph, names)
    res = forward(graph, images, train=True, rng=rng, params=pv, bn_train=_bn_modes(config))
    loss, probs = ops.softmax_crossentropy(res.logits, labels)
    loss_value = float(loss.value)
    if not np.isfinite(loss_value):
        raise TrainingHalted(f"non-finite training loss {loss_value}")
    grads = backward(tape, loss)
    adam_step(
        graph.params,
        {n: grads[v] for n, v in pv.items()},
        adam,
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.epsilon,
    )
    graph.state.update(res.new_state)
    correct = int((probs.argmax(axis=1) == labels).sum())
    return loss_value, correct


def evaluate(graph: NetworkGraph, index: DatasetIndex, config: TrainConfig, loader=None, batch_size=None) -> EvalResult:
    """Deterministic pass (no augmentation, no dropout, batch norm in infer mode)."""
    if len(index) == 0:
        raise EvaluationError("cannot evaluate on an empty index")
    k = config.num_classes
    confusion = np.zeros((k, k), dtype=np.int64)
    loss_sum = 0.0
    for batch in batch_iter(
        index,
        batch_size or config.batch_size,
        shuffle=False,
        preprocessing=config.preprocessing,
        loader=loader or ImageLoader(index, config.input_size),
    ):
        probs = forward(graph, batch.images, train=False).probs
        loss_sum += float(kernels.sparse_categorical_crossentropy_forward(probs, batch.labels)) * len(batch.labels)
        # argmax breaks ties toward the lowest class id
        pred = probs.argmax(axis=1)
        np.add.at(confusion, (batch.labels, pred), 1)
    total = int(confusion.sum())
    return EvalResult(loss_sum / total, float(np.trace(confusion)) / total, confusion)


def _checkpoint_meta(config, epoch, history):
    return {
        "config": config.to_dict(),
        "epoch": epoch,
        "history": [r.as_list() for r in history.rows],
    }


def train_model(
    config: TrainConfig,
    train_index: DatasetIndex,
    val_index: DatasetIndex | None = None,
    out_dir=None,
    graph: NetworkGraph | None = None,
    loader=None,
    val_loader=None,
    resume_from=None,
    max_epochs: int | None = None,
    extra_meta: dict | None = None,
) -> TrainResult:
    """Adam + sparse categorical cross-entropy for ``config.epochs`` epochs.

    ``resume_from`` continues from a checkpoint written by an earlier run;
    ``max_epochs`` stops early after that many epochs (used for
    interrupt/resume checks) without changing the per-epoch seeding.
    """
    if len(train_index) == 0:
        raise EvaluationError("training index is empty")
    graph = graph if graph is not None else build_from_config(config)
    names = trainable_names(graph, config)
    adam = AdamState({n: graph.params[n] for n in names})
    history = History()
    start = 0
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        apply_checkpoint(graph, ckpt)
        if ckpt.tensors.get("adam_m"):
            adam.m = {n: v.astype(graph.params[n].dtype) for n, v in ckpt.tensors["adam_m"].items()}
            adam.v = {n: v.astype(graph.params[n].dtype) for n, v in ckpt.tensors["adam_v"].items()}
            adam.t = int(ckpt.manifest.get("adam_step", 0))
        start = int(ckpt.manifest.get("epoch", 0))
        history.rows = [HistoryRow.from_list(r) for r in ckpt.manifest.get("history", [])]

    out = Path(out_dir) if out_dir is not None else None
    loader = loader or ImageLoader(train_index, config.input_size)
    if val_index is not None and len(val_index):
        val_loader = val_loader or ImageLoader(val_index, config.input_size)
    last_good = None
    stop = config.epochs if max_epochs is None else min(config.epochs, start + max_epochs)
    for epoch in range(start, stop):
        t0 = time.perf_counter()
        loss_sum, correct, seen = 0.0, 0, 0
        for step, batch in enumerate(
            batch_iter(
                train_index,
                config.batch_size,
                config.seed,
                epoch,
                augment=config.augment,
                augment_params=config.augment_params,
                preprocessing=config.preprocessing,
                loader=loader,
            )
        ):
            rng = np.random.default_rng([config.seed, epoch, step, 1])
            try:
                loss, ok = train_step(graph, batch.images, batch.labels, config, adam, names, rng)
            except TrainingHalted as exc:
                exc.last_good_checkpoint = last_good
                where = f"; last good checkpoint: {last_good}" if last_good else ""
                exc.args = (f"epoch {epoch + 1} step {step}: {exc.args[0]}{where}",)
                raise
            n = len(batch.labels)
            loss_sum += loss * n
            correct += ok
            seen += n
        if val_index is not None and len(val_index):
            ev = evaluate(graph, val_index, config, val_loader)
            val_loss, val_acc = ev.loss, ev.accuracy
        else:
            val_loss = val_acc = float("nan")
        row = HistoryRow(epoch + 1, loss_sum / seen, correct / seen, val_loss, val_acc, time.perf_counter() - t0)
        history.rows.append(row)
        log.info(
            "epoch %d/%d loss %.4f acc %.4f val_loss %.4f val_acc %.4f",
            row.epoch, config.epochs, row.train_loss, row.train_acc, row.val_loss, row.val_acc,
        )
        if out is not None:
            meta = {**(extra_meta or {}), **_checkpoint_meta(config, epoch + 1, history)}
            if config.checkpoint_every_epoch:
                path = out / f"epoch_{epoch + 1:03d}.ckpt"
                save_checkpoint(path, graph, adam, meta)
                last_good = path
            save_checkpoint(out / "final.ckpt", graph, adam, meta)
            last_good = last_good or out / "final.ckpt"
            history.write_csv(out / "history.csv")
    return TrainResult(graph, history, adam)


def predict(graph: NetworkGraph, image_path, config: TrainConfig) -> list[tuple[str, float]]:
    """Class probabilities for one image, most likely first (ties by class id)."""
    img = decode_and_resize(image_path, config.input_size)
    x = preprocess(img, config.preprocessing)[None]
    probs = forward(graph, x.astype(np.float32), train=False).probs[0].astype(np.float64)
    order = sorted(range(len(probs)), key=lambda i: (-probs[i], i))
    return [(CLASS_NAMES[i], float(probs[i])) for i in order]
