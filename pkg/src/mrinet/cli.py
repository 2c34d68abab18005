"""Command-line interface: ``mrinet <command> ...``.

Exit codes: 0 success, 1 validation error, 2 runtime or data error.
"""
from __future__ import annotations

import argparse
import dataclasses
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .architectures import build_model, model_summary
from .data.dataset import CLASS_NAMES, read_manifest, scan_dataset, stratified_split, write_manifest
from .data.image import AugmentParams, apply_augmentation, decode_image, draw_augmentation, sample_rng
from .engine.determinism import strict_mode
from .errors import (
    CheckpointError,
    ConfigError,
    DecodeError,
    EvaluationError,
    IterationError,
    MriNetError,
    SplitError,
    TaxonomyError,
    TrainingHalted,
)
from .training.checkpoint import apply_checkpoint, atomic_write_bytes, load_checkpoint
from .training.config import TrainConfig
from .training.loop import build_from_config, evaluate, predict, train_model

log = logging.getLogger("mrinet")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2
RUN_KEYS = ("data_root", "train_manifest", "val_manifest", "output_dir")


class UsageError(MriNetError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _dump_json(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2) + "\n").encode("utf-8")


# -- run config -------------------------------------------------------------------


def load_run_config(path, seed_override=None):
    """Parse and fully validate a run config file; returns (TrainConfig, run paths)."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    run = {k: raw.pop(k) for k in RUN_KEYS if k in raw}
    for key in ("data_root", "train_manifest", "output_dir"):
        if key not in run:
            raise ConfigError(f"config is missing required key {key!r}")
    if seed_override is not None:
        raw["seed"] = seed_override
    config = TrainConfig.from_dict(raw)
    base = path.parent
    paths = {k: (base / v) if v is not None else None for k, v in run.items()}
    paths.setdefault("val_manifest", None)
    for key in ("train_manifest", "val_manifest"):
        if paths[key] is not None and not paths[key].is_file():
            raise ConfigError(f"{key} {paths[key]} does not exist")
    return config, paths


# -- commands ----------------------------------------------------------------------


def cmd_split(args):
    if not 0 < args.train_frac < 1:
        raise SplitError(f"--train-frac must be strictly between 0 and 1, got {args.train_frac}")
    index = scan_dataset(args.data)
    train, val = stratified_split(index, args.train_frac, args.seed)
    out = Path(args.out)
    write_manifest(train, out / "train.tsv")
    write_manifest(val, out / "val.tsv")
    tc, vc = train.class_counts(), val.class_counts()
    print(f"{'class':<10} {'train':>7} {'val':>7}")
    for name in CLASS_NAMES:
        print(f"{name:<10} {tc[name]:>7} {vc[name]:>7}")
    print(f"{'total':<10} {len(train):>7} {len(val):>7}")
    if index.skipped:
        print(f"skipped {len(index.skipped)} unreadable file(s)")
    return EXIT_OK


def cmd_train(args):
    config, paths = load_run_config(args.config, args.seed)
    out = paths["output_dir"]
    train_index = read_manifest(paths["train_manifest"], paths["data_root"])
    val_index = read_manifest(paths["val_manifest"], paths["data_root"]) if paths["val_manifest"] else None
    echo = {**config.to_dict(), **{k: str(v) if v is not None else None for k, v in paths.items()}}
    atomic_write_bytes(out / "config.json", _dump_json(echo))
    summary = model_summary(build_from_config(config))
    print(f"model {config.model} ({config.depth}): {summary.conv_layers} conv layers, "
          f"{summary.param_count:,} parameters")
    result = train_model(config, train_index, val_index, out_dir=out,
                         extra_meta={"data_root": str(paths["data_root"])})
    last = result.history.rows[-1]
    print(f"trained {len(result.history)} epochs; final train_acc {last.train_acc:.4f} "
          f"val_acc {last.val_acc:.4f}")
    print(f"wrote {out / 'history.csv'} and {out / 'final.ckpt'}")
    return EXIT_OK


def _graph_from_checkpoint(path):
    ckpt = load_checkpoint(path)
    try:
        config = TrainConfig.from_dict(ckpt.config)
    except ConfigError as exc:
        raise CheckpointError(f"{path}: unusable config echo ({exc})") from None
    graph = build_from_config(config)
    apply_checkpoint(graph, ckpt)
    return graph, config, ckpt


def cmd_eval(args):
    graph, config, ckpt = _graph_from_checkpoint(args.ckpt)
    root = args.data or ckpt.manifest.get("data_root")
    index = read_manifest(args.manifest, root)
    result = evaluate(graph, index, config)
    report = {**result.as_dict(), "checkpoint": str(args.ckpt), "manifest": str(args.manifest)}
    report_path = Path(args.report) if args.report else Path(args.ckpt).with_suffix(".eval.json")
    atomic_write_bytes(report_path, _dump_json(report))
    print(f"loss {result.loss:.6f}")
    print(f"accuracy {result.accuracy:.6f}")
    print("confusion matrix (rows = true class):")
    print(" " * 10 + " ".join(f"{n[:9]:>9}" for n in CLASS_NAMES))
    for name, row in zip(CLASS_NAMES, result.confusion):
        print(f"{name:<10}" + " ".join(f"{v:>9}" for v in row))
    print(f"report written to {report_path}")
    return EXIT_OK


def cmd_inspect(args):
    graph = build_model(args.model, (args.input_size, args.input_size, 3), depth=args.depth)
    summary = model_summary(graph)
    print(summary.format())
    if args.model == "mobilenetv2":
        print(f"published convolution-layer count: 53 (this build: {summary.conv_layers})")
    return EXIT_OK


def cmd_predict(args):
    graph, config, _ = _graph_from_checkpoint(args.ckpt)
    for name, p in predict(graph, args.image, config):
        print(f"{name} {p:.10f}")
    return EXIT_OK


def cmd_augment_preview(args):
    params = AugmentParams(args.rotation, args.shift, args.zoom, args.hflip)
    index = scan_dataset(args.data)
    out = Path(args.out)
    entries = []
    for i in range(min(args.n, len(index))):
        src = index.path(i)
        img = decode_image(src)
        rec = draw_augmentation(params, sample_rng(args.seed, 0, i), img.shape)
        aug = apply_augmentation(img, rec)
        name = f"preview_{i:03d}.png"
        buf = io.BytesIO()
        from PIL import Image

        Image.fromarray(np.clip(np.round(aug), 0, 255).astype(np.uint8)).save(buf, format="PNG")
        atomic_write_bytes(out / name, buf.getvalue())
        entries.append({"output": name, "source": index.records[i][0], **dataclasses.asdict(rec)})
    log_doc = {"params": dataclasses.asdict(params), "seed": args.seed, "samples": entries}
    atomic_write_bytes(out / "augment_log.json", _dump_json(log_doc))
    print(f"wrote {len(entries)} preview(s) and augment_log.json to {out}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--strict-deterministic", action="store_true",
                        help="force single-threaded kernels for bitwise reproducibility")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="mrinet", description="Brain MRI classifier toolkit", parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("split", parents=[common], help="stratified train/validation manifests")
    p.add_argument("--data", required=True)
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", parents=[common], help="train from a JSON run config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on a manifest")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--data", default=None, help="dataset root (defaults to the one used in training)")
    p.add_argument("--report", default=None, help="JSON report path (default: <ckpt>.eval.json)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", parents=[common], help="print the model summary")
    p.add_argument("--model", choices=("resnet50", "mobilenetv2"), required=True)
    p.add_argument("--depth", choices=("full", "reduced"), default="full")
    p.add_argument("--input-size", type=int, default=50)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("predict", parents=[common], help="ranked class probabilities for one image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("augment-preview", parents=[common], help="write augmented samples and their draws")
    p.add_argument("--data", required=True)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--rotation", type=float, default=15.0, help="max rotation in degrees")
    p.add_argument("--shift", type=float, default=0.10, help="max shift as a fraction of size")
    p.add_argument("--zoom", type=float, default=0.10, help="max zoom fraction")
    p.add_argument("--hflip", type=float, default=0.5, help="horizontal flip probability")
    p.set_defaults(func=cmd_augment_preview)
    return parser


VALIDATION_ERRORS = (ConfigError, SplitError, UsageError)
RUNTIME_ERRORS = (TaxonomyError, DecodeError, CheckpointError, EvaluationError, IterationError,
                  TrainingHalted, MriNetError, OSError, ValueError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help exits 0, usage errors exit 1
        return exc.code if isinstance(exc.code, int) else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with strict_mode(args.strict_deterministic):
            return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except TrainingHalted as exc:
        where = exc.last_good_checkpoint or "none written"
        print(f"error: training halted: {exc} (last good checkpoint: {where})", file=sys.stderr)
        return EXIT_RUNTIME
    except RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
