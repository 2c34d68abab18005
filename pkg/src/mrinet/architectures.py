"""ResNet-50 and MobileNetV2 builders with the 5-class head, audits and weight import."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .blocks import (
    HeadSpec,
    InvertedResidualSpec,
    ResidualBottleneckSpec,
    add_head,
    add_inverted_residual,
    add_residual_bottleneck,
)
from .engine.kernels import ConvSpec
from .errors import BlockConstructionError, ConfigError, WeightImportError
from .graph import BACKBONE, HEAD, GraphBuilder, NetworkGraph, infer_shapes

MIN_INPUT = 32


class ResNetStage(NamedTuple):
    mid: int
    out: int
    repeats: int
    stride: int


class InvertedStage(NamedTuple):
    expansion: int
    channels: int
    repeats: int
    stride: int


RESNET50_STAGES = (
    ResNetStage(64, 256, 3, 1),
    ResNetStage(128, 512, 4, 2),
    ResNetStage(256, 1024, 6, 2),
    ResNetStage(512, 2048, 3, 2),
)

MOBILENETV2_STAGES = (
    InvertedStage(1, 16, 1, 1),
    InvertedStage(6, 24, 2, 2),
    InvertedStage(6, 32, 3, 2),
    InvertedStage(6, 64, 4, 2),
    InvertedStage(6, 96, 3, 1),
    InvertedStage(6, 160, 3, 2),
    InvertedStage(6, 320, 1, 1),
)

# reduced-depth variants for desk-scale training checks
RESNET_REDUCED_STAGES = (ResNetStage(8, 32, 1, 1), ResNetStage(16, 64, 1, 2))
MOBILENETV2_REDUCED_STAGES = (InvertedStage(1, 8, 1, 1), InvertedStage(4, 16, 2, 2), InvertedStage(4, 32, 1, 2))


def _validate_stages(stages):
    for st in stages:
        if st.repeats < 1:
            raise ConfigError(f"stage {st} must repeat at least once")
        if st.stride not in (1, 2):
            raise ConfigError(f"stage {st} stride must be 1 or 2")


def _check_input(input_shape):
    h, w, c = input_shape
    if h < MIN_INPUT or w < MIN_INPUT:
        raise BlockConstructionError(f"input {h}x{w} is smaller than the {MIN_INPUT}x{MIN_INPUT} minimum")
    if c != 3:
        raise BlockConstructionError(f"expected 3 input channels, got {c}")


def build_resnet50(
    input_shape=(50, 50, 3),
    num_classes=5,
    seed=0,
    stages=RESNET50_STAGES,
    stem_channels=64,
    head: HeadSpec | None = None,
    dtype=np.float32,
) -> NetworkGraph:
    _check_input(input_shape)
    _validate_stages(stages)
    head = head or HeadSpec(num_classes=num_classes)
    b = GraphBuilder("resnet50", input_shape, num_classes, seed, dtype)
    x = b.conv("conv1.conv", "input", ConvSpec(7, 7, 3, stem_channels, 2, "same", True))
    x = b.act("conv1.relu", b.bn("conv1.bn", x), "relu")
    x = b.add("pool1", "maxpool", [x], window=(3, 3), stride=2, padding="same")
    channels = stem_channels
    for s, st in enumerate(stages, start=2):
        stage = f"conv{s}_x"
        b.graph.stages.append(stage)
        for k in range(st.repeats):
            spec = ResidualBottleneckSpec(channels, st.mid, st.out, st.stride if k == 0 else 1)
            x = add_residual_bottleneck(b, f"{stage}.block{k + 1}", x, spec)
            channels = st.out
    x = b.add("avg_pool", "gap", [x])
    add_head(b, x, head)
    g = b.build()
    g.metadata.update(
        family="resnet",
        stages=[tuple(st) for st in stages],
        feature_width=channels,
        head=head,
    )
    return g


def build_mobilenet_v2(
    input_shape=(50, 50, 3),
    num_classes=5,
    seed=0,
    stages=MOBILENETV2_STAGES,
    stem_channels=32,
    top_channels=1280,
    head: HeadSpec | None = None,
    dtype=np.float32,
) -> NetworkGraph:
    _check_input(input_shape)
    _validate_stages(stages)
    head = head or HeadSpec(num_classes=num_classes)
    b = GraphBuilder("mobilenetv2", input_shape, num_classes, seed, dtype)
    x = b.conv("stem.conv", "input", ConvSpec(3, 3, 3, stem_channels, 2, "same", False))
    x = b.act("stem.relu6", b.bn("stem.bn", x), "relu6")
    channels = stem_channels
    for s, st in enumerate(stages, start=1):
        stage = f"stage{s}"
        b.graph.stages.append(stage)
        for k in range(st.repeats):
            spec = InvertedResidualSpec(channels, st.expansion, st.channels, st.stride if k == 0 else 1)
            x = add_inverted_residual(b, f"{stage}.block{k + 1}", x, spec)
            channels = st.channels
    x = b.conv("top.conv", x, ConvSpec(1, 1, channels, top_channels, 1, "same", False))
    x = b.act("top.relu6", b.bn("top.bn", x), "relu6")
    x = b.add("avg_pool", "gap", [x])
    add_head(b, x, head)
    g = b.build()
    g.metadata.update(
        family="mobilenetv2",
        stages=[tuple(st) for st in stages],
        feature_width=top_channels,
        head=head,
    )
    return g


def build_model(model: str, input_shape=(50, 50, 3), num_classes=5, seed=0, depth="full") -> NetworkGraph:
    if depth not in ("full", "reduced"):
        raise ConfigError(f"depth must be 'full' or 'reduced', got {depth!r}")
    reduced = depth == "reduced"
    if model == "resnet50":
        if reduced:
            return build_resnet50(input_shape, num_classes, seed, RESNET_REDUCED_STAGES, stem_channels=16)
        return build_resnet50(input_shape, num_classes, seed)
    if model == "mobilenetv2":
        if reduced:
            return build_mobilenet_v2(
                input_shape, num_classes, seed, MOBILENETV2_REDUCED_STAGES, stem_channels=8, top_channels=64
            )
        return build_mobilenet_v2(input_shape, num_classes, seed)
    raise ConfigError(f"unknown model {model!r}; expected resnet50 or mobilenetv2")


# -- audit --------------------------------------------------------------------


@dataclass
class LayerRow:
    name: str
    kind: str
    output_shape: tuple[int, ...]
    params: int
    multiply_adds: int


@dataclass
class ModelSummary:
    model: str
    conv_layers: int
    depthwise_conv_layers: int
    projection_shortcuts: int
    dense_layers: int
    layer_count: int
    param_count: int
    state_count: int
    backbone_param_count: int
    backbone_state_count: int
    head_param_count: int
    multiply_adds: int
    feature_width: int
    stages: list[str]
    blocks: int
    rows: list[LayerRow] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def backbone_total(self) -> int:
        """Backbone slots including batch-norm running statistics."""
        return self.backbone_param_count + self.backbone_state_count

    def format(self) -> str:
        lines = [f"model: {self.model}", ""]
        lines.append(f"{'layer':<40} {'kind':<9} {'output':<16} {'params':>10} {'mult-adds':>14}")
        for r in self.rows:
            shape = "x".join(str(d) for d in r.output_shape)
            lines.append(f"{r.name:<40} {r.kind:<9} {shape:<16} {r.params:>10,} {r.multiply_adds:>14,}")
        lines += [
            "",
            f"stages: {', '.join(self.stages)}",
            f"residual blocks: {self.blocks}",
            f"conv layers: {self.conv_layers} (depthwise {self.depthwise_conv_layers}, "
            f"projection shortcuts {self.projection_shortcuts})",
            f"dense layers: {self.dense_layers}",
            f"total layers: {self.layer_count}",
            f"trainable parameters: {self.param_count:,}",
            f"batch-norm running statistics: {self.state_count:,}",
            f"backbone parameters: {self.backbone_param_count:,} "
            f"({self.backbone_total:,} with running statistics)",
            f"head parameters: {self.head_param_count:,}",
            f"feature width: {self.feature_width}",
            f"multiply-adds per image: {self.multiply_adds:,}",
        ]
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines)


def _layer_cost(layer, in_shape, out_shape) -> int:
    if layer.kind == "conv":
        spec = layer.attrs["spec"]
        per_out = spec.kernel_h * spec.kernel_w * (1 if spec.depthwise else spec.in_channels)
        return per_out * out_shape[0] * out_shape[1] * out_shape[2]
    if layer.kind == "dense":
        return layer.attrs["in_features"] * layer.attrs["units"]
    return 0


def model_summary(graph: NetworkGraph) -> ModelSummary:
    shapes = infer_shapes(graph)
    rows = []
    convs = depthwise = projections = dense = 0
    mult_adds = 0
    for layer in graph.layers:
        if layer.kind == "input":
            continue
        in_shape = shapes[layer.inputs[0]]
        out_shape = shapes[layer.name]
        n_params = sum(graph.params[p].size for p in layer.params)
        cost = _layer_cost(layer, in_shape, out_shape)
        mult_adds += cost
        rows.append(LayerRow(layer.name, layer.kind, out_shape, int(n_params), int(cost)))
        if layer.kind == "conv":
            convs += 1
            depthwise += layer.attrs["spec"].depthwise
            projections += layer.name.endswith("shortcut.conv")
        elif layer.kind == "dense":
            dense += 1

    def count(names, table):
        return int(sum(table[n].size for n in names))

    blocks = sum(1 for l in graph.layers if l.name.endswith(".depthwise.conv") or l.name.endswith(".conv3"))
    head = graph.metadata.get("head")
    summary = ModelSummary(
        model=graph.name,
        conv_layers=convs,
        depthwise_conv_layers=depthwise,
        projection_shortcuts=projections,
        dense_layers=dense,
        layer_count=len(rows),
        param_count=count(graph.param_names(), graph.params),
        state_count=count(graph.state_names(), graph.state),
        backbone_param_count=count(graph.param_names(BACKBONE), graph.params),
        backbone_state_count=count(graph.state_names(BACKBONE), graph.state),
        head_param_count=count(graph.param_names(HEAD), graph.params),
        multiply_adds=mult_adds,
        feature_width=int(graph.metadata.get("feature_width", 0)),
        stages=list(graph.stages),
        blocks=blocks,
        rows=rows,
    )
    family = graph.metadata.get("family")
    if family == "resnet":
        main_path = convs - projections
        summary.notes.append(
            f"{main_path} main-path convolutions + {projections} projection shortcuts; "
            f"the canonical '50 layers' counts the {main_path} main-path convolutions plus one "
            "classifier layer (here replaced by the dense head)"
        )
    elif family == "mobilenetv2":
        summary.notes.append(
            f"{convs} convolution layers counting every standard, depthwise and pointwise kernel "
            "including the final 1x1 to the feature width; the published figure of 53 is reproduced "
            f"only by also counting the original classifier layer ({convs} + 1 = {convs + 1})"
        )
        summary.notes.append(f"{blocks} bottleneck blocks from the stage table; the published text says 16")
    if head is not None and dense:
        summary.notes.append(f"head: {head.hidden_layers}x dense {head.hidden_units} relu, "
                             f"dropout {head.dropout_rate}, dense {head.num_classes} softmax")
    if family == "mobilenetv2":
        summary.notes.append(
            "the published ~350 GFLOPs figure is informational only; the estimate above is for this input size"
        )
    return summary


# -- weight import ------------------------------------------------------------


@dataclass
class ImportReport:
    loaded: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)


def backbone_name_map(graph: NetworkGraph) -> dict[str, str]:
    """Identity map over every backbone parameter and running-statistic slot."""
    names = graph.param_names(BACKBONE) + graph.state_names(BACKBONE)
    return {n: n for n in names}


def import_weights(graph: NetworkGraph, blob, name_map: dict[str, str], strict: bool = True) -> ImportReport:
    """Copy tensors from a checkpoint file into ``graph``.

    ``name_map`` pairs blob tensor names to graph slot names (parameters or
    running statistics). Every mapped slot is validated before anything is
    written, so a failed import leaves the graph untouched.
    """
    from .training.checkpoint import read_tensors

    tensors = read_tensors(blob) if not isinstance(blob, dict) else blob
    report = ImportReport()
    staged = {}
    for src, dst in sorted(name_map.items(), key=lambda kv: kv[1]):
        if dst in graph.params:
            table = graph.params
        elif dst in graph.state:
            table = graph.state
        else:
            raise WeightImportError(f"slot {dst!r} does not exist in {graph.name}")
        if src not in tensors:
            report.missing.append(src)
            continue
        value = tensors[src]
        if value.shape != table[dst].shape:
            raise WeightImportError(
                f"shape mismatch for slot {dst!r}: blob {src!r} has {value.shape}, slot expects {table[dst].shape}"
            )
        staged[dst] = (table, value)
    if report.missing and strict:
        raise WeightImportError(f"blob lacks mapped entries: {', '.join(report.missing)}")
    for dst, (table, value) in staged.items():
        table[dst] = np.array(value, dtype=table[dst].dtype)
        report.loaded.append(dst)
    mapped = set(staged)
    report.skipped = [n for n in graph.param_names() + graph.state_names() if n not in mapped]
    return report
