"""Composite blocks shared by both backbones, plus the 5-class head.

Blocks are emitted as layers into a :class:`~mrinet.graph.GraphBuilder`, so
a built network and a standalone block run through the same executor. The
``*_forward`` helpers build a one-block graph and evaluate it with caller
supplied parameters; they add no arithmetic of their own.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine.kernels import ConvSpec
from .errors import BlockConstructionError, DimensionError
from .graph import HEAD, GraphBuilder, forward


def _join(prefix, name):
    return f"{prefix}.{name}" if prefix else name


@dataclass(frozen=True)
class ResidualBottleneckSpec:
    in_channels: int
    mid_channels: int
    out_channels: int
    stride: int = 1
    projection_shortcut: bool | None = None
    use_bias: bool = True

    def __post_init__(self):
        if self.stride not in (1, 2):
            raise BlockConstructionError(f"bottleneck stride must be 1 or 2, got {self.stride}")
        needs_projection = self.stride != 1 or self.in_channels != self.out_channels
        if self.projection_shortcut is None:
            object.__setattr__(self, "projection_shortcut", needs_projection)
        elif needs_projection and not self.projection_shortcut:
            raise BlockConstructionError(
                f"identity shortcut cannot carry {self.in_channels}->{self.out_channels} "
                f"channels at stride {self.stride}"
            )


@dataclass(frozen=True)
class InvertedResidualSpec:
    in_channels: int
    expansion: int
    out_channels: int
    stride: int = 1

    def __post_init__(self):
        if self.stride not in (1, 2):
            raise BlockConstructionError(f"inverted residual stride must be 1 or 2, got {self.stride}")
        if self.expansion < 1:
            raise BlockConstructionError("expansion factor must be >= 1")

    @property
    def has_shortcut(self) -> bool:
        return self.stride == 1 and self.in_channels == self.out_channels

    @property
    def hidden_channels(self) -> int:
        return self.in_channels * self.expansion


@dataclass(frozen=True)
class HeadSpec:
    hidden_units: int = 512
    hidden_layers: int = 2
    dropout_rate: float = 0.2
    num_classes: int = 5

    def param_count(self, features: int) -> int:
        total, width = 0, features
        for _ in range(self.hidden_layers):
            total += width * self.hidden_units + self.hidden_units
            width = self.hidden_units
        return total + width * self.num_classes + self.num_classes


# -- emitters ---------------------------------------------------------------


def add_residual_bottleneck(b: GraphBuilder, prefix: str, x: str, spec: ResidualBottleneckSpec) -> str:
    """relu(F(x) + shortcut(x)) with F = 1x1 -> 3x3(stride) -> 1x1, BN after each conv."""
    c_in = b.shape(x)[-1]
    if c_in != spec.in_channels:
        raise BlockConstructionError(f"{prefix}: input has {c_in} channels, spec expects {spec.in_channels}")
    n = lambda s: _join(prefix, s)  # noqa: E731
    h = b.conv(n("conv1"), x, ConvSpec(1, 1, spec.in_channels, spec.mid_channels, 1, "same", spec.use_bias))
    h = b.act(n("relu1"), b.bn(n("bn1"), h), "relu")
    h = b.conv(
        n("conv2"), h, ConvSpec(3, 3, spec.mid_channels, spec.mid_channels, spec.stride, "same", spec.use_bias)
    )
    h = b.act(n("relu2"), b.bn(n("bn2"), h), "relu")
    h = b.conv(n("conv3"), h, ConvSpec(1, 1, spec.mid_channels, spec.out_channels, 1, "same", spec.use_bias))
    h = b.bn(n("bn3"), h)
    if spec.projection_shortcut:
        s = b.conv(
            n("shortcut.conv"),
            x,
            ConvSpec(1, 1, spec.in_channels, spec.out_channels, spec.stride, "same", spec.use_bias),
        )
        s = b.bn(n("shortcut.bn"), s)
    else:
        s = x
    h = b.add(n("add"), "add", [h, s])
    return b.act(n("out"), h, "relu")


def add_inverted_residual(b: GraphBuilder, prefix: str, x: str, spec: InvertedResidualSpec) -> str:
    """Expand 1x1 -> relu6 -> depthwise 3x3 -> relu6 -> linear 1x1 project (+ shortcut)."""
    c_in = b.shape(x)[-1]
    if c_in != spec.in_channels:
        raise BlockConstructionError(f"{prefix}: input has {c_in} channels, spec expects {spec.in_channels}")
    n = lambda s: _join(prefix, s)  # noqa: E731
    h = x
    hidden = spec.hidden_channels
    if spec.expansion != 1:
        h = b.conv(n("expand.conv"), h, ConvSpec(1, 1, spec.in_channels, hidden, 1, "same", False))
        h = b.act(n("expand.relu6"), b.bn(n("expand.bn"), h), "relu6")
    h = b.conv(n("depthwise.conv"), h, ConvSpec(3, 3, hidden, hidden, spec.stride, "same", False, depthwise=True))
    h = b.act(n("depthwise.relu6"), b.bn(n("depthwise.bn"), h), "relu6")
    h = b.conv(n("project.conv"), h, ConvSpec(1, 1, hidden, spec.out_channels, 1, "same", False))
    h = b.bn(n("project.bn"), h)
    if spec.has_shortcut:
        h = b.add(n("add"), "add", [h, x])
    return h


def add_head(b: GraphBuilder, x: str, spec: HeadSpec, prefix: str = "head") -> str:
    prev_group = b.group
    b.group = HEAD
    h = x
    for i in range(1, spec.hidden_layers + 1):
        h = b.dense(_join(prefix, f"dense{i}"), h, spec.hidden_units)
        h = b.act(_join(prefix, f"relu{i}"), h, "relu")
    h = b.add(_join(prefix, "dropout"), "dropout", [h], rate=spec.dropout_rate)
    h = b.dense(_join(prefix, "logits"), h, spec.num_classes)
    h = b.add(_join(prefix, "softmax"), "softmax", [h])
    b.group = prev_group
    return h


# -- standalone evaluation --------------------------------------------------


def _run_block(builder: GraphBuilder, x, params, state, train, rng=None):
    g = builder.build()
    for name, value in params.items():
        if name not in g.params:
            raise KeyError(f"unknown parameter {name!r}")
    if state:
        g.state.update(state)
    res = forward(g, x, train=train, rng=rng, params=params)
    return res.probs, res.new_state


def bottleneck_graph(spec: ResidualBottleneckSpec, spatial=(8, 8), seed=0, dtype=np.float64):
    b = GraphBuilder("bottleneck", (*spatial, spec.in_channels), seed=seed, dtype=dtype)
    add_residual_bottleneck(b, "", "input", spec)
    return b


def inverted_residual_graph(spec: InvertedResidualSpec, spatial=(8, 8), seed=0, dtype=np.float64):
    b = GraphBuilder("inverted_residual", (*spatial, spec.in_channels), seed=seed, dtype=dtype)
    add_inverted_residual(b, "", "input", spec)
    return b


def head_graph(features: int, spec: HeadSpec = HeadSpec(), seed=0, dtype=np.float64):
    b = GraphBuilder("head", (features,), num_classes=spec.num_classes, seed=seed, dtype=dtype)
    add_head(b, "input", spec, prefix="")
    return b


def residual_bottleneck_forward(x, spec: ResidualBottleneckSpec, params, train=False, state=None):
    """Evaluate one bottleneck block. ``params`` maps local slot names (``conv1.kernel``...)."""
    xv = getattr(x, "value", x)
    if xv.shape[-1] != spec.in_channels:
        raise DimensionError(f"input channels {xv.shape[-1]} != {spec.in_channels}", axis="channels")
    b = bottleneck_graph(spec, xv.shape[1:3], dtype=xv.dtype)
    return _run_block(b, x, params, state, train)


def inverted_residual_forward(x, spec: InvertedResidualSpec, params, train=False, state=None):
    xv = getattr(x, "value", x)
    if xv.shape[-1] != spec.in_channels:
        raise DimensionError(f"input channels {xv.shape[-1]} != {spec.in_channels}", axis="channels")
    b = inverted_residual_graph(spec, xv.shape[1:3], dtype=xv.dtype)
    return _run_block(b, x, params, state, train)


def head_forward(features, spec: HeadSpec, params, train=False, rng=None):
    """Dense-relu x2 -> dropout -> dense -> softmax over ``num_classes``."""
    fv = getattr(features, "value", features)
    expected = params["dense1.kernel"].shape[0] if "dense1.kernel" in params else None
    if fv.ndim != 2 or (expected is not None and fv.shape[1] != expected):
        raise DimensionError(f"feature width {fv.shape[-1]} does not match head input {expected}", axis="D")
    b = head_graph(fv.shape[1], spec, dtype=fv.dtype)
    probs, _ = _run_block(b, features, params, None, train, rng)
    return probs
