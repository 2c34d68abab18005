"""Layer-graph representation of a model and its executor.

A :class:`NetworkGraph` is a topologically ordered list of :class:`Layer`
records. Each layer names its inputs, so residual additions are ordinary
two-input layers. Trainable tensors live in ``graph.params`` and batch-norm
running statistics in ``graph.state``; both are keyed by stable dotted names
such as ``conv2_x.block1.conv1.kernel``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .engine import ops
from .engine.kernels import ConvSpec, output_size
from .engine.tape import Tape, Var
from .errors import BlockConstructionError, ConfigError, DimensionError

BACKBONE = "backbone"
HEAD = "head"


@dataclass
class Layer:
    name: str
    kind: str
    inputs: tuple[str, ...]
    attrs: dict = field(default_factory=dict)
    params: tuple[str, ...] = ()
    state: tuple[str, ...] = ()
    group: str = BACKBONE
    output_shape: tuple[int, ...] = ()


@dataclass
class NetworkGraph:
    name: str
    input_shape: tuple[int, int, int]
    num_classes: int
    layers: list[Layer] = field(default_factory=list)
    params: dict[str, np.ndarray] = field(default_factory=dict)
    state: dict[str, np.ndarray] = field(default_factory=dict)
    stages: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def output_name(self) -> str:
        return self.layers[-1].name

    def layer(self, name: str) -> Layer:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    def param_names(self, group: str | None = None) -> list[str]:
        names = []
        for layer in self.layers:
            if group is None or layer.group == group:
                names.extend(layer.params)
        return names

    def state_names(self, group: str | None = None) -> list[str]:
        names = []
        for layer in self.layers:
            if group is None or layer.group == group:
                names.extend(layer.state)
        return names

    def checksum(self, group: str | None = None, include_state: bool = True) -> str:
        """SHA-256 over the raw bytes of the selected tensors, in name order."""
        h = hashlib.sha256()
        names = sorted(self.param_names(group))
        tensors = [self.params[n] for n in names]
        if include_state:
            snames = sorted(self.state_names(group))
            names += snames
            tensors += [self.state[n] for n in snames]
        for name, t in zip(names, tensors):
            h.update(name.encode())
            h.update(np.ascontiguousarray(t).tobytes())
        return h.hexdigest()


def layer_output_shape(kind: str, attrs: dict, in_shapes: list[tuple[int, ...]]) -> tuple[int, ...]:
    """Symbolic (batch-free) output shape of one layer."""
    if kind == "input":
        return tuple(attrs["shape"])
    shape = in_shapes[0]
    if kind == "conv":
        spec: ConvSpec = attrs["spec"]
        if len(shape) != 3:
            raise DimensionError(f"conv expects an (H,W,C) input, got {shape}", axis="rank")
        h, w, c = shape
        if c != spec.in_channels:
            raise DimensionError(f"conv in_channels {spec.in_channels} != incoming {c}", axis="channels")
        return (
            output_size(h, spec.kernel_h, spec.stride, spec.padding),
            output_size(w, spec.kernel_w, spec.stride, spec.padding),
            spec.out_channels,
        )
    if kind == "maxpool":
        h, w, c = shape
        kh, kw = attrs["window"]
        return (
            output_size(h, kh, attrs["stride"], attrs["padding"]),
            output_size(w, kw, attrs["stride"], attrs["padding"]),
            c,
        )
    if kind == "gap":
        return (shape[-1],)
    if kind == "dense":
        if shape != (attrs["in_features"],):
            raise DimensionError(f"dense expects ({attrs['in_features']},), got {shape}", axis="D")
        return (attrs["units"],)
    if kind == "bn":
        if shape[-1] != attrs["channels"]:
            raise DimensionError(f"batch norm channels {attrs['channels']} != {shape[-1]}", axis="channels")
        return shape
    if kind == "add":
        if in_shapes[0] != in_shapes[1]:
            raise BlockConstructionError(
                f"residual branch shape {in_shapes[0]} != shortcut shape {in_shapes[1]}"
            )
        return shape
    if kind in ("act", "dropout", "softmax"):
        return shape
    raise ConfigError(f"unknown layer kind {kind!r}")


def infer_shapes(graph: NetworkGraph) -> dict[str, tuple[int, ...]]:
    """Symbolic forward pass; raises on any inconsistent or empty shape."""
    shapes: dict[str, tuple[int, ...]] = {}
    for layer in graph.layers:
        if layer.kind == "input":
            shape = tuple(graph.input_shape)
        else:
            shape = layer_output_shape(layer.kind, layer.attrs, [shapes[i] for i in layer.inputs])
        if any(d < 1 for d in shape):
            raise DimensionError(f"layer {layer.name} produces empty shape {shape}")
        shapes[layer.name] = shape
    return shapes


def _he_uniform(rng, shape, fan_in, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class GraphBuilder:
    """Appends layers to a graph while tracking symbolic shapes and initializing slots."""

    def __init__(self, name, input_shape, num_classes=5, seed=0, dtype=np.float32):
        self.graph = NetworkGraph(name, tuple(input_shape), num_classes)
        self.rng = np.random.default_rng(seed)
        self.dtype = dtype
        self.group = BACKBONE
        self._shapes: dict[str, tuple[int, ...]] = {}
        self.add("input", "input", (), shape=tuple(input_shape))

    @property
    def last(self) -> str:
        return self.graph.layers[-1].name

    def shape(self, name: str) -> tuple[int, ...]:
        return self._shapes[name]

    def add(self, name, kind, inputs, params=(), state=(), **attrs) -> str:
        if name in self._shapes:
            raise BlockConstructionError(f"duplicate layer name {name!r}")
        inputs = tuple(inputs)
        out_shape = layer_output_shape(kind, attrs, [self._shapes[i] for i in inputs])
        if any(d < 1 for d in out_shape):
            raise BlockConstructionError(f"layer {name} would produce empty shape {out_shape}")
        self._shapes[name] = out_shape
        self.graph.layers.append(
            Layer(name, kind, inputs, attrs, tuple(params), tuple(state), self.group, out_shape)
        )
        return name

    def conv(self, name, x, spec: ConvSpec) -> str:
        fan_in = spec.kernel_h * spec.kernel_w * (1 if spec.depthwise else spec.in_channels)
        kname = f"{name}.kernel"
        self.graph.params[kname] = _he_uniform(self.rng, spec.weight_shape, fan_in, self.dtype)
        params = [kname]
        if spec.use_bias:
            self.graph.params[f"{name}.bias"] = np.zeros(spec.out_channels, self.dtype)
            params.append(f"{name}.bias")
        return self.add(name, "conv", [x], params, spec=spec)

    def bn(self, name, x, epsilon=1e-5, momentum=0.99) -> str:
        c = self._shapes[x][-1]
        p = self.graph.params
        s = self.graph.state
        p[f"{name}.gamma"] = np.ones(c, self.dtype)
        p[f"{name}.beta"] = np.zeros(c, self.dtype)
        s[f"{name}.moving_mean"] = np.zeros(c, self.dtype)
        s[f"{name}.moving_var"] = np.ones(c, self.dtype)
        return self.add(
            name,
            "bn",
            [x],
            [f"{name}.gamma", f"{name}.beta"],
            [f"{name}.moving_mean", f"{name}.moving_var"],
            channels=c,
            epsilon=epsilon,
            momentum=momentum,
        )

    def act(self, name, x, kind) -> str:
        return self.add(name, "act", [x], fn=kind)

    def dense(self, name, x, units) -> str:
        (d,) = self._shapes[x]
        self.graph.params[f"{name}.kernel"] = _he_uniform(self.rng, (d, units), d, self.dtype)
        self.graph.params[f"{name}.bias"] = np.zeros(units, self.dtype)
        return self.add(name, "dense", [x], [f"{name}.kernel", f"{name}.bias"], in_features=d, units=units)

    def build(self) -> NetworkGraph:
        return self.graph


@dataclass
class ForwardResult:
    probs: object
    logits: object
    new_state: dict[str, np.ndarray]
    extras: dict = field(default_factory=dict)


def forward(
    graph: NetworkGraph,
    x,
    train: bool = False,
    rng: np.random.Generator | None = None,
    params: dict | None = None,
    bn_train: dict[str, bool] | None = None,
    outputs: tuple[str, ...] = (),
):
    """Run the graph on an NHWC batch.

    ``params`` may map slot names to tracked ``Var`` objects; missing names
    fall back to ``graph.params``. ``bn_train`` overrides batch-norm mode per
    layer group (e.g. ``{"backbone": False}`` for a frozen backbone); by
    default batch norm follows ``train``. Running statistics are never
    mutated here: updated values come back in ``ForwardResult.new_state``.
    """
    values = {}
    new_state: dict[str, np.ndarray] = {}
    p = graph.params if params is None else {**graph.params, **params}
    logits = None
    for layer in graph.layers:
        a = layer.attrs
        ins = [values[i] for i in layer.inputs]
        kind = layer.kind
        if kind == "input":
            out = x
        elif kind == "conv":
            spec: ConvSpec = a["spec"]
            w = p[layer.params[0]]
            b = p[layer.params[1]] if spec.use_bias else None
            if spec.depthwise:
                out = ops.depthwise_conv2d(ins[0], w, b, spec.stride, spec.padding)
            else:
                out = ops.conv2d(ins[0], w, b, spec)
        elif kind == "bn":
            mode = train if bn_train is None else bn_train.get(layer.group, train)
            mname, vname = layer.state
            out, mean, var = ops.batch_norm(
                ins[0],
                p[layer.params[0]],
                p[layer.params[1]],
                graph.state[mname],
                graph.state[vname],
                mode,
                a["epsilon"],
                a["momentum"],
            )
            if mode:
                new_state[mname] = mean
                new_state[vname] = var
        elif kind == "act":
            out = ops.activation(ins[0], a["fn"])
        elif kind == "maxpool":
            out = ops.max_pool2d(ins[0], a["window"], a["stride"], a["padding"])
        elif kind == "gap":
            out = ops.global_average_pool(ins[0])
        elif kind == "dense":
            out = ops.dense_affine(ins[0], p[layer.params[0]], p[layer.params[1]])
        elif kind == "dropout":
            out = ops.dropout(ins[0], a["rate"], train, rng)
        elif kind == "add":
            out = ops.add(ins[0], ins[1])
        elif kind == "softmax":
            logits = ins[0]
            out = ops.softmax(ins[0])
        else:
            raise ConfigError(f"unknown layer kind {kind!r}")
        values[layer.name] = out
    extras = {name: values[name] for name in outputs}
    return ForwardResult(values[graph.output_name], logits, new_state, extras)


def watch_params(tape: Tape, graph: NetworkGraph, names) -> dict[str, Var]:
    return {n: tape.watch(graph.params[n], name=n) for n in names}
