"""Reverse-mode differentiation over a linear record of kernel applications."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import GradientLookupError


class Var:
    """A value tracked by a :class:`Tape`."""

    __slots__ = ("value", "tape", "index", "name")

    def __init__(self, value, tape, index, name=None):
        self.value = value
        self.tape = tape
        self.index = index
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Var{label}(shape={self.value.shape}, index={self.index})"


@dataclass
class Node:
    op: str
    inputs: tuple
    output: Var
    backward: Callable


@dataclass
class Tape:
    nodes: list = field(default_factory=list)
    _count: int = 0
    _produced: set = field(default_factory=set)

    def watch(self, value, name=None) -> Var:
        var = Var(np.asarray(value), self, self._count, name)
        self._count += 1
        return var

    def record(self, op: str, inputs: Sequence, value, backward: Callable) -> Var:
        out = self.watch(value)
        self._produced.add(out.index)
        self.nodes.append(Node(op, tuple(inputs), out, backward))
        return out

    def __len__(self):
        return len(self.nodes)


def value_of(x):
    return x.value if isinstance(x, Var) else x


def tape_of(*xs):
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise ValueError("operands belong to different tapes")
    return tape


class Gradients:
    """Result of :func:`backward`; index with a watched :class:`Var`."""

    def __init__(self, tape, grads, order):
        self._tape = tape
        self._grads = grads
        self.order = order

    def __getitem__(self, var):
        if not isinstance(var, Var) or var.tape is not self._tape:
            raise GradientLookupError(f"{var!r} was not recorded on this tape")
        if var.index in self._tape._produced:
            raise GradientLookupError(f"{var!r} is an intermediate; only watched leaves keep gradients")
        g = self._grads.get(var.index)
        return np.zeros_like(var.value) if g is None else g

    def __contains__(self, var):
        return isinstance(var, Var) and var.tape is self._tape


def backward(tape: Tape, output: Var, loss_grad=None) -> Gradients:
    """Accumulate gradients of ``output`` with respect to every tracked value.

    Nodes are replayed in exact reverse execution order; a value used more
    than once receives the sum of its incoming gradients.
    """
    if not isinstance(output, Var) or output.tape is not tape:
        raise GradientLookupError("output is not on this tape")
    if loss_grad is None:
        loss_grad = np.ones_like(output.value)
    grads = {output.index: np.asarray(loss_grad, dtype=output.value.dtype)}
    order = []
    for pos in range(len(tape.nodes) - 1, -1, -1):
        node = tape.nodes[pos]
        g = grads.pop(node.output.index, None)
        if g is None:
            continue
        order.append(pos)
        needs = tuple(isinstance(x, Var) for x in node.inputs)
        input_grads = node.backward(g, needs)
        for x, gx in zip(node.inputs, input_grads):
            if not isinstance(x, Var) or gx is None:
                continue
            # keep gradients in the dtype of the value they belong to
            gx = np.asarray(gx).astype(x.value.dtype, copy=False)
            prev = grads.get(x.index)
            grads[x.index] = gx if prev is None else prev + gx
    return Gradients(tape, grads, order)
