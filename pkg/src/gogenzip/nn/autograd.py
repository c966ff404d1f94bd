"""Computation records and the backward pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import InvalidArgumentError
from .tensor import Tensor


@dataclass
class ComputationRecord:
    """Nodes reachable from an output, in forward (topological) order."""

    nodes: list

    @classmethod
    def trace(cls, output):
        order, seen = [], set()
        stack = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        return cls(order)

    def __len__(self):
        return len(self.nodes)

    def ops(self):
        return [n.op for n in self.nodes]


def backward(loss, params=None):
    """Backpropagate a scalar ``loss``.

    Leaves accumulate into ``.grad``. If ``params`` (a mapping of name to
    leaf tensor) is given, returns ``{name: gradient}`` with zeros for
    parameters that do not influence the loss.
    """
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        shape = getattr(loss, "shape", type(loss).__name__)
        raise InvalidArgumentError(f"backward needs a scalar loss, got shape {shape}")
    record = ComputationRecord.trace(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(record.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            prev = grads.get(id(parent))
            grads[id(parent)] = pg if prev is None else prev + pg
    if params is None:
        return None
    out = {}
    for name, p in params.items():
        out[name] = np.zeros_like(p.data) if p.grad is None else p.grad
    return out
