"""Directed acyclic network of layers with one input node.

Nodes are added in topological order. A node consumed by several others is
a branch point; its gradient is the sum of what the consumers send back.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .functional import ShapeError, softmax
from .layers import LAYER_TYPES, Layer, MissingCacheError

INPUT = "input"


@dataclass
class Node:
    name: str
    layer: Layer
    inputs: Tuple[str, ...]
    shape: Tuple[int, ...]


class NetworkGraph:
    def __init__(self, input_shape: Sequence[int], name: str = "net"):
        self.name = name
        self.input_shape = tuple(int(s) for s in input_shape)
        self.nodes: Dict[str, Node] = {}
        self.outputs: List[str] = []
        self.rng = np.random.default_rng(0)
        self._forward_done = False
        self.ready = False

    # -- construction ------------------------------------------------------
    def shape_of(self, name: str) -> Tuple[int, ...]:
        return self.input_shape if name == INPUT else self.nodes[name].shape

    def add(self, name: str, layer: Layer, inputs: Sequence[str] = ()) -> str:
        if name == INPUT or name in self.nodes:
            raise ValueError(f"duplicate node name {name!r}")
        if not inputs:
            inputs = (self._last(),)
        inputs = tuple(inputs)
        for src in inputs:
            if src != INPUT and src not in self.nodes:
                raise ValueError(f"node {name!r} reads from unknown node {src!r}")
        in_shapes = [self.shape_of(s) for s in inputs]
        try:
            if getattr(layer, "multi_input", False):
                shape = layer.output_shape(*in_shapes)
            else:
                if len(inputs) != 1:
                    raise ShapeError(f"{layer.kind} takes exactly one input")
                shape = layer.output_shape(in_shapes[0])
        except ShapeError as exc:
            raise ShapeError(f"stage {name!r}: {exc}") from None
        if any(s < 1 for s in shape):
            raise ShapeError(f"stage {name!r} produces an empty map {shape}")
        self.nodes[name] = Node(name, layer, inputs, tuple(shape))
        return name

    def _last(self) -> str:
        return next(reversed(self.nodes)) if self.nodes else INPUT

    def set_outputs(self, names: Sequence[str]) -> None:
        for n in names:
            if n not in self.nodes:
                raise ValueError(f"unknown output node {n!r}")
        self.outputs = list(names)

    def init_params(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        for node in self.nodes.values():
            node.layer.init_params(rng)
        self.reseed(seed)
        self.ready = True

    def reseed(self, seed: int) -> None:
        """Reset the dropout streams (one child stream per dropout layer)."""
        self.rng = np.random.default_rng(seed)
        seqs = np.random.SeedSequence(seed).spawn(len(self.nodes))
        for node, ss in zip(self.nodes.values(), seqs):
            if node.layer.stochastic:
                node.layer.rng = np.random.default_rng(ss)

    # -- parameters --------------------------------------------------------
    def parameters(self) -> Dict[str, np.ndarray]:
        return {f"{n}.{k}": v for n, node in self.nodes.items() for k, v in node.layer.params.items()}

    def gradients(self) -> Dict[str, np.ndarray]:
        return {f"{n}.{k}": node.layer.grads[k] for n, node in self.nodes.items() for k in node.layer.params}

    def buffers(self) -> Dict[str, np.ndarray]:
        return {f"{n}.{k}": v for n, node in self.nodes.items() for k, v in node.layer.buffers.items()}

    def set_param(self, key: str, value: np.ndarray) -> None:
        node, k = key.rsplit(".", 1)
        layer = self.nodes[node].layer
        if layer.params[k].shape != value.shape:
            raise ShapeError(f"parameter {key} has shape {layer.params[k].shape}, got {value.shape}")
        layer.params[k] = value

    def set_buffer(self, key: str, value: np.ndarray) -> None:
        node, k = key.rsplit(".", 1)
        layer = self.nodes[node].layer
        if k not in layer.buffers or layer.buffers[k].shape != value.shape:
            raise ShapeError(f"buffer {key} does not match")
        layer.buffers[k] = value

    def parameter_count(self) -> int:
        return int(sum(v.size for v in self.parameters().values()))

    @property
    def stochastic_layers(self) -> List[str]:
        return [n for n, node in self.nodes.items()
                if node.layer.stochastic and getattr(node.layer, "keep", 1.0) < 1.0]

    # -- execution ---------------------------------------------------------
    def forward(self, x: np.ndarray, training: bool = False, keep: Sequence[str] = ()) -> Dict[str, np.ndarray]:
        """Run the graph on a batch ``x`` of shape ``(batch, *input_shape)``.

        Returns the output nodes' values (logits) plus any node named in
        ``keep``.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"graph expects input {(None,) + self.input_shape}, got {x.shape}")
        values = {INPUT: x}
        for name, node in self.nodes.items():
            args = [values[s] for s in node.inputs]
            values[name] = node.layer.forward(*args, training=training)
        self._forward_done = True
        wanted = list(self.outputs) + [k for k in keep if k not in self.outputs]
        return {k: values[k] for k in wanted}

    def predict_proba(self, x: np.ndarray, batch_size: int = 512) -> Dict[str, np.ndarray]:
        parts: Dict[str, List[np.ndarray]] = {o: [] for o in self.outputs}
        for i in range(0, x.shape[0], batch_size):
            out = self.forward(x[i:i + batch_size], training=False)
            for o in self.outputs:
                parts[o].append(softmax(out[o]))
        return {o: np.concatenate(v) for o, v in parts.items()}

    def backward(self, output_grads: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
        """Reverse pass from gradients w.r.t. the output logits.

        Outputs missing from ``output_grads`` contribute zero. Returns the
        parameter gradients keyed like ``parameters()``; the input gradient
        is left in ``self.input_grad``.
        """
        if not self._forward_done:
            raise MissingCacheError("backward called before forward")
        pending: Dict[str, np.ndarray] = {}
        for name, g in output_grads.items():
            if name not in self.outputs:
                raise ValueError(f"{name!r} is not an output node")
            pending[name] = np.asarray(g, dtype=np.float64)
        for name in reversed(list(self.nodes)):
            node = self.nodes[name]
            if name not in pending:
                # nothing flows here: parameter gradients are zero
                node.layer.zero_grads()
                continue
            in_grads = node.layer.backward(pending.pop(name))
            if not isinstance(in_grads, tuple):
                in_grads = (in_grads,)
            for src, g in zip(node.inputs, in_grads):
                pending[src] = pending[src] + g if src in pending else g
        self.input_grad = pending.get(INPUT, np.zeros((0,) + self.input_shape))
        return self.gradients()

    def patterns(self) -> Dict[str, np.ndarray]:
        out = {}
        for name, node in self.nodes.items():
            p = node.layer.pattern()
            if p is not None:
                out[name] = p
        return out

    # -- structure ---------------------------------------------------------
    def subgraph(self, outputs: Sequence[str]) -> "NetworkGraph":
        """Graph restricted to the ancestors of ``outputs``, sharing layers."""
        needed = set()
        stack = list(outputs)
        while stack:
            n = stack.pop()
            if n == INPUT or n in needed:
                continue
            needed.add(n)
            stack.extend(self.nodes[n].inputs)
        g = NetworkGraph(self.input_shape, name=f"{self.name}-sub")
        for name, node in self.nodes.items():
            if name in needed:
                g.nodes[name] = Node(name, node.layer, node.inputs, node.shape)
        g.set_outputs(outputs)
        g.ready = self.ready
        return g

    def describe(self) -> dict:
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "outputs": list(self.outputs),
            "nodes": [{"name": n.name, "kind": n.layer.kind, "inputs": list(n.inputs),
                       "config": n.layer.config()} for n in self.nodes.values()],
        }

    @classmethod
    def from_description(cls, desc: dict) -> "NetworkGraph":
        g = cls(desc["input_shape"], name=desc["name"])
        for nd in desc["nodes"]:
            layer = LAYER_TYPES[nd["kind"]](**nd["config"])
            g.add(nd["name"], layer, nd["inputs"])
        g.set_outputs(desc["outputs"])
        return g

    def summary(self) -> str:
        lines = [f"{self.name}: input {self.input_shape}"]
        for n in self.nodes.values():
            count = sum(v.size for v in n.layer.params.values())
            lines.append(f"  {n.name:<12} {n.layer.kind:<10} <- {','.join(n.inputs):<14} {str(n.shape):<12} {count}")
        lines.append(f"  parameters: {self.parameter_count()}")
        return "\n".join(lines)
