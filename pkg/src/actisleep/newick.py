"""Dendrogram text export (Newick) and a JSON structural form.

Branch lengths follow the half-height convention: a child hangs
``(parent height - child height) / 2`` below its parent.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import List, Optional

from .cluster import Dendrogram, Leaf, Merge

_PLAIN = re.compile(r"^[^\s(),:;'\[\]]+$")


class NewickError(ValueError):
    pass


def _label(name: str) -> str:
    if _PLAIN.match(name):
        return name
    return "'" + name.replace("'", "''") + "'"


def export_tree(dendrogram: Dendrogram) -> str:
    n = dendrogram.n_leaves
    if n == 1:
        return _label(dendrogram.leaves[0].name) + ";"

    text = {i: _label(lf.name) for i, lf in enumerate(dendrogram.leaves)}
    # merges are stored children-first, so one forward pass suffices
    for k, m in enumerate(dendrogram.merges):
        node, h = n + k, m.height
        parts = [f"{text.pop(c)}:{(h - dendrogram.height(c)) / 2!r}" for c in (m.left, m.right)]
        text[node] = "(" + ",".join(parts) + ")"
    return text[dendrogram.root] + ";"


@dataclass
class NewickNode:
    name: str = ""
    length: Optional[float] = None
    children: List["NewickNode"] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children


class _Parser:
    def __init__(self, text: str):
        self.s = text.strip()
        self.i = 0

    def peek(self) -> str:
        return self.s[self.i] if self.i < len(self.s) else ""

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            raise NewickError(f"expected {ch!r} at offset {self.i}, found {self.peek()!r}")
        self.i += 1

    def parse(self) -> NewickNode:
        node = self.subtree()
        self.expect(";")
        if self.i != len(self.s):
            raise NewickError(f"trailing text at offset {self.i}")
        return node

    def subtree(self) -> NewickNode:
        node = NewickNode()
        if self.peek() == "(":
            self.i += 1
            node.children.append(self.subtree())
            while self.peek() == ",":
                self.i += 1
                node.children.append(self.subtree())
            self.expect(")")
        node.name = self.label()
        if self.peek() == ":":
            self.i += 1
            start = self.i
            while self.peek() and self.peek() not in ",);":
                self.i += 1
            try:
                node.length = float(self.s[start:self.i])
            except ValueError:
                raise NewickError(f"bad branch length at offset {start}") from None
        return node

    def label(self) -> str:
        if self.peek() == "'":
            self.i += 1
            out = []
            while True:
                ch = self.peek()
                if not ch:
                    raise NewickError("unterminated quoted label")
                self.i += 1
                if ch == "'":
                    if self.peek() == "'":
                        out.append("'")
                        self.i += 1
                        continue
                    return "".join(out)
                out.append(ch)
        start = self.i
        while self.peek() and self.peek() not in "(),:;":
            self.i += 1
        return self.s[start:self.i].strip()


def parse_tree(text: str) -> NewickNode:
    return _Parser(text).parse()


def tree_to_dendrogram(root: NewickNode, leaves: Optional[List[Leaf]] = None) -> Dendrogram:
    """Rebuild a strictly binary tree. Heights come from the half-height
    branch convention measured along each node's first child; merges are
    ordered by height (children before parents)."""
    leaf_nodes: List[NewickNode] = []
    internal = []   # (height, post-order position, node)

    def walk(node: NewickNode) -> float:
        if node.is_leaf:
            leaf_nodes.append(node)
            return 0.0
        if len(node.children) != 2:
            raise NewickError("dendrograms are binary")
        heights = [walk(c) for c in node.children]
        first = node.children[0]
        if first.length is None:
            raise NewickError("internal branches need lengths")
        h = heights[0] + 2 * first.length
        internal.append((h, len(internal), node))
        return h

    walk(root)
    names = [n.name for n in leaf_nodes]
    if leaves is None:
        leaves = [Leaf(name) for name in names]
    elif [lf.name for lf in leaves] != names:
        raise NewickError("leaf names do not match the tree")
    ids = {id(n): i for i, n in enumerate(leaf_nodes)}
    size = {id(n): 1 for n in leaf_nodes}
    merges = []
    for h, _, node in sorted(internal, key=lambda t: (t[0], t[1])):
        left, right = node.children
        ids[id(node)] = len(leaf_nodes) + len(merges)
        size[id(node)] = size[id(left)] + size[id(right)]
        merges.append(Merge(ids[id(left)], ids[id(right)], h, size[id(node)]))
    return Dendrogram(list(leaves), merges)


def dendrogram_to_json(dendrogram: Dendrogram) -> dict:
    return {
        "leaves": [{"name": lf.name, "patient_id": lf.patient_id, "day_index": lf.day_index,
                    "has_attack": lf.has_attack} for lf in dendrogram.leaves],
        "merges": [{"left": m.left, "right": m.right, "height": m.height, "size": m.size}
                   for m in dendrogram.merges],
    }


def dendrogram_from_json(doc: dict) -> Dendrogram:
    leaves = [Leaf(d["name"], d.get("patient_id", ""), int(d.get("day_index", -1)),
                   bool(d.get("has_attack", False))) for d in doc["leaves"]]
    merges = [Merge(int(m["left"]), int(m["right"]), float(m["height"]), int(m["size"]))
              for m in doc["merges"]]
    if len(merges) != max(len(leaves) - 1, 0):
        raise ValueError("a binary tree over n leaves has n - 1 merges")
    return Dendrogram(leaves, merges)
