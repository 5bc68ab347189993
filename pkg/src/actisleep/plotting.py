"""Report figures rendered to files with the Agg backend."""
from __future__ import annotations

import io
from typing import Optional, Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .cluster import Dendrogram
from .fileio import PathLike, atomic_write
from .metrics import REPORT_ORDER, ConfusionMatrix, ConvergenceCurve
from .series import SleepState

_STYLE = {"dpi": 110}
_COLORS = ("#1f4e79", "#c0504d", "#4f8a3c", "#7f6084")


def _save(fig: Figure, path: PathLike) -> None:
    FigureCanvasAgg(fig)
    buf = io.BytesIO()
    # no software/date stamps so re-renders are byte-stable
    fig.savefig(buf, format="png", dpi=_STYLE["dpi"], metadata={"Software": None})
    atomic_write(path, buf.getvalue())


def plot_convergence(curves: Sequence[ConvergenceCurve], path: PathLike,
                     thresholds: Sequence[float] = (0.90,)) -> None:
    """Test accuracy (solid) and train accuracy (dashed) per epoch."""
    fig = Figure(figsize=(6.4, 4.0))
    ax = fig.add_subplot(1, 1, 1)
    for i, c in enumerate(curves):
        color = _COLORS[i % len(_COLORS)]
        ax.plot(c.epochs, c.test_accuracy, "-o", ms=3, color=color, label=f"{c.model} test")
        ax.plot(c.epochs, c.train_accuracy, "--", color=color, alpha=0.6, label=f"{c.model} train")
    for t in thresholds:
        ax.axhline(t, color="0.6", lw=0.8, ls=":")
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.grid(alpha=0.25)
    ax.legend(loc="lower right", fontsize=8, frameon=False)
    fig.tight_layout()
    _save(fig, path)


def plot_confusion(cm: ConfusionMatrix, path: PathLike, title: Optional[str] = None) -> None:
    """Column-normalised heatmap (each actual state sums to 1) annotated
    with raw counts; rows predicted, columns actual."""
    order = list(REPORT_ORDER)
    counts = cm.counts[np.ix_(order, order)]
    col = counts.sum(axis=0, keepdims=True)
    share = np.divide(counts, col, out=np.zeros(counts.shape), where=col > 0)
    names = [SleepState(s).label for s in order]

    fig = Figure(figsize=(5.2, 4.6))
    ax = fig.add_subplot(1, 1, 1)
    im = ax.imshow(share, cmap="Blues", vmin=0, vmax=1)
    ax.set_xticks(range(len(names)), names, rotation=30, ha="right")
    ax.set_yticks(range(len(names)), names)
    ax.set_xlabel("actual")
    ax.set_ylabel("predicted")
    for i in range(len(names)):
        for j in range(len(names)):
            ax.text(j, i, f"{counts[i, j]:,}", ha="center", va="center", fontsize=8,
                    color="white" if share[i, j] > 0.6 else "black")
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def plot_dendrogram(tree: Dendrogram, path: PathLike, assignment: Optional[Sequence[int]] = None) -> None:
    """Leaves along x in tree order; attack days in red. Leaf labels are
    coloured by cluster when an assignment is given."""
    order = []
    stack = [tree.root]
    while stack:
        node = stack.pop()
        kids = tree.children(node)
        if kids:
            stack.extend(reversed(kids))
        else:
            order.append(node)
    x = {leaf: float(i) for i, leaf in enumerate(order)}

    fig = Figure(figsize=(max(6.0, 0.22 * len(order)), 4.2))
    ax = fig.add_subplot(1, 1, 1)
    for k, m in enumerate(tree.merges):
        node = tree.n_leaves + k
        xl, xr = x[m.left], x[m.right]
        hl, hr = tree.height(m.left), tree.height(m.right)
        ax.plot([xl, xl, xr, xr], [hl, m.height, m.height, hr], color=_COLORS[0], lw=0.9)
        x[node] = (xl + xr) / 2
    names = [tree.leaves[i].name for i in order]
    ax.set_xticks(range(len(order)), names, rotation=90, fontsize=6)
    for tick, leaf in zip(ax.get_xticklabels(), order):
        if tree.leaves[leaf].has_attack:
            tick.set_color(_COLORS[1])
        elif assignment is not None:
            tick.set_color(_COLORS[2 + int(assignment[leaf]) % 2])
    ax.set_ylabel("DTW distance")
    ax.set_xlim(-0.5, len(order) - 0.5)
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    _save(fig, path)
