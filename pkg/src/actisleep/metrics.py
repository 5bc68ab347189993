"""Confusion matrices, per-state precision/recall and convergence curves.

Confusion matrices are indexed ``counts[predicted][actual]``: precision of a
state reads along its row, recall down its column.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .series import NUM_STATES, SleepState

THRESHOLDS = (0.90, 0.95, 0.99)
# Display order used by the report tables: Sleep, Siesta, Falling asleep, Wake
REPORT_ORDER = (SleepState.SLEEP, SleepState.SIESTA, SleepState.FALLING_ASLEEP, SleepState.WAKE)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (NUM_STATES, NUM_STATES):
            raise ValueError(f"confusion matrix must be {NUM_STATES}x{NUM_STATES}")
        if np.any(c < 0) or not np.array_equal(c, np.round(c)):
            raise ValueError("confusion counts must be non-negative integers")
        c = c.astype(np.int64)
        c.flags.writeable = False
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def predicted_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def actual_totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)


def confusion_matrix(predicted: Sequence[int], actual: Sequence[int]) -> ConfusionMatrix:
    p = np.asarray(predicted, dtype=np.int64)
    a = np.asarray(actual, dtype=np.int64)
    if p.shape != a.shape:
        raise ValueError(f"{p.size} predictions but {a.size} actual labels")
    if p.size == 0:
        raise ValueError("confusion matrix needs at least one pair")
    if min(p.min(), a.min()) < 0 or max(p.max(), a.max()) >= NUM_STATES:
        raise ValueError("labels must be state codes 0..3")
    counts = np.bincount(p * NUM_STATES + a, minlength=NUM_STATES * NUM_STATES)
    return ConfusionMatrix(counts.reshape(NUM_STATES, NUM_STATES))


@dataclass
class MetricsReport:
    precision: np.ndarray   # per state, NaN when undefined
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray     # actual count per state
    accuracy: float
    flags: List[str] = field(default_factory=list)

    @property
    def macro_precision(self) -> float:
        return _nanmean(self.precision)

    @property
    def macro_recall(self) -> float:
        return _nanmean(self.recall)

    @property
    def macro_f1(self) -> float:
        return _nanmean(self.f1)

    def rows(self) -> List[Tuple[str, float, float, float, int]]:
        return [(SleepState(s).label, self.precision[s], self.recall[s], self.f1[s], int(self.support[s]))
                for s in REPORT_ORDER]


def truncate(value: float, places: int = 3) -> float:
    """Cut (not round) to ``places`` decimals, the convention under which the
    published clinical tables are reproduced from their confusion matrices.
    A tiny tolerance absorbs binary representation error (0.1 + 0.2 style)."""
    if np.isnan(value):
        return value
    scale = 10 ** places
    return math.floor(value * scale + 1e-9) / scale


def _nanmean(a: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    return float(np.mean(a[~np.isnan(a)])) if np.any(~np.isnan(a)) else float("nan")


def precision_recall(cm: ConfusionMatrix) -> MetricsReport:
    """Per-state precision (diagonal / row sum) and recall (diagonal / column
    sum). A state with an empty row or column gets NaN and a flag."""
    counts = cm.counts.astype(np.float64)
    diag = np.diag(counts)
    rows, cols = counts.sum(axis=1), counts.sum(axis=0)
    flags = []
    precision = np.full(NUM_STATES, np.nan)
    recall = np.full(NUM_STATES, np.nan)
    for s in range(NUM_STATES):
        name = SleepState(s).label
        if rows[s] > 0:
            precision[s] = diag[s] / rows[s]
        else:
            flags.append(f"precision undefined for {name}: never predicted")
        if cols[s] > 0:
            recall[s] = diag[s] / cols[s]
        else:
            flags.append(f"recall undefined for {name}: never present")
    with np.errstate(invalid="ignore", divide="ignore"):
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / np.where(denom > 0, denom, 1.0), 0.0)
    f1[np.isnan(precision) | np.isnan(recall)] = np.nan
    total = counts.sum()
    accuracy = float(diag.sum() / total) if total > 0 else float("nan")
    return MetricsReport(precision, recall, f1, cols.astype(np.int64), accuracy, flags)


@dataclass
class ConvergenceCurve:
    model: str
    epochs: List[int] = field(default_factory=list)
    train_accuracy: List[float] = field(default_factory=list)
    test_accuracy: List[float] = field(default_factory=list)
    train_loss: List[float] = field(default_factory=list)
    test_loss: List[float] = field(default_factory=list)
    seconds: List[float] = field(default_factory=list)

    def append(self, epoch, train_accuracy, test_accuracy, train_loss, test_loss, seconds=float("nan")):
        if self.epochs and epoch <= self.epochs[-1]:
            raise ValueError("curve epochs must increase")
        self.epochs.append(int(epoch))
        self.train_accuracy.append(float(train_accuracy))
        self.test_accuracy.append(float(test_accuracy))
        self.train_loss.append(float(train_loss))
        self.test_loss.append(float(test_loss))
        self.seconds.append(float(seconds))

    def __len__(self):
        return len(self.epochs)


@dataclass
class CurveSummary:
    model: str
    epochs_to: Dict[float, Optional[int]]
    final_accuracy: float
    best_accuracy: float


def epochs_to_threshold(curve: ConvergenceCurve, threshold: float) -> Optional[int]:
    for e, acc in zip(curve.epochs, curve.test_accuracy):
        if acc >= threshold:
            return e
    return None


def compare_curves(curves: Sequence[ConvergenceCurve],
                   thresholds: Sequence[float] = THRESHOLDS) -> List[CurveSummary]:
    """First epoch at which each curve's test accuracy reaches each threshold
    (``None`` = not reached), plus final and best accuracy."""
    if not curves:
        raise ValueError("no curves to compare")
    out = []
    for c in curves:
        if len(c) == 0:
            raise ValueError(f"curve {c.model!r} is empty")
        out.append(CurveSummary(c.model, {t: epochs_to_threshold(c, t) for t in thresholds},
                                c.test_accuracy[-1], max(c.test_accuracy)))
    return out


def render_comparison(rows: Sequence[CurveSummary]) -> str:
    thresholds = list(rows[0].epochs_to) if rows else []
    head = f"{'model':<12}" + "".join(f"{'acc>=' + format(t, '.2f'):>12}" for t in thresholds)
    lines = [head + f"{'final':>9}{'best':>9}"]
    for r in rows:
        cells = "".join(f"{('not reached' if r.epochs_to[t] is None else r.epochs_to[t]):>12}" for t in thresholds)
        lines.append(f"{r.model:<12}{cells}{r.final_accuracy:>9.4f}{r.best_accuracy:>9.4f}")
    return "\n".join(lines)


def render_report(report: MetricsReport, cm: Optional[ConfusionMatrix] = None, title: str = "") -> str:
    """Plain-text precision/recall table and, when given, the confusion
    matrix (rows predicted, columns actual) in the same state order."""
    names = [SleepState(s).label for s in REPORT_ORDER]
    fmt = lambda v: "   n/a" if np.isnan(v) else f"{v:6.3f}"
    lines = []
    if title:
        lines += [title, ""]
    lines.append(f"{'':<12}" + "".join(f"{n:>16}" for n in names))
    lines.append(f"{'Precision':<12}" + "".join(f"{fmt(report.precision[s]):>16}" for s in REPORT_ORDER))
    lines.append(f"{'Recall':<12}" + "".join(f"{fmt(report.recall[s]):>16}" for s in REPORT_ORDER))
    lines.append(f"{'F1':<12}" + "".join(f"{fmt(report.f1[s]):>16}" for s in REPORT_ORDER))
    lines.append("")
    lines.append(f"accuracy {report.accuracy:.4f}   macro precision {report.macro_precision:.4f}   "
                 f"macro recall {report.macro_recall:.4f}   macro F1 {report.macro_f1:.4f}")
    if cm is not None:
        lines += ["", f"{'Pred / Actual':<16}" + "".join(f"{n:>16}" for n in names)]
        for p in REPORT_ORDER:
            lines.append(f"{SleepState(p).label:<16}" +
                         "".join(f"{int(cm.counts[p, a]):>16,}" for a in REPORT_ORDER))
    for f in report.flags:
        lines.append(f"! {f}")
    return "\n".join(lines)
