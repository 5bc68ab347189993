"""Window datasets and multi-task targets."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..series import (DEFAULT_CONTEXT, NUM_STATES, LabeledSeries, SleepState, WindowSample,
                      smooth_series, split_indices, window_centers)
from .builders import SLEEP_OUTPUT, STATE_OUTPUT
from .features import engineer_features_batch

_ASLEEP = (int(SleepState.SLEEP), int(SleepState.SIESTA))


@dataclass(frozen=True)
class MtlTarget:
    sleep_fraction: float
    awake_fraction: float
    center_onehot: np.ndarray

    @property
    def distribution(self) -> np.ndarray:
        return np.array([self.sleep_fraction, self.awake_fraction])


def make_mtl_targets(sample: WindowSample) -> MtlTarget:
    """Share of Sleep + Siesta epochs in the window, its complement, and the
    one-hot centre state."""
    if sample.window_labels is None or sample.center_label is None:
        raise ValueError("multi-task targets need a labeled window")
    labels = np.asarray(sample.window_labels)
    asleep = int(np.isin(labels, _ASLEEP).sum())
    frac = asleep / labels.size
    onehot = np.zeros(NUM_STATES)
    onehot[int(sample.center_label)] = 1.0
    return MtlTarget(frac, 1.0 - frac, onehot)


@dataclass
class WindowDataset:
    windows: np.ndarray          # (n, 2 * context + 1) smoothed activity
    labels: np.ndarray           # (n,) centre state codes
    sleep_fraction: np.ndarray   # (n,) S/T over each window
    patient_ids: np.ndarray      # (n,) str
    centers: np.ndarray          # (n,) centre index in the source series
    _features: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.labels.size

    def subset(self, idx) -> "WindowDataset":
        idx = np.asarray(idx, dtype=np.int64)
        feats = None if self._features is None else self._features[idx]
        return WindowDataset(self.windows[idx], self.labels[idx], self.sleep_fraction[idx],
                             self.patient_ids[idx], self.centers[idx], feats)

    @property
    def features(self) -> np.ndarray:
        if self._features is None:
            self._features = engineer_features_batch(self.windows)
        return self._features

    def inputs(self, kind: str) -> np.ndarray:
        if kind == "mlp":
            return self.features
        return self.windows[:, :, None]

    def targets(self, idx=None) -> Dict[str, np.ndarray]:
        labels = self.labels if idx is None else self.labels[idx]
        frac = self.sleep_fraction if idx is None else self.sleep_fraction[idx]
        return {
            STATE_OUTPUT: np.eye(NUM_STATES)[labels],
            SLEEP_OUTPUT: np.stack([frac, 1.0 - frac], axis=1),
        }

    def split(self, train_fraction: float = 0.8, seed: int = 0):
        tr, te = split_indices(self.patient_ids.tolist(), self.centers, train_fraction, seed)
        return self.subset(tr), self.subset(te)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=NUM_STATES)


def build_dataset(series_list: Sequence[LabeledSeries], context: int = DEFAULT_CONTEXT, stride: int = 1,
                  smooth_half_width: int = 2) -> WindowDataset:
    """Smooth each series and cut labeled windows every ``stride`` epochs."""
    parts: Dict[str, List[np.ndarray]] = {k: [] for k in ("w", "y", "f", "p", "c")}
    w = 2 * context + 1
    for s in series_list:
        if s.states is None:
            raise ValueError(f"series {s.patient_id} is unlabeled")
        sm = smooth_series(s, smooth_half_width)
        centers = window_centers(len(sm), context, stride)
        starts = centers - context
        parts["w"].append(sliding_window_view(sm.activity, w)[starts])
        parts["y"].append(sm.states[centers].astype(np.int64))
        asleep = np.concatenate([[0], np.cumsum(np.isin(sm.states, _ASLEEP))])
        parts["f"].append((asleep[starts + w] - asleep[starts]) / w)
        parts["p"].append(np.full(centers.size, s.patient_id, dtype=object))
        parts["c"].append(centers)
    return WindowDataset(np.concatenate(parts["w"]), np.concatenate(parts["y"]),
                         np.concatenate(parts["f"]), np.concatenate(parts["p"]),
                         np.concatenate(parts["c"]))
