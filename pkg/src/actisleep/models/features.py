"""Hand-built window features for the MLP baseline (catalog version 1).

For each of eight centred sub-windows (widths 5, 11, 21, 41, 81, 161, 321,
721) ten statistics are taken, giving 80 values ordered scale-major:

    mean, std (population), min, max, median,
    fraction of values strictly below the full-window median,
    zero-crossing rate of the mean-centred sub-window (sign changes / (w-1)),
    mean absolute first difference,
    90th percentile (linear interpolation),
    energy (mean of squares)
"""
from __future__ import annotations

import numpy as np

from ..series import WINDOW_LENGTH, WindowSample

FEATURE_CATALOG_VERSION = 1
SCALES = (5, 11, 21, 41, 81, 161, 321, 721)
STATISTICS = ("mean", "std", "min", "max", "median", "frac_below_median",
              "zero_crossing_rate", "mean_abs_diff", "p90", "energy")
FEATURE_NAMES = tuple(f"{stat}_w{w}" for w in SCALES for stat in STATISTICS)


def engineer_features_batch(windows: np.ndarray) -> np.ndarray:
    """``(n, 721)`` windows -> ``(n, 80)`` features."""
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 2 or windows.shape[1] != WINDOW_LENGTH:
        raise ValueError(f"expected windows of length {WINDOW_LENGTH}, got shape {windows.shape}")
    center = WINDOW_LENGTH // 2
    global_median = np.median(windows, axis=1, keepdims=True)
    blocks = []
    for w in SCALES:
        h = w // 2
        s = windows[:, center - h:center + h + 1]
        mean = s.mean(axis=1)
        dev = s - mean[:, None]
        signs = np.sign(dev)
        crossings = np.sum(signs[:, 1:] * signs[:, :-1] < 0, axis=1)
        blocks.append(np.stack([
            mean,
            s.std(axis=1),
            s.min(axis=1),
            s.max(axis=1),
            np.median(s, axis=1),
            np.mean(s < global_median, axis=1),
            crossings / (w - 1),
            np.mean(np.abs(np.diff(s, axis=1)), axis=1),
            np.percentile(s, 90, axis=1),
            np.mean(s * s, axis=1),
        ], axis=1))
    return np.concatenate(blocks, axis=1)


def engineer_features(window) -> np.ndarray:
    values = window.values if isinstance(window, WindowSample) else np.asarray(window)
    if values.shape != (WINDOW_LENGTH,):
        raise ValueError(f"feature extraction needs a {WINDOW_LENGTH}-value window, got {values.shape}")
    return engineer_features_batch(values[None, :])[0]
