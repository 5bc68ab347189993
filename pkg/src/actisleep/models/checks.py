"""Finite-difference gradient check of a full model on a small batch."""
from __future__ import annotations

import numpy as np

from ..nn import GradCheckReport, cross_entropy_loss, grad_check
from ..series import NUM_STATES
from .builders import SLEEP_OUTPUT, STATE_OUTPUT, build_model, default_spec
from .features import engineer_features_batch


def check_batch(kind: str, batch: int = 4, seed: int = 0):
    """Activity windows mixing quiet and active stretches, with random
    targets for every output."""
    rng = np.random.default_rng(seed)
    length = 721
    level = np.where(rng.random((batch, 1)) < 0.5, 5.0, 300.0)
    windows = rng.gamma(2.0, level / 2.0, size=(batch, length))
    x = engineer_features_batch(windows) if kind == "mlp" else windows[:, :, None]
    frac = rng.random(batch)
    targets = {STATE_OUTPUT: np.eye(NUM_STATES)[rng.integers(NUM_STATES, size=batch)],
               SLEEP_OUTPUT: np.stack([frac, 1 - frac], axis=1)}
    return x, targets


def run_gradcheck(kind: str, seed: int = 0, num_params: int = 200, tolerance: float = 1e-4,
                  step: float = 1e-5, batch: int = 4) -> GradCheckReport:
    """Build ``kind`` with seeded weights, fit its input normalisation to the
    probe batch and compare backprop against central differences with
    stochastic layers frozen (inference mode)."""
    graph = build_model(default_spec(kind), seed=seed)
    x, targets = check_batch(kind, batch, seed)
    norm = graph.nodes["norm"].layer
    v = np.log1p(x) if getattr(norm, "log", False) else x
    axis = 0 if kind == "mlp" else None
    mean, std = v.mean(axis=axis), v.std(axis=axis)
    norm.buffers["shift"] = np.asarray(mean, dtype=np.float64).reshape(norm.buffers["shift"].shape)
    norm.buffers["scale"] = np.where(np.asarray(std) > 0, std, 1.0).reshape(norm.buffers["scale"].shape)
    targets = {k: v for k, v in targets.items() if k in graph.outputs}
    return grad_check(graph, x, cross_entropy_loss(targets), step=step, tolerance=tolerance,
                      num_params=num_params, seed=seed, training=False)
