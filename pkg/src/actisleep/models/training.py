"""Minibatch SGD training, evaluation and prediction."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..metrics import ConfusionMatrix, ConvergenceCurve, confusion_matrix
from ..nn import NetworkGraph, OptimizerState, sgd_momentum_step, softmax, softmax_cross_entropy
from ..series import NUM_STATES, LabeledSeries, WindowSample, smooth_series, window_centers
from .builders import STATE_OUTPUT
from .data import WindowDataset
from .features import engineer_features_batch

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    pass


class ModelNotReadyError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 0.01
    momentum: float = 0.9
    lr_decay: float = 0.5
    lr_decay_every: int = 5
    class_weighting: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    def learning_rate_at(self, epoch: int) -> float:
        """Step-decayed rate for 1-based ``epoch``."""
        return self.learning_rate * self.lr_decay ** ((epoch - 1) // self.lr_decay_every)


@dataclass
class TrainedModel:
    """A frozen graph plus everything needed to feed it (the in-memory
    form of a checkpoint)."""

    graph: NetworkGraph
    spec: dict
    window: dict = field(default_factory=lambda: {"context": 360, "stride": 1, "smooth_half_width": 2})
    train_config: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.spec["kind"]


def model_inputs(kind: str, windows: np.ndarray) -> np.ndarray:
    return engineer_features_batch(windows) if kind == "mlp" else windows[:, :, None]


def fit_normalization(graph: NetworkGraph, train_set: WindowDataset) -> None:
    """Set the input standardisation constants from training data."""
    norm = graph.nodes["norm"].layer
    if graph.name == "mlp":
        f = train_set.features
        mean, std = f.mean(axis=0), f.std(axis=0)
        std = np.where(std > 0, std, 1.0)
    else:
        v = np.log1p(train_set.windows) if norm.log else train_set.windows
        mean, std = np.atleast_1d(v.mean()), np.atleast_1d(v.std())
        std = np.where(std > 0, std, 1.0)
    norm.buffers["shift"] = np.asarray(mean, dtype=np.float64).reshape(norm.buffers["shift"].shape)
    norm.buffers["scale"] = np.asarray(std, dtype=np.float64).reshape(norm.buffers["scale"].shape)


def class_weights(labels: np.ndarray) -> np.ndarray:
    counts = np.bincount(labels, minlength=NUM_STATES).astype(float)
    w = np.zeros(NUM_STATES)
    present = counts > 0
    w[present] = labels.size / (present.sum() * counts[present])
    return w


def multitask_loss(outputs: Dict[str, np.ndarray], targets: Dict[str, np.ndarray],
                   weights: Dict[str, float], sample_weight=None):
    """Weighted sum of per-output cross-entropies.

    Returns ``(total, per_output_losses, logit_grads)``.
    """
    total, parts, grads = 0.0, {}, {}
    for name in outputs:
        w = weights.get(name, 1.0)
        sw = sample_weight if name == STATE_OUTPUT else None
        loss, g = softmax_cross_entropy(outputs[name], targets[name], sw)
        parts[name] = loss
        total += w * loss
        grads[name] = w * g
    return total, parts, grads


@dataclass
class TrainResult:
    model: TrainedModel
    curve: ConvergenceCurve
    best_epoch: int
    steps: int


def _snapshot(graph: NetworkGraph):
    return ({k: v.copy() for k, v in graph.parameters().items()},
            {k: v.copy() for k, v in graph.buffers().items()})


def _restore(graph: NetworkGraph, snap) -> None:
    params, buffers = snap
    for k, v in params.items():
        graph.set_param(k, v)
    for k, v in buffers.items():
        graph.set_buffer(k, v)


def evaluate_dataset(graph: NetworkGraph, data: WindowDataset, loss_weights: Dict[str, float],
                     batch_size: int = 512) -> Tuple[float, float, np.ndarray]:
    """Return (state accuracy, weighted loss, predicted states)."""
    X = data.inputs(graph.name)
    T = data.targets()
    preds, loss_sum = [], 0.0
    for i in range(0, len(data), batch_size):
        out = graph.forward(X[i:i + batch_size], training=False)
        tgt = {k: T[k][i:i + batch_size] for k in out}
        total, _, _ = multitask_loss(out, tgt, loss_weights)
        loss_sum += total * out[STATE_OUTPUT].shape[0]
        preds.append(np.argmax(out[STATE_OUTPUT], axis=1))
    pred = np.concatenate(preds)
    return float(np.mean(pred == data.labels)), loss_sum / len(data), pred


def train(graph: NetworkGraph, train_set: WindowDataset, test_set: Optional[WindowDataset],
          config: TrainConfig, loss_weights: Optional[Dict[str, float]] = None,
          spec: Optional[dict] = None, window: Optional[dict] = None) -> TrainResult:
    """Train ``graph`` in place and keep the parameters of the epoch with the
    best test accuracy (earliest on ties; last epoch when no test set)."""
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    loss_weights = dict(loss_weights or {})
    graph.reseed(config.seed)
    fit_normalization(graph, train_set)
    rng = np.random.default_rng(config.seed)
    opt = OptimizerState(config.learning_rate, config.momentum)
    X = train_set.inputs(graph.name)
    T = train_set.targets()
    weights = class_weights(train_set.labels) if config.class_weighting else None
    n = len(train_set)
    curve = ConvergenceCurve(graph.name)
    best_acc, best_epoch, best = -1.0, 0, None
    steps = 0
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        opt.learning_rate = config.learning_rate_at(epoch)
        perm = rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for batch, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start:start + config.batch_size]
            out = graph.forward(X[idx], training=True)
            tgt = {k: T[k][idx] for k in out}
            sw = weights[train_set.labels[idx]] if weights is not None else None
            total, _, grads = multitask_loss(out, tgt, loss_weights, sw)
            if not np.isfinite(total):
                raise TrainingDivergedError(f"loss became {total} at epoch {epoch}, batch {batch}")
            graph.backward(grads)
            sgd_momentum_step(graph.parameters(), graph.gradients(), opt)
            steps += 1
            loss_sum += total * idx.size
            correct += int(np.sum(np.argmax(out[STATE_OUTPUT], axis=1) == train_set.labels[idx]))
        train_acc = correct / n
        if test_set is not None and len(test_set):
            test_acc, test_loss, _ = evaluate_dataset(graph, test_set, loss_weights)
        else:
            test_acc, test_loss = float("nan"), float("nan")
        curve.append(epoch, train_acc, test_acc, loss_sum / n, test_loss, time.perf_counter() - t0)
        log.info("%s epoch %d: loss %.4f train acc %.4f test acc %.4f", graph.name, epoch,
                 loss_sum / n, train_acc, test_acc)
        score = test_acc if np.isfinite(test_acc) else float(epoch)
        if score > best_acc:
            best_acc, best_epoch, best = score, epoch, _snapshot(graph)
    _restore(graph, best)
    graph.ready = True
    model = TrainedModel(graph, spec or {"kind": graph.name}, window or {}, asdict(config),
                         {"best_epoch": best_epoch, "best_test_accuracy": best_acc if test_set is not None else None})
    return TrainResult(model, curve, best_epoch, steps)


def evaluate(model: TrainedModel, data: WindowDataset) -> ConfusionMatrix:
    _check_ready(model.graph)
    _, _, pred = evaluate_dataset(model.graph, data, {})
    return confusion_matrix(pred, data.labels)


def _check_ready(graph: NetworkGraph) -> None:
    if not getattr(graph, "ready", False):
        raise ModelNotReadyError("model parameters are not loaded; train or load a checkpoint first")


def predict(model: TrainedModel, window) -> np.ndarray:
    """State distribution for one window (``WindowSample`` or raw values)."""
    _check_ready(model.graph)
    values = window.values if isinstance(window, WindowSample) else np.asarray(window, dtype=np.float64)
    X = model_inputs(model.kind, values[None, :])
    return softmax(model.graph.forward(X, training=False)[STATE_OUTPUT])[0]


def predict_series(model: TrainedModel, series: LabeledSeries, batch_size: int = 512) -> np.ndarray:
    """Per-epoch state codes for a whole series.

    The series is smoothed with the model's settings, every epoch with full
    context is classified, and the epochs within ``context`` of either end
    copy the nearest classified epoch. Ties go to the lowest state code.
    """
    _check_ready(model.graph)
    context = int(model.window.get("context", 360))
    half = int(model.window.get("smooth_half_width", 2))
    sm = smooth_series(series, half)
    centers = window_centers(len(sm), context, 1)
    windows = sliding_window_view(sm.activity, 2 * context + 1)
    pred = np.empty(centers.size, dtype=np.int8)
    for i in range(0, centers.size, batch_size):
        X = model_inputs(model.kind, windows[i:i + batch_size])
        pred[i:i + batch_size] = np.argmax(model.graph.forward(X, training=False)[STATE_OUTPUT], axis=1)
    out = np.empty(len(sm), dtype=np.int8)
    out[centers] = pred
    out[:context] = pred[0]
    out[centers[-1] + 1:] = pred[-1]
    return out
