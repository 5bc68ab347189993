"""Layers with hand-written backward passes.

Every layer caches what its backward pass needs during ``forward`` and
writes parameter gradients into ``self.grads``. Shapes passed to
``output_shape`` exclude the batch axis.
"""
from __future__ import annotations

from typing import Dict, Optional, Tuple

import numpy as np

from .functional import ShapeError, conv_output_length, im2col, maxpool_forward


class MissingCacheError(RuntimeError):
    pass


class Layer:
    kind = "layer"
    stochastic = False

    def __init__(self):
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self.buffers: Dict[str, np.ndarray] = {}
        self._cache = None

    def config(self) -> dict:
        return {}

    def output_shape(self, in_shape: Tuple[int, ...]) -> Tuple[int, ...]:
        return in_shape

    def init_params(self, rng: np.random.Generator) -> None:
        pass

    def forward(self, x, training: bool = False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def pattern(self) -> Optional[np.ndarray]:
        """Discrete branch choices made in the last forward (ReLU masks,
        pool argmax). Used to detect finite-difference steps that cross a kink."""
        return None

    def _take_cache(self):
        if self._cache is None:
            raise MissingCacheError(f"{self.kind} layer has no forward cache; run forward first")
        return self._cache

    def zero_grads(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)


def _fan_in_uniform(rng, shape, fan_in):
    limit = np.sqrt(3.0 / fan_in)  # unit-variance preactivations
    return rng.uniform(-limit, limit, size=shape)


class Conv1D(Layer):
    kind = "conv1d"

    def __init__(self, width: int, in_channels: int, out_channels: int, stride: int = 1):
        super().__init__()
        if min(width, in_channels, out_channels, stride) < 1:
            raise ValueError("conv width, channels and stride must be >= 1")
        self.width, self.in_channels, self.out_channels, self.stride = width, in_channels, out_channels, stride
        self.params = {"w": np.zeros((width, in_channels, out_channels)), "b": np.zeros(out_channels)}

    def config(self):
        return {"width": self.width, "in_channels": self.in_channels,
                "out_channels": self.out_channels, "stride": self.stride}

    def output_shape(self, in_shape):
        if len(in_shape) != 2 or in_shape[1] != self.in_channels:
            raise ShapeError(f"conv1d expects (length, {self.in_channels}), got {in_shape}")
        return (conv_output_length(in_shape[0], self.width, self.stride), self.out_channels)

    def init_params(self, rng):
        fan_in = self.width * self.in_channels
        self.params["w"] = _fan_in_uniform(rng, self.params["w"].shape, fan_in)
        self.params["b"] = np.zeros(self.out_channels)

    def forward(self, x, training=False):
        B, T, F = x.shape
        N, K = self.width, self.out_channels
        cols = im2col(x, N, self.stride)
        t_out = cols.shape[0] // B
        out = (cols @ self.params["w"].reshape(N * F, K) + self.params["b"]).reshape(B, t_out, K)
        self._cache = (cols, x.shape)
        return out

    def backward(self, dout):
        cols, (B, T, F) = self._take_cache()
        N, K, s = self.width, self.out_channels, self.stride
        t_out = dout.shape[1]
        d2 = dout.reshape(-1, K)
        self.grads["w"] = (cols.T @ d2).reshape(N, F, K)
        self.grads["b"] = d2.sum(axis=0)
        dcols = (d2 @ self.params["w"].reshape(N * F, K).T).reshape(B, t_out, N, F)
        dx = np.zeros((B, T, F))
        stop = s * (t_out - 1) + 1
        for n in range(N):
            dx[:, n:n + stop:s, :] += dcols[:, :, n, :]
        return dx


class MaxPool1D(Layer):
    kind = "maxpool1d"

    def __init__(self, width: int, stride: Optional[int] = None):
        super().__init__()
        stride = width if stride is None else stride
        if width < 1 or stride < 1:
            raise ValueError("pool width and stride must be >= 1")
        self.width, self.stride = width, stride

    def config(self):
        return {"width": self.width, "stride": self.stride}

    def output_shape(self, in_shape):
        if len(in_shape) != 2:
            raise ShapeError(f"maxpool1d expects (length, channels), got {in_shape}")
        return (conv_output_length(in_shape[0], self.width, self.stride), in_shape[1])

    def forward(self, x, training=False):
        out, idx = maxpool_forward(x, self.width, self.stride)
        self._cache = (idx, x.shape)
        return out

    def backward(self, dout):
        idx, shape = self._take_cache()
        dx = np.zeros(shape)
        t_out = dout.shape[1]
        stop = self.stride * (t_out - 1) + 1
        for j in range(self.width):
            dx[:, j:j + stop:self.stride, :] += np.where(idx == j, dout, 0.0)
        return dx

    def pattern(self):
        return None if self._cache is None else self._cache[0]


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False):
        mask = x > 0
        self._cache = mask
        return np.where(mask, x, 0.0)

    def backward(self, dout):
        return np.where(self._take_cache(), dout, 0.0)

    def pattern(self):
        return self._cache


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, training=False):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._take_cache())


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_units: int, out_units: int):
        super().__init__()
        if in_units < 1 or out_units < 1:
            raise ValueError("dense layer sizes must be >= 1")
        self.in_units, self.out_units = in_units, out_units
        self.params = {"w": np.zeros((in_units, out_units)), "b": np.zeros(out_units)}

    def config(self):
        return {"in_units": self.in_units, "out_units": self.out_units}

    def output_shape(self, in_shape):
        if in_shape != (self.in_units,):
            raise ShapeError(f"dense layer expects ({self.in_units},), got {in_shape}")
        return (self.out_units,)

    def init_params(self, rng):
        self.params["w"] = _fan_in_uniform(rng, self.params["w"].shape, self.in_units)
        self.params["b"] = np.zeros(self.out_units)

    def forward(self, x, training=False):
        self._cache = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, dout):
        x = self._take_cache()
        self.grads["w"] = x.T @ dout
        self.grads["b"] = dout.sum(axis=0)
        return dout @ self.params["w"].T


class BatchNorm(Layer):
    """Per-feature batch normalisation over ``(batch, units)`` input.

    Training uses minibatch statistics and updates running averages with
    ``decay``; inference uses the running averages.
    """

    kind = "batchnorm"

    def __init__(self, units: int, eps: float = 1e-5, decay: float = 0.99):
        super().__init__()
        if eps <= 0:
            raise ValueError("batchnorm epsilon must be > 0")
        self.units, self.eps, self.decay = units, eps, decay
        self.params = {"gamma": np.ones(units), "beta": np.zeros(units)}
        self.buffers = {"running_mean": np.zeros(units), "running_var": np.ones(units)}

    def config(self):
        return {"units": self.units, "eps": self.eps, "decay": self.decay}

    def output_shape(self, in_shape):
        if in_shape != (self.units,):
            raise ShapeError(f"batchnorm expects ({self.units},), got {in_shape}")
        return in_shape

    def init_params(self, rng):
        self.params["gamma"] = np.ones(self.units)
        self.params["beta"] = np.zeros(self.units)

    def forward(self, x, training=False):
        if training:
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            d = self.decay
            self.buffers["running_mean"] = d * self.buffers["running_mean"] + (1 - d) * mean
            self.buffers["running_var"] = d * self.buffers["running_var"] + (1 - d) * var
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, training)
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, dout):
        xhat, inv_std, training = self._take_cache()
        gamma = self.params["gamma"]
        self.grads["gamma"] = np.sum(dout * xhat, axis=0)
        self.grads["beta"] = dout.sum(axis=0)
        dxhat = dout * gamma
        if not training:
            return dxhat * inv_std
        B = dout.shape[0]
        return (inv_std / B) * (B * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0))


class Dropout(Layer):
    """Inverted dropout; identity at inference."""

    kind = "dropout"
    stochastic = True

    def __init__(self, keep: float = 0.9):
        super().__init__()
        if not 0 < keep <= 1:
            raise ValueError("dropout keep probability must lie in (0, 1]")
        self.keep = keep
        self.rng = np.random.default_rng(0)

    def config(self):
        return {"keep": self.keep}

    def forward(self, x, training=False):
        if not training or self.keep == 1.0:
            self._cache = None
            self._identity = True
            return x
        self._identity = False
        mask = (self.rng.random(x.shape) < self.keep) / self.keep
        self._cache = mask
        return x * mask

    def backward(self, dout):
        if getattr(self, "_identity", False):
            return dout
        return dout * self._take_cache()


class Normalize(Layer):
    """Fixed input standardisation ``(f(x) - shift) / scale`` with
    ``f = log1p`` when ``log`` is set. Not trainable; the constants travel
    with the checkpoint."""

    kind = "normalize"

    def __init__(self, shift=0.0, scale=1.0, log: bool = False):
        super().__init__()
        self.log = bool(log)
        self.buffers = {"shift": np.atleast_1d(np.asarray(shift, dtype=np.float64)),
                        "scale": np.atleast_1d(np.asarray(scale, dtype=np.float64))}
        if np.any(self.buffers["scale"] <= 0):
            raise ValueError("normalisation scale must be positive")

    def config(self):
        return {"log": self.log}

    def forward(self, x, training=False):
        self._cache = x
        f = np.log1p(x) if self.log else x
        return (f - self.buffers["shift"]) / self.buffers["scale"]

    def backward(self, dout):
        x = self._take_cache()
        d = dout / self.buffers["scale"]
        return d / (1.0 + x) if self.log else d


class Pick(Layer):
    """Select one position of a ``(length, channels)`` map -> ``(channels,)``."""

    kind = "pick"

    def __init__(self, index: int):
        super().__init__()
        self.index = int(index)

    def config(self):
        return {"index": self.index}

    def output_shape(self, in_shape):
        if len(in_shape) != 2 or not 0 <= self.index < in_shape[0]:
            raise ShapeError(f"cannot pick position {self.index} from {in_shape}")
        return (in_shape[1],)

    def forward(self, x, training=False):
        self._cache = x.shape
        return x[:, self.index, :].copy()

    def backward(self, dout):
        dx = np.zeros(self._take_cache())
        dx[:, self.index, :] = dout
        return dx


class Concat(Layer):
    """Join ``(units_i,)`` inputs along the feature axis, in input order."""

    kind = "concat"
    multi_input = True

    def output_shape(self, *in_shapes):
        if any(len(s) != 1 for s in in_shapes):
            raise ShapeError(f"concat joins flat vectors only, got {in_shapes}")
        return (sum(s[0] for s in in_shapes),)

    def forward(self, *xs, training=False):
        self._cache = [x.shape[1] for x in xs]
        return np.concatenate(xs, axis=1)

    def backward(self, dout):
        sizes = self._take_cache()
        cuts = np.cumsum(sizes)[:-1]
        return tuple(np.split(dout, cuts, axis=1))


LAYER_TYPES = {cls.kind: cls for cls in
               (Conv1D, MaxPool1D, ReLU, Flatten, Dense, BatchNorm, Dropout, Normalize, Pick, Concat)}
