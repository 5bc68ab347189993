"""Architectures: sequential CNN, multi-task CNN and the MLP baseline.

Default layer sizes are stand-ins: conv kernel widths 16/8 and dense sizes
512/32 follow the sizes used across the comparison baselines.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence, Tuple

from ..nn import (BatchNorm, Concat, Conv1D, Dense, Dropout, Flatten, MaxPool1D, NetworkGraph,
                  Normalize, Pick, ReLU)
from ..series import NUM_STATES, WINDOW_LENGTH

STATE_OUTPUT = "state"
SLEEP_OUTPUT = "sleep_fraction"
NUM_FEATURES = 80


@dataclass(frozen=True)
class ConvStage:
    filters: int
    width: int
    pool: int


DEFAULT_TRUNK = (ConvStage(32, 16, 4), ConvStage(64, 8, 4), ConvStage(96, 8, 2))


def _stages(raw) -> Tuple[ConvStage, ...]:
    return tuple(s if isinstance(s, ConvStage) else ConvStage(**s) for s in raw)


@dataclass(frozen=True)
class SequentialCnnSpec:
    stages: Tuple[ConvStage, ...] = DEFAULT_TRUNK
    dense: Tuple[int, ...] = (512, 32)
    input_length: int = WINDOW_LENGTH
    log_input: bool = True

    def __post_init__(self):
        object.__setattr__(self, "stages", _stages(self.stages))
        object.__setattr__(self, "dense", tuple(self.dense))

    kind = "seq-cnn"


@dataclass(frozen=True)
class MultiTaskCnnSpec:
    trunk: Tuple[ConvStage, ...] = DEFAULT_TRUNK
    left_dense: Tuple[int, ...] = (128,)
    right_stages: Tuple[ConvStage, ...] = (ConvStage(96, 4, 2),)
    right_dense: Tuple[int, ...] = (512,)
    post_concat_dense: Tuple[int, ...] = (32,)
    loss_weights: Tuple[float, float] = (1.0, 1.0)
    input_length: int = WINDOW_LENGTH
    log_input: bool = True

    def __post_init__(self):
        object.__setattr__(self, "trunk", _stages(self.trunk))
        object.__setattr__(self, "right_stages", _stages(self.right_stages))
        for name in ("left_dense", "right_dense", "post_concat_dense", "loss_weights"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if len(self.trunk) != 3:
            raise ValueError("the shared trunk has exactly three conv+pool stages")
        if len(self.loss_weights) != 2 or min(self.loss_weights) < 0:
            raise ValueError("loss_weights holds two non-negative weights")

    kind = "mtl-cnn"


@dataclass(frozen=True)
class MlpBaselineSpec:
    hidden: Tuple[int, ...] = (1024, 512, 64, 128, 32)
    num_features: int = NUM_FEATURES
    dropout_keep: float = 0.9
    batchnorm: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(self.hidden))
        if self.hidden != (1024, 512, 64, 128, 32):
            raise ValueError("the MLP baseline uses hidden layers 1024, 512, 64, 128, 32")

    kind = "mlp"


SPEC_TYPES = {cls.kind: cls for cls in (SequentialCnnSpec, MultiTaskCnnSpec, MlpBaselineSpec)}


def spec_to_dict(spec) -> dict:
    return {"kind": spec.kind, **asdict(spec)}


def spec_from_dict(data: dict):
    data = dict(data)
    kind = data.pop("kind")
    return SPEC_TYPES[kind](**data)


def _conv_stack(g: NetworkGraph, prefix: str, stages: Sequence[ConvStage], src: str) -> str:
    channels = g.shape_of(src)[1]
    for i, st in enumerate(stages, 1):
        g.add(f"{prefix}conv{i}", Conv1D(st.width, channels, st.filters), [src])
        g.add(f"{prefix}relu{i}", ReLU())
        src = g.add(f"{prefix}pool{i}", MaxPool1D(st.pool))
        channels = st.filters
    return src


def _dense_stack(g: NetworkGraph, prefix: str, sizes: Sequence[int], src: str) -> str:
    for i, units in enumerate(sizes, 1):
        g.add(f"{prefix}fc{i}", Dense(g.shape_of(src)[0], units), [src])
        src = g.add(f"{prefix}fc{i}_relu", ReLU())
    return src


def build_sequential_cnn(spec: SequentialCnnSpec = SequentialCnnSpec(), seed: int = 0) -> NetworkGraph:
    g = NetworkGraph((spec.input_length, 1), name=spec.kind)
    src = g.add("norm", Normalize(log=spec.log_input), ["input"])
    src = _conv_stack(g, "", spec.stages, src)
    src = g.add("flatten", Flatten())
    src = _dense_stack(g, "", spec.dense, src)
    g.add(STATE_OUTPUT, Dense(g.shape_of(src)[0], NUM_STATES), [src])
    g.set_outputs([STATE_OUTPUT])
    g.init_params(seed)
    return g


def build_multitask_cnn(spec: MultiTaskCnnSpec = MultiTaskCnnSpec(), seed: int = 0) -> NetworkGraph:
    """Shared conv trunk feeding two heads.

    Left head: dense layers -> 2 logits (sleep / awake share of the window).
    Right head: more conv+pool, dense, then the normalised centre-epoch
    value is appended before the final dense layers -> 4 state logits.
    """
    g = NetworkGraph((spec.input_length, 1), name=spec.kind)
    norm = g.add("norm", Normalize(log=spec.log_input), ["input"])
    trunk = _conv_stack(g, "", spec.trunk, norm)

    left = g.add("left_flatten", Flatten(), [trunk])
    left = _dense_stack(g, "left_", spec.left_dense, left)
    g.add(SLEEP_OUTPUT, Dense(g.shape_of(left)[0], 2), [left])

    right = _conv_stack(g, "right_", spec.right_stages, trunk)
    right = g.add("right_flatten", Flatten(), [right])
    right = _dense_stack(g, "right_", spec.right_dense, right)
    center = g.add("center", Pick(spec.input_length // 2), [norm])
    joined = g.add("concat", Concat(), [right, center])
    joined = _dense_stack(g, "head_", spec.post_concat_dense, joined)
    g.add(STATE_OUTPUT, Dense(g.shape_of(joined)[0], NUM_STATES), [joined])
    g.set_outputs([SLEEP_OUTPUT, STATE_OUTPUT])
    g.init_params(seed)
    return g


def build_mlp(spec: MlpBaselineSpec = MlpBaselineSpec(), seed: int = 0) -> NetworkGraph:
    g = NetworkGraph((spec.num_features,), name=spec.kind)
    src = g.add("norm", Normalize(shift=[0.0] * spec.num_features, scale=[1.0] * spec.num_features),
                ["input"])
    for i, units in enumerate(spec.hidden, 1):
        g.add(f"fc{i}", Dense(g.shape_of(src)[0], units), [src])
        if spec.batchnorm:
            g.add(f"bn{i}", BatchNorm(units))
        src = g.add(f"fc{i}_relu", ReLU())
        if spec.dropout_keep < 1.0:
            src = g.add(f"drop{i}", Dropout(spec.dropout_keep))
    g.add(STATE_OUTPUT, Dense(g.shape_of(src)[0], NUM_STATES), [src])
    g.set_outputs([STATE_OUTPUT])
    g.init_params(seed)
    return g


def build_model(spec, seed: int = 0) -> NetworkGraph:
    if isinstance(spec, SequentialCnnSpec):
        return build_sequential_cnn(spec, seed)
    if isinstance(spec, MultiTaskCnnSpec):
        return build_multitask_cnn(spec, seed)
    if isinstance(spec, MlpBaselineSpec):
        return build_mlp(spec, seed)
    raise TypeError(f"unknown model spec {type(spec).__name__}")


def default_spec(kind: str):
    try:
        return SPEC_TYPES[kind]()
    except KeyError:
        raise ValueError(f"unknown model {kind!r}; choose from {sorted(SPEC_TYPES)}") from None
