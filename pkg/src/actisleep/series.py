"""Activity series, the four-state label space, windowing and day partitioning.

A series is stored column-wise (numpy arrays) rather than as a list of
``Epoch`` objects; ``LabeledSeries.epochs`` materialises the row view on
demand. All arrays are made read-only at construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

EPOCH_SECONDS = 30
EPOCHS_PER_DAY = 2880
SECONDS_PER_DAY = 86400
DEFAULT_CONTEXT = 360
WINDOW_LENGTH = 2 * DEFAULT_CONTEXT + 1


class SleepState(IntEnum):
    WAKE = 0
    FALLING_ASLEEP = 1
    SIESTA = 2
    SLEEP = 3

    @property
    def code(self) -> str:
        return STATE_CODES[self]

    @classmethod
    def from_code(cls, code: str) -> "SleepState":
        try:
            return _CODE_TO_STATE[code]
        except KeyError:
            raise ValueError(f"unknown state code {code!r}") from None

    @property
    def label(self) -> str:
        return _STATE_NAMES[self]


STATE_CODES = {
    SleepState.WAKE: "W",
    SleepState.FALLING_ASLEEP: "F",
    SleepState.SIESTA: "Z",
    SleepState.SLEEP: "S",
}
_CODE_TO_STATE = {v: k for k, v in STATE_CODES.items()}
_STATE_NAMES = {
    SleepState.WAKE: "Wake",
    SleepState.FALLING_ASLEEP: "Falling asleep",
    SleepState.SIESTA: "Siesta",
    SleepState.SLEEP: "Sleep",
}
NUM_STATES = len(SleepState)


class SeriesError(ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Epoch:
    timestamp: int
    activity: float
    state: Optional[SleepState] = None
    attack: Optional[bool] = None

    def __post_init__(self):
        if self.timestamp < 0 or self.timestamp % EPOCH_SECONDS:
            raise SeriesError(f"timestamp {self.timestamp} is not a non-negative multiple of 30")
        if not self.activity >= 0:
            raise SeriesError(f"activity must be >= 0, got {self.activity}")


@dataclass(frozen=True, eq=False)
class LabeledSeries:
    """One patient's epoch sequence.

    ``start_clock`` is the wall-clock time of the first epoch in seconds after
    midnight. ``states`` and ``attack`` are either ``None`` or cover every
    epoch.
    """

    patient_id: str
    activity: np.ndarray
    states: Optional[np.ndarray] = None
    attack: Optional[np.ndarray] = None
    start_clock: int = 0
    timestamps: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        act = np.asarray(self.activity, dtype=np.float64)
        if act.ndim != 1:
            raise SeriesError("activity must be one-dimensional")
        if act.size and not np.all(act >= 0):
            raise SeriesError("activity must be non-negative and not NaN")
        n = act.size
        object.__setattr__(self, "activity", _frozen(act))

        if self.timestamps is None:
            ts = np.arange(n, dtype=np.int64) * EPOCH_SECONDS
        else:
            ts = np.asarray(self.timestamps, dtype=np.int64)
            if ts.shape != (n,):
                raise SeriesError("timestamps length differs from activity length")
            if n and ts[0] < 0:
                raise SeriesError("timestamps must be non-negative")
            if n and (ts[0] % EPOCH_SECONDS):
                raise SeriesError("timestamps must lie on the 30-second grid")
            if n > 1 and np.any(np.diff(ts) != EPOCH_SECONDS):
                bad = int(np.flatnonzero(np.diff(ts) != EPOCH_SECONDS)[0]) + 1
                raise SeriesError(f"timestamp gap or disorder at epoch {bad}")
        object.__setattr__(self, "timestamps", _frozen(ts))

        if self.states is not None:
            st = np.asarray(self.states)
            if st.shape != (n,):
                raise SeriesError("states length differs from activity length")
            if st.size and (st.min() < 0 or st.max() >= NUM_STATES):
                raise SeriesError("state codes must be in 0..3")
            object.__setattr__(self, "states", _frozen(st.astype(np.int8)))
        if self.attack is not None:
            at = np.asarray(self.attack, dtype=bool)
            if at.shape != (n,):
                raise SeriesError("attack length differs from activity length")
            object.__setattr__(self, "attack", _frozen(at))
        if self.start_clock < 0 or self.start_clock % EPOCH_SECONDS:
            raise SeriesError("start_clock must be a non-negative multiple of 30 seconds")

    def __len__(self) -> int:
        return self.activity.size

    @property
    def labeled(self) -> bool:
        return self.states is not None

    @property
    def epochs(self) -> List[Epoch]:
        out = []
        for i in range(len(self)):
            state = SleepState(int(self.states[i])) if self.states is not None else None
            attack = bool(self.attack[i]) if self.attack is not None else None
            out.append(Epoch(int(self.timestamps[i]), float(self.activity[i]), state, attack))
        return out

    def clock_hours(self) -> np.ndarray:
        """Wall-clock hour of day (0 <= h < 24) of each epoch."""
        secs = (self.start_clock + self.timestamps) % SECONDS_PER_DAY
        return secs / 3600.0

    def replace(self, **changes) -> "LabeledSeries":
        kwargs = dict(
            patient_id=self.patient_id,
            activity=self.activity,
            states=self.states,
            attack=self.attack,
            start_clock=self.start_clock,
            timestamps=self.timestamps,
        )
        kwargs.update(changes)
        return LabeledSeries(**kwargs)

    @classmethod
    def from_epochs(cls, patient_id: str, epochs: Sequence[Epoch], start_clock: int = 0) -> "LabeledSeries":
        labeled = [e.state is not None for e in epochs]
        if any(labeled) and not all(labeled):
            raise SeriesError("either every epoch is labeled or none is")
        tagged = [e.attack is not None for e in epochs]
        if any(tagged) and not all(tagged):
            raise SeriesError("either every epoch carries an attack tag or none does")
        return cls(
            patient_id=patient_id,
            activity=[e.activity for e in epochs],
            states=[int(e.state) for e in epochs] if epochs and all(labeled) else None,
            attack=[e.attack for e in epochs] if epochs and all(tagged) else None,
            start_clock=start_clock,
            timestamps=[e.timestamp for e in epochs],
        )

    def __eq__(self, other):
        if not isinstance(other, LabeledSeries):
            return NotImplemented
        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and np.array_equal(a, b)
        return (
            self.patient_id == other.patient_id
            and self.start_clock == other.start_clock
            and same(self.timestamps, other.timestamps)
            and same(self.activity, other.activity)
            and same(self.states, other.states)
            and same(self.attack, other.attack)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class WindowSample:
    """Activity context centred on one epoch.

    ``values`` and ``window_labels`` are read-only views into the source
    series arrays, not copies.
    """

    values: np.ndarray
    center_index: int
    center_label: Optional[SleepState]
    window_labels: Optional[np.ndarray]
    patient_id: str = ""

    @property
    def context(self) -> int:
        return (self.values.size - 1) // 2


@dataclass(frozen=True, eq=False)
class DayVector:
    patient_id: str
    day_index: int
    states: np.ndarray
    has_attack: bool

    def __post_init__(self):
        if self.states.shape != (EPOCHS_PER_DAY,):
            raise SeriesError(f"a day holds exactly {EPOCHS_PER_DAY} epochs")

    @property
    def name(self) -> str:
        return f"{self.patient_id}_day{self.day_index}"


@dataclass(frozen=True)
class DaytimeConfig:
    day_start: float = 8.0
    day_end: float = 20.0

    def __post_init__(self):
        if not 0 <= self.day_start < self.day_end <= 24:
            raise ValueError("need 0 <= day_start < day_end <= 24")

    def contains(self, hours: np.ndarray) -> np.ndarray:
        return (hours >= self.day_start) & (hours < self.day_end)


# ---------------------------------------------------------------------------
# operations

def smooth_series(series: LabeledSeries, half_width: int = 2) -> LabeledSeries:
    """Centred moving average with edge-truncated windows.

    Each output is ``x[i] + mean(x[j] - x[i])`` over the window, so a
    constant signal comes back bit-for-bit.
    """
    if half_width < 0:
        raise ValueError("half_width must be >= 0")
    x = series.activity
    n = x.size
    if n == 0:
        raise SeriesError("cannot smooth an empty series")
    if half_width == 0:
        return series
    padded = np.pad(x, half_width, constant_values=np.nan)
    win = sliding_window_view(padded, 2 * half_width + 1)
    dev = win - x[:, None]
    counts = np.sum(~np.isnan(dev), axis=1)
    smoothed = x + np.nansum(dev, axis=1) / counts
    # rounding can leave -0.0 or a tiny negative for near-zero inputs
    smoothed = np.maximum(smoothed, 0.0)
    return series.replace(activity=smoothed)


def window_centers(n: int, context: int = DEFAULT_CONTEXT, stride: int = 1) -> np.ndarray:
    if context < 0 or stride < 1:
        raise ValueError("context must be >= 0 and stride >= 1")
    if n <= 2 * context:
        raise SeriesError(
            f"series of length {n} is too short: windows with context {context} "
            f"need at least {2 * context + 1} epochs"
        )
    return np.arange(context, n - context, stride)


def extract_windows(series: LabeledSeries, context: int = DEFAULT_CONTEXT, stride: int = 1) -> List[WindowSample]:
    centers = window_centers(len(series), context, stride)
    w = 2 * context + 1
    values = sliding_window_view(series.activity, w)
    labels = sliding_window_view(series.states, w) if series.states is not None else None
    out = []
    for c in centers:
        start = c - context
        out.append(
            WindowSample(
                values=values[start],
                center_index=int(c),
                center_label=SleepState(int(series.states[c])) if labels is not None else None,
                window_labels=labels[start] if labels is not None else None,
                patient_id=series.patient_id,
            )
        )
    return out


@dataclass(frozen=True)
class GrammarViolation:
    position: int
    kind: str
    message: str


def _runs(states: np.ndarray) -> List[Tuple[int, int, int]]:
    """Maximal runs as (state, first, last) with inclusive bounds."""
    if states.size == 0:
        return []
    change = np.flatnonzero(np.diff(states)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change - 1, [states.size - 1]])
    return [(int(states[s]), int(s), int(e)) for s, e in zip(starts, ends)]


def validate_label_grammar(series: LabeledSeries, cfg: DaytimeConfig = DaytimeConfig()) -> List[GrammarViolation]:
    """Check the transition rules of the four-state label space.

    * every Falling-asleep run sits between a Wake epoch and a Sleep epoch;
    * every Siesta run has Wake on both sides;
    * Siesta only happens within ``[cfg.day_start, cfg.day_end)``.

    A run touching the series boundary lacks the required neighbour and is
    reported. Returns an empty list for a conforming series.
    """
    if series.states is None:
        raise SeriesError("grammar validation needs a labeled series")
    st = series.states
    n = st.size
    hours = series.clock_hours()
    report: List[GrammarViolation] = []
    for state, first, last in _runs(st):
        before = int(st[first - 1]) if first > 0 else None
        after = int(st[last + 1]) if last + 1 < n else None
        if state == SleepState.FALLING_ASLEEP:
            if before != SleepState.WAKE:
                report.append(GrammarViolation(first, "falling_asleep_not_after_wake",
                                               f"Falling-asleep run starting at {first} is not preceded by Wake"))
            if after != SleepState.SLEEP:
                report.append(GrammarViolation(last, "falling_asleep_not_before_sleep",
                                               f"Falling-asleep run ending at {last} is not followed by Sleep"))
        elif state == SleepState.SIESTA:
            if before != SleepState.WAKE:
                report.append(GrammarViolation(first, "siesta_not_after_wake",
                                               f"Siesta run starting at {first} is not preceded by Wake"))
            if after != SleepState.WAKE:
                report.append(GrammarViolation(last, "siesta_not_before_wake",
                                               f"Siesta run ending at {last} is not followed by Wake"))
            outside = np.flatnonzero(~cfg.contains(hours[first:last + 1]))
            if outside.size:
                pos = first + int(outside[0])
                report.append(GrammarViolation(pos, "siesta_outside_daytime",
                                               f"Siesta epoch {pos} falls outside day-time"))
    return report


def _allocate(sizes: Sequence[int], fraction: float) -> List[int]:
    """Split round-half-up(fraction * total) across groups by largest remainder."""
    total = int(sum(sizes))
    target = int(np.floor(fraction * total + 0.5))
    ideal = [fraction * s for s in sizes]
    alloc = [int(np.floor(v)) for v in ideal]
    remainder = target - sum(alloc)
    order = sorted(range(len(sizes)), key=lambda i: (-(ideal[i] - alloc[i]), i))
    for i in order[:remainder]:
        alloc[i] += 1
    return alloc


def split_indices(groups: Sequence, centers: Sequence[int], train_fraction: float = 0.8,
                  seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Contiguous per-group hold-out.

    Within each group (patient), samples are ordered by centre index and a
    single contiguous block is held out for testing; its offset is drawn
    from ``seed``. The train count is ``round_half_up(fraction * n)`` overall,
    distributed over groups by largest remainder.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    n = len(centers)
    if n == 0:
        raise ValueError("cannot split an empty sample list")
    groups = list(groups)
    centers = np.asarray(centers)
    keys = list(dict.fromkeys(groups))
    members = {k: [] for k in keys}
    for i, g in enumerate(groups):
        members[g].append(i)
    ordered = [sorted(members[k], key=lambda i: (centers[i], i)) for k in keys]
    n_train = _allocate([len(m) for m in ordered], train_fraction)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for idx, k_train in zip(ordered, n_train):
        k_test = len(idx) - k_train
        offset = int(rng.integers(0, len(idx) - k_test + 1))
        test.extend(idx[offset:offset + k_test])
        train.extend(idx[:offset] + idx[offset + k_test:])
    return np.array(train, dtype=np.int64), np.array(test, dtype=np.int64)


def split_train_test(samples: Sequence[WindowSample], train_fraction: float = 0.8,
                     seed: int = 0) -> Tuple[List[WindowSample], List[WindowSample]]:
    if not samples:
        raise ValueError("cannot split an empty sample list")
    tr, te = split_indices([s.patient_id for s in samples], [s.center_index for s in samples],
                           train_fraction, seed)
    return [samples[i] for i in tr], [samples[i] for i in te]


def partition_days(series: LabeledSeries) -> List[DayVector]:
    """Consecutive 24-hour blocks from the first epoch; a partial last day is dropped."""
    if series.states is None:
        raise SeriesError("day partitioning needs a labeled series")
    days = []
    for d in range(len(series) // EPOCHS_PER_DAY):
        sl = slice(d * EPOCHS_PER_DAY, (d + 1) * EPOCHS_PER_DAY)
        has_attack = bool(series.attack[sl].any()) if series.attack is not None else False
        days.append(DayVector(series.patient_id, d, _frozen(series.states[sl]), has_attack))
    return days
