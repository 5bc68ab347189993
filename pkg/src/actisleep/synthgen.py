"""Seeded synthetic actigraphy cohorts with four-state labels and attack tags.

Random numbers come from numpy's PCG64 bit generator
(``np.random.Generator(np.random.PCG64(seed))``); per-patient streams are
spawned from one ``SeedSequence`` so a cohort is reproducible from a single
integer. Activity units are arbitrary.

Each simulated day runs midnight to midnight. The series opens in Sleep (the
tail of the night before), then alternates: rise -> Wake (with an optional
Siesta) -> bedtime -> Falling asleep ramp -> Sleep -> next rise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .series import EPOCHS_PER_DAY, DaytimeConfig, LabeledSeries, SleepState

EPOCHS_PER_HOUR = 120

W, F, Z, S = (int(s) for s in (SleepState.WAKE, SleepState.FALLING_ASLEEP,
                               SleepState.SIESTA, SleepState.SLEEP))


@dataclass(frozen=True)
class PatientProfile:
    wake_mean: float = 300.0
    wake_std: float = 110.0
    sleep_mean: float = 4.0
    sleep_std: float = 4.0
    siesta_mean: float = 30.0
    siesta_std: float = 15.0
    restlessness: float = 0.02
    burst_mean: float = 150.0
    burst_std: float = 60.0
    falling_duration_range: Tuple[int, int] = (20, 50)
    siesta_probability_per_day: float = 0.6
    siesta_duration_range: Tuple[int, int] = (60, 180)
    bed_time: float = 23.0
    bed_jitter: float = 1.0
    rise_time: float = 7.0
    rise_jitter: float = 0.75
    daytime: DaytimeConfig = field(default_factory=DaytimeConfig)
    falling_style: str = "ramp"   # or "sparse": Wake-level bursts thinning out

    def __post_init__(self):
        if self.falling_style not in ("ramp", "sparse"):
            raise ValueError("falling_style must be 'ramp' or 'sparse'")
        if not self.wake_mean > self.sleep_mean >= 0:
            raise ValueError("profile needs wake_mean > sleep_mean >= 0")
        if not self.sleep_mean <= self.siesta_mean < self.wake_mean:
            raise ValueError("profile needs sleep_mean <= siesta_mean < wake_mean")
        stds = (self.wake_std, self.sleep_std, self.siesta_std, self.burst_std)
        if min(stds) < 0:
            raise ValueError("standard deviations must be >= 0")
        for p in (self.restlessness, self.siesta_probability_per_day):
            if not 0 <= p <= 1:
                raise ValueError("probabilities must lie in [0, 1]")
        for lo, hi in (self.falling_duration_range, self.siesta_duration_range):
            if not 1 <= lo <= hi:
                raise ValueError("duration ranges need 1 <= low <= high")
        if not (0 <= self.rise_time - self.rise_jitter
                and self.rise_time + self.rise_jitter < self.bed_time - self.bed_jitter):
            raise ValueError("rise window must precede the bedtime window")
        if self.bed_time + self.bed_jitter > 24:
            raise ValueError("bedtime window must end by midnight")


@dataclass(frozen=True)
class AttackSchedule:
    """Attack tags for one patient.

    ``attack_epoch_ranges`` are inclusive epoch spans; each must lie within
    one of ``attack_days`` and every attack day needs at least one span.
    ``nocturnal_fragmentation`` is the per-slot probability of breaking the
    Sleep on an attack day with an inserted Wake run.
    """

    attack_days: FrozenSet[int] = frozenset()
    nocturnal_fragmentation: float = 0.0
    attack_epoch_ranges: Tuple[Tuple[int, int], ...] = ()
    slot_length: int = 24
    wake_run_range: Tuple[int, int] = (6, 14)

    def __post_init__(self):
        object.__setattr__(self, "attack_days", frozenset(int(d) for d in self.attack_days))
        object.__setattr__(self, "attack_epoch_ranges",
                           tuple((int(a), int(b)) for a, b in self.attack_epoch_ranges))
        if not 0 <= self.nocturnal_fragmentation <= 1:
            raise ValueError("nocturnal_fragmentation must lie in [0, 1]")
        lo, hi = self.wake_run_range
        if not 1 <= lo <= hi or hi + 2 > self.slot_length:
            raise ValueError("wake runs must fit strictly inside a fragmentation slot")
        covered = set()
        for a, b in self.attack_epoch_ranges:
            if a > b:
                raise ValueError(f"attack range {a}..{b} is reversed")
            day = a // EPOCHS_PER_DAY
            if b // EPOCHS_PER_DAY != day or day not in self.attack_days:
                raise ValueError(f"attack range {a}..{b} does not sit inside an attack day")
            covered.add(day)
        if covered != set(self.attack_days):
            raise ValueError("every attack day needs at least one attack range")


def nightly_attack_schedule(attack_days: Sequence[int], fragmentation: float,
                            onset_hour: float = 2.0, duration_epochs: int = 90) -> AttackSchedule:
    """One attack per listed day, starting ``onset_hour`` after midnight."""
    start = int(round(onset_hour * EPOCHS_PER_HOUR))
    ranges = tuple((d * EPOCHS_PER_DAY + start, d * EPOCHS_PER_DAY + start + duration_epochs - 1)
                   for d in sorted(set(attack_days)))
    return AttackSchedule(frozenset(attack_days), fragmentation, ranges)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(int(seed)))


def _truncated_normal(rng: np.random.Generator, mean, std, size) -> np.ndarray:
    return np.maximum(rng.normal(mean, std, size), 0.0)


def _clock_epoch(day: int, hour: float) -> int:
    return day * EPOCHS_PER_DAY + int(round(hour * EPOCHS_PER_HOUR))


def _jittered(rng: np.random.Generator, centre: float, jitter: float) -> float:
    return centre + rng.uniform(-jitter, jitter) if jitter > 0 else centre


def _label_schedule(profile: PatientProfile, num_days: int, rng: np.random.Generator) -> np.ndarray:
    n = num_days * EPOCHS_PER_DAY
    states = np.full(n, S, dtype=np.int8)
    day_lo = profile.daytime.day_start
    day_hi = profile.daytime.day_end
    for d in range(num_days):
        rise = _clock_epoch(d, _jittered(rng, profile.rise_time, profile.rise_jitter))
        bed = _clock_epoch(d, _jittered(rng, profile.bed_time, profile.bed_jitter))
        fall = int(rng.integers(profile.falling_duration_range[0], profile.falling_duration_range[1] + 1))
        states[rise:bed] = W
        # the ramp needs at least one Sleep epoch after it inside the series
        if bed + fall < n:
            states[bed:bed + fall] = F
        else:
            states[bed:n] = W

        if rng.random() < profile.siesta_probability_per_day:
            length = int(rng.integers(profile.siesta_duration_range[0], profile.siesta_duration_range[1] + 1))
            lo = max(_clock_epoch(d, day_lo), rise + 1)
            hi = min(_clock_epoch(d, day_hi), bed - 1) - length  # last admissible start
            if hi >= lo:
                start = int(rng.integers(lo, hi + 1))
                states[start:start + length] = Z
    return states


def _activity_for(states: np.ndarray, profile: PatientProfile, rng: np.random.Generator) -> np.ndarray:
    n = states.size
    act = np.empty(n)
    noise = rng.standard_normal(n)

    wake = states == W
    act[wake] = profile.wake_mean + profile.wake_std * noise[wake]
    siesta = states == Z
    act[siesta] = profile.siesta_mean + profile.siesta_std * noise[siesta]
    sleep = states == S
    act[sleep] = profile.sleep_mean + profile.sleep_std * noise[sleep]
    bursts = sleep & (rng.random(n) < profile.restlessness)
    act[bursts] = profile.burst_mean + profile.burst_std * noise[bursts]

    # Falling asleep: linear ramp from the Wake level down to the Sleep level
    fall_idx = np.flatnonzero(states == F)
    if fall_idx.size:
        breaks = np.flatnonzero(np.diff(fall_idx) > 1) + 1
        for run in np.split(fall_idx, breaks):
            frac = (np.arange(run.size) + 1) / (run.size + 1)
            if profile.falling_style == "sparse":
                burst = rng.random(run.size) < 1.0 - frac
                act[run] = np.where(burst, profile.wake_mean + profile.wake_std * noise[run],
                                    profile.sleep_mean + profile.sleep_std * noise[run])
                continue
            mean = profile.wake_mean + frac * (profile.sleep_mean - profile.wake_mean)
            std = profile.wake_std + frac * (profile.sleep_std - profile.wake_std)
            act[run] = mean + std * noise[run]
    return np.maximum(act, 0.0)


def generate_patient_series(profile: PatientProfile, num_days: int, seed, patient_id: str = "P00") -> LabeledSeries:
    if num_days < 1:
        raise ValueError("num_days must be >= 1")
    rng = _rng(seed)
    states = _label_schedule(profile, num_days, rng)
    activity = _activity_for(states, profile, rng)
    return LabeledSeries(patient_id=patient_id, activity=activity, states=states,
                         attack=np.zeros(states.size, dtype=bool))


def apply_attack_schedule(series: LabeledSeries, schedule: AttackSchedule, seed,
                          profile: Optional[PatientProfile] = None) -> LabeledSeries:
    """Tag attack epochs and fragment the Sleep of attack days.

    Each attack day's Sleep runs are cut into ``slot_length`` slots; with
    probability ``nocturnal_fragmentation`` a slot gets a Wake run placed
    strictly inside it, so a Sleep epoch always stays on both sides and the
    label grammar still holds. Inserted Wake epochs draw fresh Wake-level
    activity from ``profile`` (default profile when omitted).
    """
    if series.states is None:
        raise ValueError("attack schedules apply to labeled series only")
    n = len(series)
    for a, b in schedule.attack_epoch_ranges:
        if a < 0 or b >= n:
            raise ValueError(f"attack range {a}..{b} lies outside the series (length {n})")
    profile = profile or PatientProfile()
    rng = _rng(seed)
    attack = np.zeros(n, dtype=bool)
    for a, b in schedule.attack_epoch_ranges:
        attack[a:b + 1] = True

    states = np.array(series.states)
    activity = np.array(series.activity)
    lo, hi = schedule.wake_run_range
    L = schedule.slot_length
    for d in sorted(schedule.attack_days):
        seg = slice(d * EPOCHS_PER_DAY, min((d + 1) * EPOCHS_PER_DAY, n))
        day_states = states[seg]
        sleep_idx = np.flatnonzero(day_states == S) + seg.start
        if sleep_idx.size == 0:
            continue
        breaks = np.flatnonzero(np.diff(sleep_idx) > 1) + 1
        for run in np.split(sleep_idx, breaks):
            for k in range(run.size // L):
                slot0 = int(run[k * L])
                draw = rng.random()
                length = int(rng.integers(lo, hi + 1))
                offset = int(rng.integers(1, L - length))
                if draw < schedule.nocturnal_fragmentation:
                    states[slot0 + offset:slot0 + offset + length] = W
                    activity[slot0 + offset:slot0 + offset + length] = _truncated_normal(
                        rng, profile.wake_mean, profile.wake_std, length)
    return series.replace(states=states, activity=activity, attack=attack)


def generate_cohort(profiles: Sequence[PatientProfile], schedules: Sequence[AttackSchedule],
                    num_days: int, seed: int) -> List[LabeledSeries]:
    if len(profiles) != len(schedules):
        raise ValueError(f"{len(profiles)} profiles but {len(schedules)} attack schedules")
    children = np.random.SeedSequence(int(seed)).spawn(len(profiles))
    cohort = []
    for i, (profile, schedule, child) in enumerate(zip(profiles, schedules, children)):
        gen_seed, attack_seed = child.spawn(2)
        s = generate_patient_series(profile, num_days, gen_seed, patient_id=f"P{i:02d}")
        cohort.append(apply_attack_schedule(s, schedule, attack_seed, profile))
    return cohort
