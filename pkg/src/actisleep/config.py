"""Declarative run configuration (YAML) with strict key checking."""
from __future__ import annotations

from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union, get_type_hints

import yaml

from .series import DaytimeConfig
from .synthgen import AttackSchedule, PatientProfile, nightly_attack_schedule


class ConfigError(ValueError):
    pass


@dataclass
class AttackConfig:
    patients: List[int] = field(default_factory=list)   # indices into the cohort
    days: List[int] = field(default_factory=list)
    nocturnal_fragmentation: float = 0.8
    onset_hour: float = 2.0
    duration_epochs: int = 90


@dataclass
class CohortConfig:
    patients: int = 3
    days: int = 20
    profile: Dict[str, Any] = field(default_factory=dict)          # PatientProfile overrides
    patient_profiles: Dict[int, Dict[str, Any]] = field(default_factory=dict)
    attacks: AttackConfig = field(default_factory=AttackConfig)


@dataclass
class WindowConfig:
    context: int = 360
    stride: int = 10
    smooth_half_width: int = 2
    train_fraction: float = 0.8


@dataclass
class TrainSection:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 0.01
    momentum: float = 0.9
    lr_decay: float = 0.5
    lr_decay_every: int = 5
    class_weighting: bool = False


@dataclass
class ClusterConfig:
    downsample: int = 10
    k: int = 2
    encoding: str = "states"   # or "activity"


@dataclass
class RunConfig:
    seed: int = 0
    model: str = "seq-cnn"
    cohort: CohortConfig = field(default_factory=CohortConfig)
    window: WindowConfig = field(default_factory=WindowConfig)
    train: TrainSection = field(default_factory=TrainSection)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    paths: Dict[str, str] = field(default_factory=dict)

    def profiles(self) -> List[PatientProfile]:
        out = []
        for i in range(self.cohort.patients):
            overrides = {**self.cohort.profile, **self.cohort.patient_profiles.get(i, {})}
            out.append(make_profile(overrides, f"cohort.profile (patient {i})"))
        return out

    def schedules(self) -> List[AttackSchedule]:
        a = self.cohort.attacks
        for p in a.patients:
            if not 0 <= p < self.cohort.patients:
                raise ConfigError(f"cohort.attacks.patients: no patient {p}")
        for d in a.days:
            if not 0 <= d < self.cohort.days:
                raise ConfigError(f"cohort.attacks.days: day {d} outside 0..{self.cohort.days - 1}")
        return [nightly_attack_schedule(a.days, a.nocturnal_fragmentation, a.onset_hour, a.duration_epochs)
                if i in a.patients else AttackSchedule()
                for i in range(self.cohort.patients)]


def make_profile(overrides: Dict[str, Any], where: str = "profile") -> PatientProfile:
    names = {f.name for f in fields(PatientProfile)}
    unknown = sorted(set(overrides) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kw = dict(overrides)
    for k in ("falling_duration_range", "siesta_duration_range"):
        if k in kw:
            kw[k] = tuple(int(v) for v in kw[k])
    if "daytime" in kw:
        kw["daytime"] = DaytimeConfig(**kw["daytime"])
    try:
        return PatientProfile(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _build(cls, data: Any, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    hints = get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(map(str, unknown))}")
    kw = {}
    for name, value in data.items():
        hint = hints[name]
        path = f"{where}.{name}" if where else name
        if is_dataclass(hint):
            kw[name] = _build(hint, value, path)
        else:
            kw[name] = _coerce(hint, value, path)
    return cls(**kw)


def _coerce(hint, value, where):
    origin = getattr(hint, "__origin__", None)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    if origin in (list, List):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        return [_coerce(hint.__args__[0], v, f"{where}[{i}]") for i, v in enumerate(value)]
    if origin in (dict, Dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a mapping")
        return dict(value)
    return value


def config_from_dict(data: Optional[dict]) -> RunConfig:
    cfg = _build(RunConfig, data or {}, "")
    cfg.profiles()    # validate profile overrides early
    cfg.schedules()
    if cfg.cluster.encoding not in ("states", "activity"):
        raise ConfigError("cluster.encoding must be 'states' or 'activity'")
    return cfg


def load_config(path: Union[str, Path, None]) -> RunConfig:
    if path is None:
        return config_from_dict({})
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
