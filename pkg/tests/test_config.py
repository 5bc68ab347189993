import pytest

from actisleep.config import ConfigError, config_from_dict, load_config


def test_defaults():
    cfg = load_config(None)
    assert (cfg.cohort.patients, cfg.cohort.days, cfg.window.context) == (3, 20, 360)
    assert cfg.train.epochs == 20 and cfg.train.class_weighting is False
    assert len(cfg.profiles()) == 3 and all(not s.attack_days for s in cfg.schedules())


@pytest.mark.parametrize("doc, fragment", [
    ({"sed": 1}, "sed"),
    ({"train": {"epoch": 3}}, r"train: unknown key\(s\) epoch"),
    ({"cohort": {"profile": {"wake_meen": 3.0}}}, "wake_meen"),
    ({"cohort": {"attacks": {"patients": [0], "days": [1], "fragmentaton": 0.5}}}, "fragmentaton"),
])
def test_unknown_keys_are_errors(doc, fragment):
    with pytest.raises(ConfigError, match=fragment):
        config_from_dict(doc)


@pytest.mark.parametrize("doc", [
    {"seed": "seven"},
    {"train": {"class_weighting": 1}},
    {"window": {"stride": 2.5}},
    {"cohort": {"attacks": {"patients": [5]}}},
    {"cohort": {"attacks": {"patients": [0], "days": [40]}}},
    {"cluster": {"encoding": "colour"}},
])
def test_bad_values_are_errors(doc):
    with pytest.raises(ConfigError):
        config_from_dict(doc)


def test_yaml_file(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text(
        "seed: 4\n"
        "model: mtl-cnn\n"
        "cohort:\n"
        "  patients: 2\n"
        "  days: 21\n"
        "  patient_profiles: {1: {siesta_probability_per_day: 0.0}}\n"
        "  attacks: {patients: [0], days: [0, 1, 2], nocturnal_fragmentation: 0.5}\n"
        "train: {learning_rate: 1}\n"
    )
    cfg = load_config(p)
    assert cfg.seed == 4 and cfg.train.learning_rate == 1.0
    assert cfg.profiles()[1].siesta_probability_per_day == 0.0
    s0, s1 = cfg.schedules()
    assert s0.attack_days == frozenset({0, 1, 2}) and not s1.attack_days
    bad = tmp_path / "bad.yaml"
    bad.write_text("train: [1, 2\n")
    with pytest.raises(ConfigError, match="bad.yaml"):
        load_config(bad)
