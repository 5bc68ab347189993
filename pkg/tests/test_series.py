import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from actisleep.series import (EPOCHS_PER_DAY, DaytimeConfig, Epoch, LabeledSeries, SeriesError, SleepState,
                              extract_windows, partition_days, smooth_series, split_indices, split_train_test,
                              validate_label_grammar, window_centers)

from conftest import F, S, W, Z, make_series


def test_state_codes_are_distinct_single_letters():
    codes = [s.code for s in SleepState]
    assert codes == ["W", "F", "Z", "S"]
    assert all(SleepState.from_code(s.code) is s for s in SleepState)
    with pytest.raises(ValueError):
        SleepState.from_code("X")


def test_series_rejects_gaps_and_off_grid_timestamps():
    with pytest.raises(SeriesError, match="gap"):
        LabeledSeries("P", [1.0, 2.0, 3.0], timestamps=[0, 30, 90])
    with pytest.raises(SeriesError, match="grid"):
        LabeledSeries("P", [1.0], timestamps=[45])
    with pytest.raises(SeriesError):
        LabeledSeries("P", [1.0, -2.0])


def test_from_epochs_requires_all_or_none_labels():
    eps = [Epoch(0, 1.0, SleepState.WAKE), Epoch(30, 2.0, None)]
    with pytest.raises(SeriesError, match="every epoch"):
        LabeledSeries.from_epochs("P", eps)
    s = LabeledSeries.from_epochs("P", [Epoch(0, 1.0), Epoch(30, 2.0)])
    assert s.states is None and len(s) == 2


def test_series_arrays_are_read_only():
    s = make_series([W, W, S])
    with pytest.raises(ValueError):
        s.activity[0] = 5.0


# -- smoothing --------------------------------------------------------------

@pytest.mark.parametrize("values, expected", [
    ([0, 0, 0], [0, 0, 0]),
    ([3, 3, 3, 3], [3, 3, 3, 3]),
    ([0, 6, 0], [3, 2, 3]),
])
def test_smoothing_examples(values, expected):
    s = LabeledSeries("P", np.array(values, dtype=float))
    assert smooth_series(s, 1).activity.tolist() == expected


def test_smoothing_empty_series_is_an_error():
    with pytest.raises(SeriesError):
        smooth_series(LabeledSeries("P", np.array([])), 2)


@given(st.floats(0, 1e6, allow_nan=False), st.integers(1, 60), st.integers(0, 8))
def test_smoothing_constant_signal_is_exact(c, n, h):
    s = LabeledSeries("P", np.full(n, c))
    out = smooth_series(s, h)
    assert np.array_equal(out.activity, s.activity)


def test_smoothing_matches_direct_truncated_average(rng):
    x = rng.gamma(2.0, 50.0, 40)
    s = make_series(np.full(40, W), activity=x)
    out = smooth_series(s, 2).activity
    direct = [np.mean(x[max(0, i - 2):i + 3]) for i in range(40)]
    np.testing.assert_allclose(out, direct, rtol=1e-13)
    assert np.array_equal(smooth_series(s, 2).states, s.states)


# -- windows ----------------------------------------------------------------

def test_window_counts_and_centres():
    s = LabeledSeries("P", np.arange(1000, dtype=float))
    ws = extract_windows(s, 360, 1)
    assert len(ws) == 280 and ws[0].center_index == 360 and ws[-1].center_index == 639
    assert len(extract_windows(LabeledSeries("P", np.zeros(721)))) == 1
    assert len(extract_windows(s, 360, 10)) == len([c for c in range(1000) if 360 <= c <= 639][::10]) == 28


def test_short_series_names_minimum_length():
    with pytest.raises(SeriesError, match="721"):
        extract_windows(LabeledSeries("P", np.zeros(720)))


@settings(max_examples=200)
@given(st.integers(1, 200), st.integers(0, 40), st.integers(1, 15))
def test_window_count_formula(n, context, stride):
    brute = [c for c in range(n) if c - context >= 0 and c + context <= n - 1][::stride]
    if n <= 2 * context:
        with pytest.raises(SeriesError):
            window_centers(n, context, stride)
        assert brute == []
    else:
        centers = window_centers(n, context, stride)
        assert centers.tolist() == brute
        assert len(centers) == max(0, math.ceil((n - 2 * context) / stride))


def test_window_values_are_views_of_the_source(rng):
    s = make_series(rng.integers(0, 4, 50), activity=rng.random(50))
    for w in extract_windows(s, 5, 3):
        c = w.center_index
        assert np.array_equal(w.values, s.activity[c - 5:c + 6])
        assert np.shares_memory(w.values, s.activity)
        assert int(w.center_label) == s.states[c]


# -- grammar ----------------------------------------------------------------

def _kinds(states, **kw):
    return [(v.position, v.kind) for v in validate_label_grammar(make_series(states, **kw))]


def test_grammar_examples():
    assert _kinds([W, W, F, F, S, S]) == []
    assert _kinds([W, F, W]) == [(1, "falling_asleep_not_before_sleep")]
    # Siesta at 00:00 is also outside day-time
    assert [k for _, k in _kinds([S, Z, S])] == ["siesta_not_after_wake", "siesta_not_before_wake",
                                                  "siesta_outside_daytime"]


def test_grammar_daytime_window():
    noon = 12 * 3600
    assert _kinds([W, Z, Z, W], start_clock=noon) == []
    late = 20 * 3600 - 60      # epoch 2 lands on 20:00:00
    assert _kinds([W, Z, Z, Z, W], start_clock=late) == [(2, "siesta_outside_daytime")]
    cfg = DaytimeConfig(0, 24)
    assert validate_label_grammar(make_series([W, Z, W]), cfg) == []


def test_grammar_needs_labels():
    with pytest.raises(SeriesError):
        validate_label_grammar(LabeledSeries("P", np.zeros(3)))


# -- split ------------------------------------------------------------------

def test_split_sizes_and_determinism():
    groups = ["A"] * 100
    tr, te = split_indices(groups, np.arange(100), 0.8, seed=4)
    assert (len(tr), len(te)) == (80, 20)
    te_sorted = np.sort(te)
    assert np.all(np.diff(te_sorted) == 1), "test block is contiguous"
    tr2, te2 = split_indices(groups, np.arange(100), 0.8, seed=4)
    assert np.array_equal(tr, tr2) and np.array_equal(te, te2)


def test_split_single_sample_goes_to_train():
    tr, te = split_indices(["A"], [0], 0.8, 0)
    assert (len(tr), len(te)) == (1, 0)
    with pytest.raises(ValueError):
        split_indices([], [], 0.8, 0)
    with pytest.raises(ValueError):
        split_indices(["A"], [0], 1.0, 0)


@given(st.lists(st.integers(1, 30), min_size=1, max_size=5), st.floats(0.05, 0.95), st.integers(0, 99))
def test_split_within_one_sample_of_fraction(sizes, frac, seed):
    groups = [g for g, n in enumerate(sizes) for _ in range(n)]
    centers = [i for n in sizes for i in range(n)]
    tr, te = split_indices(groups, centers, frac, seed)
    n = len(groups)
    assert abs(len(tr) - frac * n) <= 1
    assert sorted(np.concatenate([tr, te]).tolist()) == list(range(n))
    for g in range(len(sizes)):
        held = sorted(c for i, c in enumerate(centers) if groups[i] == g and i in set(te.tolist()))
        assert held == list(range(held[0], held[0] + len(held))) if held else True


def test_split_train_test_on_samples():
    s = make_series(np.full(800, W))
    tr, te = split_train_test(extract_windows(s, 10, 1), 0.8, 1)
    assert len(tr) + len(te) == 780 and len(tr) == 624


# -- days -------------------------------------------------------------------

def test_partition_days():
    states = np.full(6000, S)
    attack = np.zeros(6000, dtype=bool)
    attack[2880 + 7] = True
    days = partition_days(make_series(states, attack=attack))
    assert len(days) == 2
    assert [d.has_attack for d in days] == [False, True]
    assert days[1].name == "P00_day1"
    assert partition_days(make_series(np.full(100, S))) == []


def test_partition_days_reconstructs_prefix(rng):
    states = rng.integers(0, 4, 3 * EPOCHS_PER_DAY + 17)
    days = partition_days(make_series(states))
    assert np.array_equal(np.concatenate([d.states for d in days]), states[:3 * EPOCHS_PER_DAY])
