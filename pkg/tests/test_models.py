import numpy as np
import pytest

from actisleep.models import (MlpBaselineSpec, MultiTaskCnnSpec, SequentialCnnSpec, TrainConfig, TrainedModel,
                              TrainingDivergedError, build_dataset, build_model, engineer_features,
                              engineer_features_batch, make_mtl_targets, predict, predict_series, train)
from actisleep.models.builders import SLEEP_OUTPUT, STATE_OUTPUT, ConvStage
from actisleep.models.features import FEATURE_NAMES, SCALES
from actisleep.models.training import ModelNotReadyError, class_weights, multitask_loss
from actisleep.nn import NetworkGraph, OptimizerState, sgd_momentum_step, softmax
from actisleep.series import WindowSample

from conftest import S, W, Z, make_series

TINY_SEQ = SequentialCnnSpec(stages=[ConvStage(4, 5, 2), ConvStage(6, 3, 2)], dense=(16,), input_length=41)
TINY_MTL = MultiTaskCnnSpec(trunk=[ConvStage(4, 5, 2), ConvStage(4, 3, 1), ConvStage(6, 3, 2)],
                            left_dense=(8,), right_stages=[ConvStage(5, 2, 1)], right_dense=(12,),
                            post_concat_dense=(8,), input_length=41)


def _conv(width, cin, cout):
    return width * cin * cout + cout


def _dense(a, b):
    return a * b + b


def test_default_parameter_counts_match_hand_arithmetic():
    # 721 -conv16-> 706 -pool4-> 176 -conv8-> 169 -pool4-> 42 -conv8-> 35 -pool2-> 17
    seq = _conv(16, 1, 32) + _conv(8, 32, 64) + _conv(8, 64, 96) + _dense(17 * 96, 512) + _dense(512, 32) \
        + _dense(32, 4)
    assert seq == 918_884
    assert build_model(SequentialCnnSpec()).parameter_count() == seq
    # right branch: 17 -conv4-> 14 -pool2-> 7
    trunk = _conv(16, 1, 32) + _conv(8, 32, 64) + _conv(8, 64, 96)
    mtl = trunk + _dense(1632, 128) + _dense(128, 2) + _conv(4, 96, 96) + _dense(7 * 96, 512) \
        + _dense(513, 32) + _dense(32, 4)
    assert build_model(MultiTaskCnnSpec()).parameter_count() == mtl == 673_638


def test_mlp_shape_is_fixed():
    with pytest.raises(ValueError):
        MlpBaselineSpec(hidden=(10, 10))
    g = build_model(MlpBaselineSpec())
    assert [n for n in g.nodes if n.startswith("fc") and not n.endswith("relu")] == \
        ["fc1", "fc2", "fc3", "fc4", "fc5"]
    assert len(g.stochastic_layers) == 5


@pytest.mark.parametrize("spec", [SequentialCnnSpec(), MultiTaskCnnSpec(), MlpBaselineSpec()])
def test_outputs_are_distributions(spec, rng):
    g = build_model(spec, seed=1)
    x = rng.gamma(1.0, 50.0, size=(3,) + g.input_shape)
    probs = g.predict_proba(x)
    assert probs[STATE_OUTPUT].shape == (3, 4)
    for p in probs.values():
        assert np.all(p >= 0) and np.allclose(p.sum(axis=1), 1.0, rtol=0, atol=1e-12)
    if spec.kind == "mtl-cnn":
        assert probs[SLEEP_OUTPUT].shape == (3, 2)


def test_build_is_seed_deterministic():
    a, b = build_model(TINY_SEQ, seed=3), build_model(TINY_SEQ, seed=3)
    assert all(np.array_equal(v, b.parameters()[k]) for k, v in a.parameters().items())
    c = build_model(TINY_SEQ, seed=4)
    assert not np.array_equal(a.parameters()["conv1.w"], c.parameters()["conv1.w"])


# -- multi-task plumbing ----------------------------------------------------

def _mtl_batch(rng, n=5):
    x = rng.gamma(1.0, 40.0, size=(n, 41, 1))
    frac = rng.random(n)
    t = {STATE_OUTPUT: np.eye(4)[rng.integers(4, size=n)], SLEEP_OUTPUT: np.stack([frac, 1 - frac], axis=1)}
    return x, t


def test_mtl_loss_is_the_sum_of_branch_losses(rng):
    g = build_model(TINY_MTL, seed=2)
    x, t = _mtl_batch(rng)
    out = g.forward(x)
    total, parts, _ = multitask_loss(out, t, {})
    assert total == parts[STATE_OUTPUT] + parts[SLEEP_OUTPUT]
    half, _, _ = multitask_loss(out, t, {SLEEP_OUTPUT: 0.5})
    assert half == pytest.approx(parts[STATE_OUTPUT] + 0.5 * parts[SLEEP_OUTPUT], rel=1e-15)


def test_zero_auxiliary_weight_matches_single_task_graph(rng):
    g = build_model(TINY_MTL, seed=5)
    single = NetworkGraph.from_description(g.subgraph([STATE_OUTPUT]).describe())
    for k in single.parameters():
        single.set_param(k, g.parameters()[k].copy())
    x, t = _mtl_batch(rng, 6)
    sopt, mopt = OptimizerState(0.05, 0.9), OptimizerState(0.05, 0.9)
    for _ in range(3):
        _, _, mg = multitask_loss(g.forward(x, training=True), t, {SLEEP_OUTPUT: 0.0})
        g.backward(mg)
        sgd_momentum_step(g.parameters(), g.gradients(), mopt)
        _, _, sg = multitask_loss(single.forward(x, training=True), {STATE_OUTPUT: t[STATE_OUTPUT]}, {})
        single.backward(sg)
        sgd_momentum_step(single.parameters(), single.gradients(), sopt)
    for k, v in single.parameters().items():
        np.testing.assert_allclose(g.parameters()[k], v, rtol=0, atol=1e-10, err_msg=k)
    # the auxiliary head never moved
    fresh = build_model(TINY_MTL, seed=5)
    assert np.array_equal(g.parameters()[f"{SLEEP_OUTPUT}.w"], fresh.parameters()[f"{SLEEP_OUTPUT}.w"])


def test_centre_value_reaches_the_state_head(rng):
    g = build_model(TINY_MTL, seed=1)
    x = rng.gamma(1.0, 40.0, size=(1, 41, 1))
    base = g.forward(x, keep=["center", "norm"])
    assert base["center"][0, 0] == base["norm"][0, 20, 0]
    bumped = x.copy()
    bumped[0, 20, 0] += 500.0
    out = g.forward(bumped, keep=["center"])
    assert out["center"][0, 0] != base["center"][0, 0]
    assert not np.array_equal(out[STATE_OUTPUT], base[STATE_OUTPUT])


def test_mtl_targets_examples():
    def sample(labels):
        labels = np.asarray(labels)
        return WindowSample(np.zeros(labels.size), labels.size // 2, int(labels[labels.size // 2]), labels)

    t = make_mtl_targets(sample([S, S, W, W, W]))
    assert (t.sleep_fraction, t.awake_fraction) == (0.4, 0.6)
    assert t.center_onehot.tolist() == [1.0, 0.0, 0.0, 0.0]
    assert make_mtl_targets(sample([Z, Z, S])).sleep_fraction == 1.0
    with pytest.raises(ValueError):
        make_mtl_targets(WindowSample(np.zeros(3), 1, None, None))


def test_dataset_sleep_fraction_matches_targets(rng):
    states = np.repeat(rng.integers(0, 4, 30), 7)
    ds = build_dataset([make_series(states)], context=10, stride=3, smooth_half_width=0)
    for i, c in enumerate(ds.centers):
        expect = make_mtl_targets(WindowSample(np.zeros(21), 10, int(states[c]), states[c - 10:c + 11]))
        assert ds.sleep_fraction[i] == pytest.approx(expect.sleep_fraction, abs=1e-15)
        assert ds.labels[i] == states[c]


# -- features ---------------------------------------------------------------

def _reference_features(v):
    out = []
    med = np.median(v)
    for w in SCALES:
        s = v[360 - w // 2:360 + w // 2 + 1]
        mean = sum(s) / w
        dev = [a - mean for a in s]
        crossings = sum(1 for a, b in zip(dev, dev[1:]) if a * b < 0)
        out += [mean, np.sqrt(sum(d * d for d in dev) / w), min(s), max(s), sorted(s)[w // 2],
                sum(a < med for a in s) / w, crossings / (w - 1),
                sum(abs(b - a) for a, b in zip(s, s[1:])) / (w - 1), np.percentile(s, 90),
                sum(a * a for a in s) / w]
    return np.array(out)


def test_features_match_direct_computation(rng):
    v = rng.gamma(1.5, 30.0, 721)
    np.testing.assert_allclose(engineer_features(v), _reference_features(v), rtol=1e-9)
    assert len(FEATURE_NAMES) == 80 and len(set(FEATURE_NAMES)) == 80


def test_constant_window_features():
    f = dict(zip(FEATURE_NAMES, engineer_features(np.full(721, 7.0))))
    for w in SCALES:
        assert f[f"mean_w{w}"] == 7.0 and f[f"std_w{w}"] == 0.0
        assert f[f"zero_crossing_rate_w{w}"] == 0.0 and f[f"mean_abs_diff_w{w}"] == 0.0
        assert f[f"frac_below_median_w{w}"] == 0.0 and f[f"energy_w{w}"] == 49.0


def test_feature_permutation_sensitivity(rng):
    v = rng.gamma(1.5, 30.0, 721)
    v[358:363] = [1.0, 50.0, 2.0, 60.0, 3.0]
    p = v.copy()
    p[358:363] = [1.0, 2.0, 3.0, 50.0, 60.0]      # same values, new order
    a, b = (dict(zip(FEATURE_NAMES, engineer_features(x))) for x in (v, p))
    for w in SCALES:
        for stat in ("mean", "min", "max"):
            assert a[f"{stat}_w{w}"] == pytest.approx(b[f"{stat}_w{w}"], rel=1e-14)
    assert a["mean_abs_diff_w5"] != b["mean_abs_diff_w5"]


def test_feature_input_validation():
    with pytest.raises(ValueError, match="721"):
        engineer_features(np.zeros(100))
    batch = np.random.default_rng(0).random((3, 721))
    assert np.array_equal(engineer_features_batch(batch)[1], engineer_features(batch[1]))


# -- training ---------------------------------------------------------------

def _tiny_dataset(n_blocks=8, seed=0):
    rng = np.random.default_rng(seed)
    states = np.repeat(np.tile([W, S], n_blocks // 2), 60)
    activity = np.where(states == W, rng.gamma(4.0, 50.0, states.size), rng.gamma(1.0, 1.0, states.size))
    return build_dataset([make_series(states, activity)], context=20, stride=4)


def test_one_epoch_on_one_batch_is_one_step():
    ds = _tiny_dataset().subset(range(32))
    res = train(build_model(TINY_SEQ), ds, None, TrainConfig(epochs=1, batch_size=32))
    assert res.steps == 1 and res.best_epoch == 1


def test_training_is_bit_reproducible():
    ds = _tiny_dataset()
    tr, te = ds.split(0.8, seed=1)
    runs = [train(build_model(TINY_SEQ, seed=2), tr, te, TrainConfig(epochs=2, seed=9)) for _ in range(2)]
    pa, pb = (r.model.graph.parameters() for r in runs)
    assert all(pa[k].tobytes() == pb[k].tobytes() for k in pa)
    assert runs[0].curve.test_accuracy == runs[1].curve.test_accuracy


def test_separable_toy_is_learned():
    ds = _tiny_dataset(n_blocks=12)
    res = train(build_model(TINY_SEQ, seed=0), ds, None, TrainConfig(epochs=50, seed=0))
    assert max(res.curve.train_accuracy) == 1.0


def test_mlp_learns_separable_windows():
    rng = np.random.default_rng(1)
    states = np.repeat(np.tile([W, S], 6), 200)
    activity = np.where(states == W, rng.gamma(4.0, 50.0, states.size), rng.gamma(1.0, 1.0, states.size))
    ds = build_dataset([make_series(states, activity)], stride=20)
    res = train(build_model(MlpBaselineSpec(), seed=0), ds, None, TrainConfig(epochs=50, seed=0))
    assert max(res.curve.train_accuracy) == 1.0


def test_nan_loss_aborts_with_location():
    ds = _tiny_dataset()
    ds.sleep_fraction = np.full(len(ds), np.nan)      # corrupt auxiliary targets
    with pytest.raises(TrainingDivergedError, match=r"epoch 1, batch 0"):
        train(build_model(TINY_MTL), ds, None, TrainConfig(epochs=1))


def test_class_weights_example():
    w = class_weights(np.array([0, 0, 0, 3]))
    assert w.tolist() == [4 / 6, 0.0, 0.0, 2.0]


# -- prediction -------------------------------------------------------------

def test_predict_series_covers_every_epoch():
    g = build_model(TINY_SEQ, seed=0)
    model = TrainedModel(g, {"kind": "seq-cnn"}, {"context": 20, "smooth_half_width": 2})
    s = make_series(np.repeat([W, S, W], 40))
    out = predict_series(model, s)
    assert out.shape == (120,) and set(out.tolist()) <= {0, 1, 2, 3}
    assert np.all(out[:20] == out[20]) and np.all(out[100:] == out[99])
    p = predict(model, np.full(41, 3.0))
    assert p.shape == (4,) and p.sum() == pytest.approx(1.0)


def test_predict_series_on_a_full_window():
    g = build_model(SequentialCnnSpec(), seed=0)
    model = TrainedModel(g, {"kind": "seq-cnn"})
    out = predict_series(model, make_series(np.full(721, S)))
    assert out.shape == (721,) and np.all(out == out[360])


def test_unready_model_is_refused():
    g = NetworkGraph.from_description(build_model(TINY_SEQ).describe())
    with pytest.raises(ModelNotReadyError):
        predict(TrainedModel(g, {"kind": "seq-cnn"}), np.zeros(41))
    assert np.allclose(softmax(np.zeros(4)), 0.25)
