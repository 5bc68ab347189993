import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from actisleep.nn import (BatchNorm, Concat, Conv1D, Dense, Dropout, Flatten, MaxPool1D, MissingCacheError,
                          NetworkGraph, NondeterministicGraphError, Normalize, OptimizerState, Pick, ReLU,
                          ShapeError, conv1d_forward, cross_entropy, cross_entropy_loss, dense_forward,
                          grad_check, maxpool_forward, relu, sgd_momentum_step, softmax, softmax_cross_entropy)

from oracles import conv_reference


# -- forward kernels --------------------------------------------------------

def test_conv_examples():
    x = np.array([[1.0], [2.0], [3.0], [4.0]])
    w = np.array([1.0, 0.0]).reshape(2, 1, 1)
    assert conv1d_forward(x, w, np.zeros(1)).ravel().tolist() == [1.0, 2.0, 3.0]
    out = conv1d_forward(np.zeros((9, 2)), np.ones((3, 2, 4)), np.array([1.0, 2.0, 3.0, 4.0]))
    assert np.all(out == [1.0, 2.0, 3.0, 4.0])
    with pytest.raises(ShapeError):
        conv1d_forward(np.zeros((2, 1)), np.ones((3, 1, 1)), np.zeros(1))


def test_conv_matches_literal_sum(rng):
    r = rng.normal(size=(50, 3))
    w = rng.normal(size=(5, 3, 4))
    b = rng.normal(size=4)
    np.testing.assert_allclose(conv1d_forward(r, w, b), conv_reference(r, w, b), rtol=0, atol=1e-12)
    np.testing.assert_allclose(conv1d_forward(r, w, b, stride=3), conv_reference(r, w, b, 3), rtol=0, atol=1e-12)


def test_conv_batch_equals_per_sample(rng):
    x = rng.normal(size=(4, 30, 2))
    w, b = rng.normal(size=(6, 2, 3)), rng.normal(size=3)
    batched = conv1d_forward(x, w, b)
    for i in range(4):
        np.testing.assert_array_equal(batched[i], conv1d_forward(x[i], w, b))


def test_maxpool_examples(rng):
    out, _ = maxpool_forward(np.array([[1.0], [3.0], [2.0], [5.0]]), 2, 2)
    assert out.ravel().tolist() == [3.0, 5.0]
    const, _ = maxpool_forward(np.full((8, 2), 7.0), 3, 2)
    assert np.all(const == 7.0)
    x = rng.normal(size=(23, 3))
    out, _ = maxpool_forward(x, 4, 3)
    brute = np.array([[max(x[i * 3:i * 3 + 4, c]) for c in range(3)] for i in range(out.shape[0])])
    assert np.array_equal(out, brute)
    with pytest.raises(ValueError):
        maxpool_forward(x, 0, 1)


def test_relu_softmax_cross_entropy_examples():
    assert relu(np.array([-1.0, 0.0, 2.0])).tolist() == [0.0, 0.0, 2.0]
    assert np.allclose(softmax(np.zeros(4)), 0.25, rtol=0, atol=1e-15)
    assert cross_entropy(np.full(4, 0.25), np.eye(4)[1]) == pytest.approx(np.log(4), abs=1e-15)
    assert cross_entropy(np.eye(4)[2], np.eye(4)[2]) == pytest.approx(0.0, abs=1e-15)
    assert cross_entropy(np.array([0.5, 0.5]), np.array([0.5, 0.5])) == pytest.approx(np.log(2), abs=1e-15)
    with pytest.raises(ValueError):
        cross_entropy(np.array([-0.1, 1.1]), np.array([0.0, 1.0]))
    with pytest.raises(ShapeError):
        dense_forward(np.ones((2, 3)), np.ones((4, 2)), np.zeros(2))


@given(arrays(np.float64, st.integers(1, 8), elements=st.floats(-500, 500)), st.floats(-1e3, 1e3))
def test_softmax_is_a_shift_invariant_distribution(z, c):
    p = softmax(z)
    assert np.all(p >= 0) and abs(p.sum() - 1.0) <= 1e-12
    np.testing.assert_allclose(softmax(z + c), p, rtol=1e-9, atol=1e-300)
    t = np.zeros_like(p)
    t[0] = 1.0
    assert cross_entropy(p, t) >= 0


def test_softmax_cross_entropy_gradient_matches_differences(rng):
    z = rng.normal(size=(3, 4))
    t = rng.dirichlet(np.ones(4), size=3)
    loss, g = softmax_cross_entropy(z, t)
    num = np.zeros_like(z)
    for idx in np.ndindex(z.shape):
        zp, zm = z.copy(), z.copy()
        zp[idx] += 1e-6
        zm[idx] -= 1e-6
        num[idx] = (softmax_cross_entropy(zp, t)[0] - softmax_cross_entropy(zm, t)[0]) / 2e-6
    np.testing.assert_allclose(g, num, rtol=1e-6, atol=1e-9)


# -- layers and graphs ------------------------------------------------------

def _graph(shape, *layers, seed=0):
    g = NetworkGraph(shape)
    for i, layer in enumerate(layers):
        g.add(f"l{i}", layer)
    g.set_outputs([f"l{len(layers) - 1}"])
    g.init_params(seed)
    return g


def _targets(rng, batch, k=4):
    return {"out": np.eye(k)[rng.integers(k, size=batch)]}


def test_dense_backward_hand_computed():
    d = Dense(2, 2)
    d.params["w"] = np.array([[1.0, 2.0], [3.0, 4.0]])
    d.params["b"] = np.array([0.5, -0.5])
    x = np.array([[1.0, -1.0]])
    assert d.forward(x).tolist() == [[-1.5, -2.5]]
    dx = d.backward(np.array([[1.0, 2.0]]))
    # dL/dw = x^T dout, dL/db = dout, dL/dx = dout w^T
    assert d.grads["w"].tolist() == [[1.0, 2.0], [-1.0, -2.0]]
    assert d.grads["b"].tolist() == [1.0, 2.0]
    assert dx.tolist() == [[5.0, 11.0]]


@pytest.mark.parametrize("name, build, x_shape, training", [
    ("conv", lambda: [Conv1D(5, 2, 3, stride=2), Flatten(), Dense(66, 4)], (4, 48, 2), False),
    ("pool", lambda: [Conv1D(3, 1, 2), MaxPool1D(4, 3), Flatten(), Dense(50, 4)], (3, 80, 1), False),
    ("relu", lambda: [Dense(6, 8), ReLU(), Dense(8, 4)], (5, 6), False),
    ("batchnorm-train", lambda: [Dense(6, 8), BatchNorm(8), Dense(8, 4)], (6, 6), True),
    ("batchnorm-infer", lambda: [Dense(6, 8), BatchNorm(8), Dense(8, 4)], (6, 6), False),
    ("normalize-log", lambda: [Normalize(1.0, 2.0, log=True), Flatten(), Dense(10, 4)], (3, 10, 1), False),
    ("dropout-frozen", lambda: [Dense(6, 8), Dropout(0.5), Dense(8, 4)], (4, 6), False),
])
def test_every_layer_passes_gradient_check(rng, name, build, x_shape, training):
    layers = build()
    g = _graph(x_shape[1:], *layers, seed=1)
    g.outputs = [g._last()]
    x = np.abs(rng.normal(size=x_shape))
    rep = grad_check(g, x, cross_entropy_loss({g.outputs[0]: np.eye(4)[rng.integers(4, size=x_shape[0])]}),
                     num_params=60, training=training)
    assert rep.passed, rep.render()
    assert rep.max_rel_error < 1e-6


def _branching_graph(seed=0):
    """input -> trunk -> (a, b) ; out = dense(concat(a, pick(trunk)))"""
    g = NetworkGraph((12, 1))
    g.add("conv", Conv1D(3, 1, 2), ["input"])
    g.add("flat", Flatten(), ["conv"])
    g.add("a", Dense(20, 3), ["flat"])
    g.add("b", Dense(20, 2), ["flat"])
    g.add("pick", Pick(4), ["conv"])
    g.add("cat", Concat(), ["a", "pick"])
    g.add("out", Dense(5, 4), ["cat"])
    g.set_outputs(["out", "b"])
    g.init_params(seed)
    return g


def test_branch_points_and_concat_pass_gradient_check(rng):
    g = _branching_graph()
    x = rng.normal(size=(4, 12, 1))
    t = {"out": np.eye(4)[[0, 1, 2, 3]], "b": np.eye(2)[[0, 1, 1, 0]]}
    rep = grad_check(g, x, cross_entropy_loss(t), num_params=80)
    assert rep.passed, rep.render()


def test_branch_gradient_is_sum_of_consumers(rng):
    g = _branching_graph()
    x = rng.normal(size=(2, 12, 1))
    out = g.forward(x)
    go = {"out": rng.normal(size=out["out"].shape), "b": rng.normal(size=out["b"].shape)}
    both = g.backward(go)["conv.w"].copy()
    only_out = g.backward({"out": go["out"]})["conv.w"].copy()
    only_b = g.backward({"b": go["b"]})["conv.w"].copy()
    np.testing.assert_allclose(both, only_out + only_b, rtol=1e-12, atol=1e-14)


def test_concat_splits_gradient_by_position():
    c = Concat()
    c.forward(np.zeros((1, 2)), np.zeros((1, 3)))
    a, b = c.backward(np.arange(5.0)[None])
    assert a.tolist() == [[0.0, 1.0]] and b.tolist() == [[2.0, 3.0, 4.0]]


def test_maxpool_backward_routes_each_gradient_once(rng):
    pool = MaxPool1D(3, 3)
    x = rng.normal(size=(2, 12, 4))
    pool.forward(x)
    d = rng.normal(size=(2, 4, 4))
    dx = pool.backward(d)
    assert np.count_nonzero(dx) == d.size
    assert np.isclose(dx.sum(), d.sum())


def test_zero_upstream_gives_zero_gradients(rng):
    g = _branching_graph()
    out = g.forward(rng.normal(size=(3, 12, 1)))
    grads = g.backward({k: np.zeros_like(v) for k, v in out.items()})
    assert all(not np.any(v) for v in grads.values())


def test_backward_before_forward_is_an_error():
    g = _branching_graph()
    with pytest.raises(MissingCacheError):
        g.backward({"out": np.zeros((1, 4))})
    with pytest.raises(MissingCacheError):
        Dense(2, 2).backward(np.zeros((1, 2)))


def test_shape_errors_name_the_stage():
    g = NetworkGraph((10, 1))
    g.add("c1", Conv1D(4, 1, 2), ["input"])
    g.add("p1", MaxPool1D(4))
    with pytest.raises(ShapeError, match="c2"):
        g.add("c2", Conv1D(4, 2, 2))


def test_graph_description_round_trip(rng):
    g = _branching_graph(seed=3)
    h = NetworkGraph.from_description(g.describe())
    for k, v in g.parameters().items():
        h.set_param(k, v.copy())
    x = rng.normal(size=(2, 12, 1))
    a, b = g.forward(x), h.forward(x)
    assert all(np.array_equal(a[k], b[k]) for k in a)


# -- gradient checker -------------------------------------------------------

def test_gradcheck_negative_control(rng):
    g = _graph((6,), Dense(6, 5), ReLU(), Dense(5, 4))
    g.outputs = ["l2"]
    x = rng.normal(size=(4, 6))
    loss = cross_entropy_loss({"l2": np.eye(4)[[0, 1, 2, 3]]})
    g.forward(x)
    _, dout = loss(g.forward(x))
    wrong = {k: 2 * v for k, v in g.backward(dout).items()}
    assert grad_check(g, x, loss, num_params=30).passed
    rep = grad_check(g, x, loss, num_params=30, analytic=wrong)
    assert not rep.passed and rep.max_rel_error > 0.3


def test_gradcheck_on_linear_network_is_exact_to_machine_precision(rng):
    g = _graph((5,), Dense(5, 3), Dense(3, 4))
    g.outputs = ["l1"]
    x = rng.normal(size=(3, 5))
    rep = grad_check(g, x, cross_entropy_loss({"l1": np.eye(4)[[0, 2, 3]]}), num_params=40)
    assert rep.max_rel_error < 1e-7


def test_gradcheck_refuses_live_dropout(rng):
    g = _graph((4,), Dense(4, 4), Dropout(0.5), Dense(4, 4))
    g.outputs = ["l2"]
    with pytest.raises(NondeterministicGraphError, match="freeze"):
        grad_check(g, rng.normal(size=(2, 4)), cross_entropy_loss({"l2": np.eye(4)[[0, 1]]}), training=True)


# -- optimiser --------------------------------------------------------------

def test_momentum_examples():
    p = {"w": np.array([1.0, -2.0])}
    sgd_momentum_step(p, {"w": np.zeros(2)}, OptimizerState(0.1, 0.9))
    assert p["w"].tolist() == [1.0, -2.0]

    g = np.array([0.3, -0.7])
    plain = np.array([1.0, -2.0])
    p = {"w": plain.copy()}
    sgd_momentum_step(p, {"w": g}, OptimizerState(0.05, 0.0))
    assert p["w"].tobytes() == (plain - 0.05 * g).tobytes()

    p = {"w": np.zeros(2)}
    state = OptimizerState(0.1, 0.9)
    for _ in range(2):
        sgd_momentum_step(p, {"w": g}, state)
    np.testing.assert_allclose(p["w"], -0.1 * g * (2 + 0.9), rtol=1e-15)


def test_momentum_shape_mismatch():
    with pytest.raises(ShapeError):
        sgd_momentum_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, OptimizerState())
