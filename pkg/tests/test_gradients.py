import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from mrinet.engine import ops
from mrinet.engine.gradcheck import finite_difference_check
from mrinet.engine.tape import Tape, Var, backward
from mrinet.errors import GradientLookupError

from gradcases import CASES


@pytest.mark.parametrize("name", sorted(CASES))
def test_finite_difference(name):
    f, point = CASES[name]
    report = finite_difference_check(f, point, tolerance=1e-5, probes=100)
    assert report.probes >= 100
    assert report.passed, f"{name}: max rel error {report.max_rel_error:.3e} at {report.worst_index}"


def test_dense_identity_hand_check():
    x = np.array([[1.0, -2.0, 3.0]])
    tape = Tape()
    w = tape.watch(np.eye(3))
    b = tape.watch(np.zeros(3))
    grads = backward(tape, ops.reduce_sum(ops.dense_affine(x, w, b)))
    assert_array_equal(grads[w], np.outer(x[0], np.ones(3)))
    assert_array_equal(grads[b], np.ones(3))


def test_weight_used_twice_sums_gradients():
    tape = Tape()
    w = tape.watch(np.array([2.0, 3.0]))
    y = ops.reduce_sum(ops.add(ops.multiply(w, np.array([1.0, 1.0])), ops.multiply(w, np.array([4.0, 5.0]))))
    assert_array_equal(backward(tape, y)[w], [5.0, 6.0])


def test_replay_in_reverse_order():
    tape = Tape()
    x = tape.watch(np.ones((2, 3)))
    h = ops.relu(x)
    h = ops.softmax(h)
    loss = ops.take(h, (0, 0))
    grads = backward(tape, loss)
    assert grads.order == sorted(grads.order, reverse=True)
    assert len(grads.order) == len(tape.nodes)


def test_lookup_errors():
    tape = Tape()
    x = tape.watch(np.ones(3))
    h = ops.relu(x)
    loss = ops.reduce_sum(h)
    grads = backward(tape, loss)
    with pytest.raises(GradientLookupError):
        grads[h]
    with pytest.raises(GradientLookupError):
        grads[np.ones(3)]
    other = Tape().watch(np.ones(3))
    with pytest.raises(GradientLookupError):
        grads[other]


def test_unreached_leaf_gets_zeros():
    tape = Tape()
    x = tape.watch(np.ones(3))
    unused = tape.watch(np.ones(2))
    grads = backward(tape, ops.reduce_sum(x))
    assert_array_equal(grads[unused], np.zeros(2))


def test_untracked_inputs_record_nothing():
    out = ops.relu(np.array([-1.0, 2.0]))
    assert not isinstance(out, Var)
    assert_array_equal(out, [0.0, 2.0])


def test_maxpool_routes_to_argmax():
    x = np.array([[1.0, 5.0], [3.0, 2.0]]).reshape(1, 2, 2, 1)
    tape = Tape()
    xv = tape.watch(x)
    grads = backward(tape, ops.reduce_sum(ops.max_pool2d(xv, (2, 2), 1, "valid")))
    assert_array_equal(grads[xv][0, :, :, 0], [[0.0, 1.0], [0.0, 0.0]])


def test_softmax_cce_gradient_closed_form(rng):
    logits = rng.standard_normal((4, 5))
    labels = np.array([1, 0, 4, 2])
    tape = Tape()
    z = tape.watch(logits)
    loss, probs = ops.softmax_crossentropy(z, labels)
    onehot = np.eye(5)[labels]
    assert_allclose(backward(tape, loss)[z], (probs - onehot) / 4, atol=1e-15)


def _corrupted_square(x):
    from mrinet.engine.ops import _wrap
    from mrinet.engine.tape import value_of

    xv = value_of(x)

    def back(g, needs):
        return (g * 3.0 * xv,)  # correct rule is 2x

    return ops.reduce_sum(_wrap("bad_square", (x,), xv * xv, back))


def test_corrupted_backward_is_caught():
    report = finite_difference_check(_corrupted_square, np.linspace(0.5, 2.0, 10))
    assert not report.passed
    assert report.max_rel_error > 1e-5


def test_gradcheck_requires_tracked_ops():
    with pytest.raises(TypeError):
        finite_difference_check(lambda p: float(np.sum(np.asarray(p) ** 2)), np.ones(3))


def test_float32_network_gets_float32_gradients():
    from mrinet.architectures import build_model
    from mrinet.graph import forward, watch_params

    graph = build_model("mobilenetv2", (32, 32, 3), depth="reduced")
    tape = Tape()
    pv = watch_params(tape, graph, graph.param_names())
    x = np.random.default_rng(0).standard_normal((2, 32, 32, 3)).astype(np.float32)
    res = forward(graph, x, train=True, params=pv, rng=np.random.default_rng(1))
    loss, _ = ops.softmax_crossentropy(res.logits, np.array([0, 3]))
    assert loss.value.dtype == np.float32
    grads = backward(tape, loss)
    assert {grads[v].dtype for v in pv.values()} == {np.dtype(np.float32)}


def test_sum_of_squares_closed_form(rng):
    x = rng.standard_normal(30)
    tape = Tape()
    xv = tape.watch(x)
    grads = backward(tape, ops.reduce_sum(ops.multiply(xv, xv)))
    assert np.max(np.abs(grads[xv] - 2 * x) / np.maximum(np.abs(2 * x), 1e-12)) < 1e-8
    report = finite_difference_check(lambda p: ops.reduce_sum(ops.multiply(p, p)), x)
    assert report.passed  # finite differences carry ~1e-7 rounding noise, so the suite tolerance applies
