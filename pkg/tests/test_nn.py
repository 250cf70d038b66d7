import numpy as np
import pytest

from cgnf.errors import ShapeMismatch
from cgnf.nn import AdamW, Mlp, finite_difference_grad


def _net(widths, acts=None, seed=0, stack=()):
    return Mlp(widths, acts, np.random.default_rng(seed), stack)


def test_identity_layer():
    net = _net([3, 3], ["identity"])
    net.params = [np.eye(3), np.zeros((1, 3))]
    x = np.random.default_rng(1).normal(size=(5, 3))
    np.testing.assert_array_equal(net(x), x)


def test_zero_weights_output_bias():
    net = _net([4, 6, 2])
    net.params = [np.zeros((4, 6)), np.zeros((1, 6)), np.zeros((6, 2)), np.array([[0.3, -1.2]])]
    out = net(np.random.default_rng(2).normal(size=(7, 4)))
    np.testing.assert_array_equal(out, np.tile([0.3, -1.2], (7, 1)))


def test_hand_computed_two_layer():
    net = _net([2, 2, 1], ["elu", "identity"])
    W1 = np.array([[1.0, -2.0], [0.5, 1.0]])
    b1 = np.array([[0.1, 0.0]])
    W2 = np.array([[2.0], [3.0]])
    b2 = np.array([[-0.5]])
    net.params = [W1, b1, W2, b2]
    # x = (1, -1): pre = (1*1 + -1*0.5 + 0.1, 1*-2 + -1*1 + 0) = (0.6, -3)
    # elu -> (0.6, exp(-3) - 1); out = 2*0.6 + 3*(exp(-3) - 1) - 0.5
    expected = 1.2 + 3.0 * (np.exp(-3.0) - 1.0) - 0.5
    assert abs(net(np.array([1.0, -1.0]))[0] - expected) < 1e-12


def test_parameter_count():
    assert _net([5, 20, 15, 10]).n_params() == 6 * 20 + 21 * 15 + 16 * 10
    assert _net([11, 15, 10, 5, 1], stack=(5,)).n_params() == 5 * (12 * 15 + 16 * 10 + 11 * 5 + 6)


@pytest.mark.parametrize("acts", [None, ["relu", "identity"], ["elu", "elu", "identity"]])
def test_gradients_match_finite_differences(acts):
    widths = [3, 5, 2] if acts and len(acts) == 2 else [3, 5, 4, 2]
    net = _net(widths, acts, seed=3)
    for b in net.biases:
        b += 0.1
    rng = np.random.default_rng(4)
    x = rng.normal(size=(6, 3))
    c = rng.normal(size=(6, 2))

    def loss():
        return float(np.sum(net(x) * c))

    out, tape = net.forward_cached(x)
    _, grads = net.backward(tape, c)
    fd = finite_difference_grad(loss, net.params, step=1e-5)
    for g, f in zip(grads, fd):
        np.testing.assert_allclose(g, f, atol=1e-3 * max(1.0, np.abs(f).max()))


def test_stacked_matches_unstacked():
    net = _net([3, 4, 2], stack=(3,), seed=5)
    x = np.random.default_rng(6).normal(size=(3, 8, 3))
    out = net(x)
    for i in range(3):
        np.testing.assert_allclose(out[i], net.unstack(i)(x[i]), rtol=1e-14)


def test_zero_upstream_gives_zero_grads():
    net = _net([3, 4, 2])
    x = np.random.default_rng(7).normal(size=(5, 3))
    out, tape = net.forward_cached(x)
    gin, grads = net.backward(tape, np.zeros_like(out))
    assert not np.any(gin) and all(not np.any(g) for g in grads)


def test_linear_input_gradient():
    net = _net([3, 2], ["identity"])
    x = np.random.default_rng(8).normal(size=(4, 3))
    g = np.random.default_rng(9).normal(size=(4, 2))
    _, tape = net.forward_cached(x)
    gin, _ = net.backward(tape, g)
    np.testing.assert_allclose(gin, g @ net.weights[0].T, rtol=1e-14)


def test_shape_checks():
    net = _net([3, 2])
    with pytest.raises(ShapeMismatch):
        net(np.zeros((2, 4)))
    with pytest.raises(ShapeMismatch):
        net.params = [np.zeros((2, 2)), np.zeros((1, 2))]


def test_adamw_zero_gradient_no_decay():
    p = np.array([1.0, -2.0])
    opt = AdamW([p], lr=1e-3)
    opt.step([np.zeros(2)])
    np.testing.assert_array_equal(p, [1.0, -2.0])


def test_adamw_first_step_moves_by_lr():
    p = np.array([1.0])
    AdamW([p], lr=1e-3).step([np.array([1.0])])
    assert abs(p[0] - (1 - 1e-3)) < 1e-8


def test_adamw_decoupled_decay():
    p = np.array([1.0])
    AdamW([p], lr=1e-3, weight_decay=1e-2).step([np.zeros(1)])
    assert abs(p[0] - (1 - 1e-5)) < 1e-12


def test_serialization_roundtrip():
    net = _net([3, 4, 2], stack=(2,))
    again = Mlp.from_dict(net.to_dict())
    for a, b in zip(net.params, again.params):
        np.testing.assert_array_equal(a, b)
