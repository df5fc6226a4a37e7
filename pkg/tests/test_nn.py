import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairclust import nn
from fairclust.errors import NumericalAbort, ShapeError


def linear_net(w, b):
    w = np.asarray(w, dtype=float)
    spec = nn.MlpSpec((w.shape[1], w.shape[0]), ("linear",))
    return nn.MlpParams(spec, [w], [np.asarray(b, dtype=float)])


def test_init_shapes_and_zero_bias():
    p = nn.init_params(nn.MlpSpec((2, 3), ("relu",)), 7)
    assert p.weights[0].shape == (3, 2)
    assert np.array_equal(p.biases[0], np.zeros(3))


def test_init_deterministic():
    spec = nn.MlpSpec.build(5, (4,), 2)
    assert nn.init_params(spec, 3).equals(nn.init_params(spec, 3))
    assert not nn.init_params(spec, 3).equals(nn.init_params(spec, 4))


def test_he_bound_first_relu_layer():
    p = nn.init_params(nn.MlpSpec((4, 16, 1), ("relu", "linear")), 1)
    assert np.abs(p.weights[0]).max() <= np.sqrt(6 / 4)


def test_spec_validation():
    with pytest.raises(ValueError):
        nn.MlpSpec((3,), ())
    with pytest.raises(ValueError):
        nn.MlpSpec((3, 2), ("tanh",))
    with pytest.raises(ValueError):
        nn.MlpSpec((3, 2, 2), ("softmax", "linear"))
    with pytest.raises(ShapeError):
        nn.MlpParams(nn.MlpSpec((2, 3), ("linear",)), [np.zeros((2, 3))], [np.zeros(3)])


def test_forward_identity_and_arithmetic():
    x = np.random.default_rng(0).normal(size=(5, 3))
    assert np.array_equal(nn.predict(linear_net(np.eye(3), np.zeros(3)), x), x)
    assert nn.predict(linear_net([[2.0]], [1.0]), [[3.0]])[0, 0] == 7.0


def test_forward_rejects_wrong_width():
    with pytest.raises(ShapeError):
        nn.predict(linear_net(np.eye(3), np.zeros(3)), np.zeros((2, 4)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(-50, 50))
def test_softmax_rows_sum_to_one(seed, scale):
    p = nn.init_params(nn.MlpSpec.build(4, (6,), 5, output="softmax"), seed)
    x = scale * np.random.default_rng(seed).normal(size=(7, 4))
    out = nn.predict(p, x)
    assert np.allclose(out.sum(axis=1), 1.0)
    assert np.all(out >= 0)


def test_zero_upstream_gives_zero_gradients():
    p = nn.init_params(nn.MlpSpec.build(3, (5, 4), 2), 0)
    acts = nn.forward(p, np.ones((4, 3)))
    grads, gx = nn.backward(p, acts, np.zeros((4, 2)))
    assert all(not a.any() for a in grads.arrays())
    assert not gx.any()


@pytest.mark.parametrize("output", ["linear", "softmax"])
def test_backward_matches_finite_differences(output):
    rng = np.random.default_rng(11)
    p = nn.init_params(nn.MlpSpec.build(4, (6, 5), 3, output=output), rng)
    x = rng.normal(size=(6, 4))
    target = rng.normal(size=(6, 3))

    def loss_fn(params):
        acts = nn.forward(params, x)
        diff = acts[-1] - target
        grads, _ = nn.backward(params, acts, 2 * diff)
        return float(np.sum(diff**2)), grads

    assert nn.grad_check(p, loss_fn).passed

    def loss_x(xv):
        return float(np.sum((nn.predict(p, xv) - target) ** 2))

    acts = nn.forward(p, x)
    _, gx = nn.backward(p, acts, 2 * (acts[-1] - target))
    assert nn.relative_error(gx, nn.numeric_gradient(loss_x, x)) < 1e-4


def test_grad_check_quadratic_passes_tight():
    rng = np.random.default_rng(2)
    p = linear_net(rng.normal(size=(2, 3)), np.zeros(2))
    x, y = rng.normal(size=(1, 3)), rng.normal(size=(1, 2))

    def loss_fn(params):
        r = nn.predict(params, x) - y
        g = params.zeros_like()
        g.weights[0][...] = 2 * r.T @ x
        g.biases[0][...] = 2 * r.sum(axis=0)
        return float(np.sum(r**2)), g

    assert nn.grad_check(p, loss_fn, tolerance=1e-6).passed


def test_grad_check_catches_corrupted_backward():
    rng = np.random.default_rng(3)
    p = nn.init_params(nn.MlpSpec.build(3, (4,), 2), rng)
    x = rng.normal(size=(5, 3))

    def loss_fn(params):
        acts = nn.forward(params, x)
        grads, _ = nn.backward(params, acts, 2 * acts[-1])
        grads.weights[0] *= 1.5
        return float(np.sum(acts[-1] ** 2)), grads

    assert not nn.grad_check(p, loss_fn).passed


def test_adam_zero_grad_and_zero_lr():
    p = nn.init_params(nn.MlpSpec.build(3, (4,), 2), 0)
    state = nn.AdamState.for_params(p)
    same, s1 = nn.adam_step(p, p.zeros_like(), state, 1e-2)
    assert same.equals(p) and s1.step == 1
    ones = p.zeros_like()
    for a in ones.arrays():
        a += 1.0
    frozen, s2 = nn.adam_step(p, ones, state, 0.0)
    assert frozen.equals(p)
    assert all(np.allclose(m, 0.1) for m in s2.m)


def test_adam_constant_gradient_step_tends_to_lr():
    p = linear_net([[0.0]], [0.0])
    g = linear_net([[0.3]], [-2.0])
    state = nn.AdamState.for_params(p)
    lr = 1e-3
    for _ in range(500):
        new, state = nn.adam_step(p, g, state, lr)
        step = [a - b for a, b in zip(p.arrays(), new.arrays())]
        p = new
    assert np.isclose(step[0][0, 0], lr, rtol=1e-4)
    assert np.isclose(step[1][0], -lr, rtol=1e-4)


def test_adam_rejects_non_finite():
    p = linear_net([[0.0]], [0.0])
    g = linear_net([[np.nan]], [0.0])
    with pytest.raises(NumericalAbort):
        nn.adam_step(p, g, nn.AdamState.for_params(p), 1e-3)
