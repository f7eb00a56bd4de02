import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqdec import tensor_nn as nn


def _sig(v):
    return 1.0 / (1.0 + np.exp(-v))


def test_dense_trivia(rng):
    x = rng.normal(size=(4, 3))
    y, _ = nn.dense_forward(x, np.zeros((3, 5)), np.zeros(5), "elu")
    assert not y.any()
    y, _ = nn.dense_forward(x, np.eye(3), np.zeros(3), "linear")
    np.testing.assert_array_equal(y, x)
    y, _ = nn.dense_forward(np.zeros((1, 3)), rng.normal(size=(3, 2)), np.zeros(2), "sigmoid")
    np.testing.assert_array_equal(y, 0.5)
    with pytest.raises(ValueError):
        nn.dense_forward(x, np.zeros((4, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        nn.dense_forward(x, np.zeros((3, 2)), np.zeros(2), "relu6")


def test_dense_backward_trivia(rng):
    x, W = rng.normal(size=(4, 3)), rng.normal(size=(3, 2))
    y, cache = nn.dense_forward(x, W, np.zeros(2), "linear")
    g = rng.normal(size=y.shape)
    dx, grads = nn.dense_backward(g, cache)
    np.testing.assert_array_equal(dx, g @ W.T)
    dx, grads = nn.dense_backward(np.zeros_like(y), cache)
    assert not grads["W"].any() and not grads["b"].any()
    with pytest.raises(ValueError):
        nn.dense_backward(np.zeros((4, 3)), cache)


def test_sigmoid_is_stable():
    v = nn.sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    np.testing.assert_array_equal(v, [0.0, 0.5, 1.0])
    x = np.linspace(-20, 20, 101)
    np.testing.assert_allclose(nn.sigmoid(x), _sig(x), rtol=1e-12, atol=1e-15)


@settings(max_examples=12, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5), st.integers(1, 4),
       st.sampled_from(nn.ACTIVATIONS), st.integers(0, 2**31 - 1))
def test_dense_gradients_match_finite_differences(batch, d_in, d_out, act, seed):
    r = np.random.default_rng(seed)
    x = r.normal(size=(batch, d_in))
    target = r.normal(size=(batch, d_out))
    params = {"x": x, "W": r.normal(size=(d_in, d_out)), "b": r.normal(size=d_out)}

    def fn(p):
        y, cache = nn.dense_forward(p["x"], p["W"], p["b"], act)
        loss = 0.5 * np.sum((y - target) ** 2)
        dx, g = nn.dense_backward(y - target, cache)
        return loss, {"x": dx, **g}

    assert nn.grad_check(fn, params) < 1e-5


def test_linear_layer_grad_check_is_exact(rng):
    params = {"W": rng.normal(size=(3, 2)), "b": rng.normal(size=2)}
    x = rng.normal(size=(5, 3))

    def fn(p):
        y, cache = nn.dense_forward(x, p["W"], p["b"])
        return float(np.sum(y)), nn.dense_backward(np.ones_like(y), cache)[1]

    assert nn.grad_check(fn, params) < 1e-8
    with pytest.raises(ValueError):
        nn.grad_check(fn, params, epsilon=0)


def test_gru_zero_params_halve_the_state():
    H, D, T = 3, 2, 4
    p = {"W": np.zeros((D, 3 * H)), "U": np.zeros((H, 3 * H)), "b": np.zeros(3 * H)}
    h0 = np.array([[0.8, -0.4, 0.2]])
    hs, _ = nn.gru_forward(np.ones((1, T, D)), h0, p)
    np.testing.assert_allclose(hs[0], h0 * 0.5 ** np.arange(1, T + 1)[:, None])
    hs, _ = nn.gru_forward(np.zeros((1, T, D)), np.zeros((1, H)), nn.gru_init(D, H, np.random.default_rng(0)))
    assert not hs.any()


def test_gru_single_step_closed_form():
    r = np.random.default_rng(3)
    D, H = 2, 2
    p = {k: v.astype(float) for k, v in nn.gru_init(D, H, r).items()}
    p["b"] = r.normal(size=3 * H)
    x, h = r.normal(size=D), r.normal(size=H) * 0.5
    hs, _ = nn.gru_forward(x[None, None], h[None], p)
    W, U, b = p["W"], p["U"], p["b"]
    expect = np.empty(H)
    for j in range(H):  # scalar evaluation, one unit at a time
        z = _sig(sum(x[i] * W[i, j] for i in range(D)) + sum(h[i] * U[i, j] for i in range(H)) + b[j])
        rr = [_sig(sum(x[i] * W[i, H + k] for i in range(D))
                   + sum(h[i] * U[i, H + k] for i in range(H)) + b[H + k]) for k in range(H)]
        c = np.tanh(sum(x[i] * W[i, 2 * H + j] for i in range(D))
                    + sum(rr[i] * h[i] * U[i, 2 * H + j] for i in range(H)) + b[2 * H + j])
        expect[j] = (1 - z) * h[j] + z * c
    np.testing.assert_allclose(hs[0, 0], expect, rtol=1e-12)


def test_gru_shape_and_finiteness_checks(rng):
    p = nn.gru_init(3, 4, rng)
    with pytest.raises(ValueError):
        nn.gru_forward(np.zeros((1, 2, 2)), np.zeros((1, 4)), p)
    with pytest.raises(ValueError):
        nn.gru_forward(np.zeros((1, 2, 3)), np.zeros((1, 5)), p)
    with pytest.raises(nn.NonFiniteError):
        nn.gru_forward(np.full((1, 2, 3), np.nan), np.zeros((1, 4)), p)


def test_gru_states_are_bounded(rng):
    p = {k: v * 5 for k, v in nn.gru_init(3, 6, rng, dtype=np.float64).items()}
    hs, _ = nn.gru_forward(rng.normal(size=(8, 40, 3)) * 10, rng.uniform(-1, 1, (8, 6)), p)
    assert np.all(np.abs(hs) <= 1)


def _gru_objective(x, target, with_h0=True):
    def fn(p):
        q = {k: p[k] for k in "WUb"}
        hs, cache = nn.gru_forward(p["x"], p["h0"], q)
        diff = hs - target
        dx, dh0, g = nn.gru_backward(diff, cache)
        return 0.5 * float(np.sum(diff * diff)), {"x": dx, "h0": dh0, **g}
    return fn


@pytest.mark.parametrize("T", [7, 1])
def test_gru_gradients_match_finite_differences(T):
    r = np.random.default_rng(11)
    B, D, H = 2, 3, 5
    params = {k: v.astype(float) for k, v in nn.gru_init(D, H, r).items()}
    params["b"] = r.normal(size=3 * H) * 0.3
    params["x"] = r.normal(size=(B, T, D))
    params["h0"] = r.uniform(-0.5, 0.5, (B, H))
    target = r.normal(size=(B, T, H))
    assert nn.grad_check(_gru_objective(None, target), params) < 1e-4


def test_stacked_gru_gradients(rng):
    B, T, D, H = 2, 4, 2, 3
    params = {k: v.astype(float) for k, v in nn.gru_init(D, H, rng, stack=(2,)).items()}
    params["x"] = rng.normal(size=(2, B, T, D))
    params["h0"] = rng.uniform(-0.5, 0.5, (2, B, H))
    target = rng.normal(size=(2, B, T, H))
    assert nn.grad_check(_gru_objective(None, target), params) < 1e-4


def test_stacked_gru_equals_separate_runs(rng):
    p = nn.gru_init(2, 3, rng, stack=(2,), dtype=np.float64)
    x = rng.normal(size=(2, 4, 5, 2))
    h0 = np.zeros((2, 4, 3))
    hs, _ = nn.gru_forward(x, h0, p)
    for d in range(2):
        one, _ = nn.gru_forward(x[d], h0[d], {k: v[d] for k, v in p.items()})
        np.testing.assert_allclose(hs[d], one, rtol=1e-12)


def test_gru_gradient_reaches_h0(rng):
    p = nn.gru_init(2, 3, rng, dtype=np.float64)
    hs, cache = nn.gru_forward(rng.normal(size=(1, 6, 2)), np.full((1, 3), 0.3), p)
    grad = np.zeros_like(hs)
    grad[0, -1, 0] = 1.0  # only the last state contributes
    _, dh0, _ = nn.gru_backward(grad, cache)
    assert np.any(dh0 != 0)
    with pytest.raises(ValueError):
        nn.gru_backward(grad[:, :-1], cache)


def test_bce_values_and_gradient(rng):
    u = np.array([[1.0, 0.0, 1.0]])
    loss, _ = nn.bce_loss(u.copy(), u)
    assert loss == pytest.approx(0, abs=1e-6)
    loss, _ = nn.bce_loss(np.full((2, 5), 0.5), rng.integers(0, 2, (2, 5)))
    assert loss == pytest.approx(5 * np.log(2))
    labels = rng.integers(0, 2, (3, 4)).astype(float)

    def fn(p):
        return nn.bce_loss(p["p"], labels)[0], {"p": nn.bce_loss(p["p"], labels)[1]}

    assert nn.grad_check(fn, {"p": rng.uniform(0.05, 0.95, (3, 4))}, epsilon=1e-7) < 1e-6
    with pytest.raises(ValueError):
        nn.bce_loss(np.zeros((2, 3)), np.zeros((2, 4)))


def test_mse_values_and_gradient(rng):
    u = rng.integers(0, 2, (2, 3)).astype(float)
    assert nn.mse_loss(u, u)[0] == 0
    p = np.zeros((1, 3))
    loss, grad = nn.mse_loss(p + [1, 0, 0], p)
    assert loss == 1 and grad[0, 0] == 2

    def fn(q):
        loss, g = nn.mse_loss(q["p"], u)
        return loss, {"p": g}

    assert nn.grad_check(fn, {"p": rng.uniform(size=(2, 3))}) < 1e-6
    with pytest.raises(ValueError):
        nn.mse_loss(np.zeros(3), np.zeros(4))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=8), st.integers(0, 255))
def test_losses_are_non_negative(p, bits):
    p = np.array(p)
    u = np.array([(bits >> i) & 1 for i in range(len(p))], dtype=float)
    assert nn.bce_loss(p, u)[0] >= 0
    assert nn.mse_loss(p, u)[0] >= 0


@pytest.mark.parametrize("kind", ["rmsprop", "adam"])
def test_zero_gradient_leaves_params(kind):
    opt = nn.make_optimizer(kind, 1e-2)
    p = {"w": np.array([1.0, -2.0])}
    opt.step(p, {"w": np.zeros(2)})
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])


def test_adam_first_step_is_lr():
    opt = nn.Adam(lr=1e-3)
    p = {"w": np.array([0.0])}
    opt.step(p, {"w": np.array([1.0])})
    assert p["w"][0] == pytest.approx(-1e-3, rel=1e-6)


def test_rmsprop_constant_gradient_limit():
    opt = nn.RMSProp(lr=1e-3)
    g = 0.25
    p = {"w": np.array([0.0])}
    for _ in range(300):
        before = p["w"].copy()
        opt.step(p, {"w": np.array([g])})
    # accumulator converges to g^2, so the step tends to lr * g / (|g| + eps)
    assert before[0] - p["w"][0] == pytest.approx(1e-3 * g / (g + 1e-8), rel=1e-9)


def test_optimizer_rejects_bad_steps():
    opt = nn.RMSProp(lr=1e-3)
    p = {"a": np.zeros(2), "b": np.zeros(2)}
    with pytest.raises(nn.NonFiniteError):
        opt.step(p, {"a": np.ones(2), "b": np.array([np.inf, 0])})
    assert not p["a"].any()  # the step was aborted as a whole
    with pytest.raises(ValueError):
        opt.step(p, {"a": np.ones(3)})
    with pytest.raises(ValueError):
        nn.make_optimizer("sgd", 1e-3)
    with pytest.raises(ValueError):
        nn.Adam(lr=0)
    opt.step(p, {"a": np.ones(2)})
    assert set(opt.state_arrays()) == {"v/a"}


def test_glorot(rng):
    w = nn.glorot_init((300, 200), rng, np.float64)
    assert np.max(np.abs(w)) <= np.sqrt(6 / 500)
    np.testing.assert_array_equal(w, nn.glorot_init((300, 200), np.random.default_rng(1234), np.float64))
    big = nn.glorot_init((400, 250), np.random.default_rng(0), np.float64)  # 10^5 draws
    assert abs(np.var(big) / (2 / 650) - 1) < 0.05
    assert nn.glorot_init((3, 4), rng).dtype == np.float32
