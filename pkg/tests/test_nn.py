import numpy as np
import pytest

from knockout.nn import (
    NetworkSpec,
    Parameters,
    TrainConfig,
    TrainingDivergedError,
    forward,
    grad,
    init_params,
    loss_and_grad,
    predict,
    softmax,
    train,
)


def manual_forward(spec, params, batch):
    """Independent re-implementation with explicit loops."""
    out = np.zeros((batch.shape[0], spec.widths[-1]))
    for n, row in enumerate(batch):
        h = list(row)
        for layer in range(spec.n_layers):
            w, b = params.weights[layer], params.biases[layer]
            z = [sum(h[i] * w[i, j] for i in range(w.shape[0])) + b[j] for j in range(w.shape[1])]
            if layer < spec.n_layers - 1:
                h = [max(v, 0.0) for v in z]
            else:
                h = z
        out[n] = h
    return out


def test_forward_zero_params_gives_zero():
    spec = NetworkSpec((3, 4, 2))
    params = Parameters(
        [np.zeros((3, 4)), np.zeros((4, 2))], [np.zeros(4), np.zeros(2)]
    )
    out = forward(spec, params, np.random.default_rng(0).normal(size=(5, 3)))
    assert (out == 0).all()


def test_forward_identity_network_on_positive_inputs():
    # Identity weights pass positive values through the ReLU unchanged.
    spec = NetworkSpec((3, 3, 3))
    params = Parameters([np.eye(3), np.eye(3)], [np.zeros(3), np.zeros(3)])
    x = np.abs(np.random.default_rng(1).normal(size=(4, 3)))
    np.testing.assert_allclose(forward(spec, params, x), x, atol=1e-15)


def test_forward_matches_independent_reimplementation():
    rng = np.random.default_rng(2)
    spec = NetworkSpec((4, 7, 5, 2))
    params = init_params(spec, rng)
    batch = rng.normal(size=(6, 4))
    np.testing.assert_allclose(
        forward(spec, params, batch), manual_forward(spec, params, batch), atol=1e-12
    )


def test_forward_rejects_bad_inputs():
    spec = NetworkSpec((3, 2))
    params = init_params(spec, np.random.default_rng(0))
    with pytest.raises(ValueError, match="batch width"):
        forward(spec, params, np.zeros((2, 4)))
    with pytest.raises(ValueError, match="non-finite"):
        forward(spec, params, np.array([[1.0, np.nan, 0.0]]))


def test_grad_single_linear_unit():
    # Loss (w*x + b - y)^2 at x=1, y=0, w=1, b=0 has dL/dw = 2, dL/db = 2.
    spec = NetworkSpec((1, 1))
    params = Parameters([np.array([[1.0]])], [np.array([0.0])])
    value, g = loss_and_grad(spec, params, np.array([[1.0]]), np.array([0.0]), "mse")
    assert value == pytest.approx(1.0)
    np.testing.assert_allclose(g, [2.0, 2.0])


def test_grad_zero_at_minimum():
    rng = np.random.default_rng(3)
    spec = NetworkSpec((2, 5, 1))
    params = init_params(spec, rng)
    batch = rng.normal(size=(4, 2))
    targets = forward(spec, params, batch).ravel()
    g = grad(spec, params, batch, targets, "mse")
    np.testing.assert_allclose(g, 0.0, atol=1e-14)


def _fd_check(spec, loss, rng, n_batch=5):
    params = init_params(spec, rng)
    batch = rng.normal(size=(n_batch, spec.widths[0]))
    if loss == "mse":
        targets = rng.normal(size=(n_batch, spec.widths[-1]))
    else:
        targets = rng.integers(0, spec.widths[-1], size=n_batch)
    _, analytic = loss_and_grad(spec, params, batch, targets, loss)
    theta = params.flat()
    h = 1e-5
    fd = np.empty_like(theta)
    for i in range(theta.size):
        up = theta.copy()
        up[i] += h
        down = theta.copy()
        down[i] -= h
        lu, _ = loss_and_grad(spec, Parameters.from_flat(spec, up), batch, targets, loss)
        ld, _ = loss_and_grad(spec, Parameters.from_flat(spec, down), batch, targets, loss)
        fd[i] = (lu - ld) / (2 * h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-8)
    return np.max(np.abs(analytic - fd) / denom)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    specs = [
        (NetworkSpec((3, 8, 1)), "mse"),
        (NetworkSpec((2, 4, 4, 2)), "mse"),
        (NetworkSpec((3, 6, 3), head="logits"), "cross_entropy"),
        (NetworkSpec((5, 5, 2), head="logits"), "cross_entropy"),
        (NetworkSpec((4, 1)), "mse"),
    ]
    for spec, loss in specs:
        assert _fd_check(spec, loss, rng) < 1e-4


@pytest.mark.filterwarnings("ignore:overflow")
def test_grad_error_names_layer():
    spec = NetworkSpec((2, 3, 1))
    params = Parameters(
        [np.full((2, 3), 1e200), np.full((3, 1), 1e200)], [np.zeros(3), np.zeros(1)]
    )
    with pytest.raises(ValueError, match="layer"):
        loss_and_grad(spec, params, np.full((1, 2), 1e200), np.zeros(1), "mse")


def test_train_zero_steps_returns_init():
    spec = NetworkSpec((2, 4, 1))
    cfg = TrainConfig(learning_rate=1e-3, steps=0, seed=9)
    result = train(spec, cfg, np.zeros((5, 2)), np.zeros(5))
    expected = init_params(spec, np.random.default_rng(9))
    for got, want in zip(result.params.weights, expected.weights):
        np.testing.assert_array_equal(got, want)
    assert result.trace == []


def test_train_solves_noise_free_linear_regression():
    rng = np.random.default_rng(5)
    w_true = np.array([0.7, -1.2, 2.0])
    x = rng.normal(size=(512, 3))
    y = x @ w_true
    spec = NetworkSpec((3, 32, 1))
    cfg = TrainConfig(learning_rate=3e-3, steps=5000, batch_size=64, seed=1)
    result = train(spec, cfg, x, y)
    pred = forward(spec, result.params, x).ravel()
    assert np.mean((pred - y) ** 2) < 1e-3


def test_train_determinism_bitwise():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(100, 3))
    y = rng.normal(size=100)
    spec = NetworkSpec((3, 8, 1))
    cfg = TrainConfig(learning_rate=1e-3, steps=300, batch_size=16, seed=123)
    a = train(spec, cfg, x, y)
    b = train(spec, cfg, x, y)
    assert a.trace == b.trace
    for wa, wb in zip(a.params.weights, b.params.weights):
        assert np.array_equal(wa, wb)
    for ba, bb in zip(a.params.biases, b.params.biases):
        assert np.array_equal(ba, bb)


def test_train_records_trace_every_100_steps():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(50, 2))
    y = rng.normal(size=50)
    cfg = TrainConfig(learning_rate=1e-3, steps=250, batch_size=8, seed=0)
    result = train(NetworkSpec((2, 4, 1)), cfg, x, y)
    assert [step for step, _ in result.trace] == [0, 100, 200]


@pytest.mark.filterwarnings("ignore:overflow")
def test_train_divergence_reports_step():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(64, 2)) * 1e3
    y = rng.normal(size=64) * 1e3
    cfg = TrainConfig(learning_rate=1e80, steps=200, batch_size=16, seed=0)
    with pytest.raises(TrainingDivergedError, match="step"):
        train(NetworkSpec((2, 8, 1)), cfg, x, y)


def test_train_augment_hook_applied_per_batch():
    # A hook that zeros the inputs makes the model fit the target mean.
    rng = np.random.default_rng(9)
    x = rng.normal(size=(256, 2))
    y = x @ np.array([1.0, 1.0]) + 5.0
    cfg = TrainConfig(learning_rate=1e-2, steps=1500, batch_size=64, seed=2)

    def zero_inputs(xb, nb, hook_rng):
        return np.zeros_like(xb)

    result = train(NetworkSpec((2, 8, 1)), cfg, x, y, augment=zero_inputs)
    pred = forward(NetworkSpec((2, 8, 1)), result.params, np.zeros((1, 2)))
    assert pred[0, 0] == pytest.approx(y.mean(), abs=0.2)


def test_predict_simplex_membership():
    rng = np.random.default_rng(10)
    spec = NetworkSpec((3, 6, 4), head="logits")
    params = init_params(spec, rng)
    proba = predict(spec, params, rng.normal(size=(20, 3)))
    assert (proba >= 0).all()
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-9)


def test_predict_linear_head_equals_forward():
    rng = np.random.default_rng(11)
    spec = NetworkSpec((2, 5, 1))
    params = init_params(spec, rng)
    x = rng.normal(size=(7, 2))
    np.testing.assert_array_equal(predict(spec, params, x), forward(spec, params, x))


def test_softmax_shift_invariance():
    rng = np.random.default_rng(12)
    logits = rng.normal(size=(30, 5))
    shifted = logits + rng.normal(size=(30, 1))  # per-row constant shift
    np.testing.assert_allclose(softmax(logits), softmax(shifted), atol=1e-12)
    assert (softmax(logits).argmax(axis=1) == softmax(shifted).argmax(axis=1)).all()


def test_network_spec_validation():
    with pytest.raises(ValueError):
        NetworkSpec((5,))
    with pytest.raises(ValueError):
        NetworkSpec((3, 0, 1))
    with pytest.raises(ValueError):
        NetworkSpec((3, 4, 1), head="softmax")
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0, steps=1)
