import json

import numpy as np
import pytest

from oracles import fd_gradients, forward_loops, max_relative_error, mse_loops, random_params
from otdoa_lab.errors import DomainError, FormatError, TrainingDivergedError
from otdoa_lab.mlp import (
    MlpModel,
    MlpParams,
    MlpSpec,
    TrainConfig,
    backward,
    forward,
    init_params,
    load_model,
    loss_mse,
    save_model,
    train,
)
from otdoa_lab.dataset import FeatureSchema


def test_standard_shapes_and_zero_biases():
    p = init_params(MlpSpec.standard(18), 0)
    assert [w.shape for w in p.weights] == [(18, 18), (18, 32), (32, 16), (16, 8), (8, 2)]
    assert all(np.all(b == 0.0) for b in p.biases)


def test_standard_parameter_count():
    spec = MlpSpec.standard(18)
    widths = spec.layer_widths
    by_hand = 18 * 18 + 18 + 18 * 32 + 32 + 32 * 16 + 16 + 16 * 8 + 8 + 8 * 2 + 2
    assert by_hand == 1632
    assert spec.n_params == by_hand == sum(a.size for a in init_params(spec, 0).arrays())
    assert widths == (18, 18, 32, 16, 8, 2)
    assert MlpSpec.standard(24).layer_widths[0] == 24


def test_init_is_deterministic():
    a, b = init_params(MlpSpec.standard(), 5), init_params(MlpSpec.standard(), 5)
    assert all(np.array_equal(x, y) for x, y in zip(a.arrays(), b.arrays()))


def test_init_scale():
    p = init_params(MlpSpec((400, 300, 2), ("relu", "linear")), 1)
    assert np.std(p.weights[0]) == pytest.approx(np.sqrt(2 / 400), rel=0.02)


@pytest.mark.parametrize(
    "widths,acts",
    [((18, 2), ("relu",)), ((18, 3), ("linear",)), ((18, 4, 2), ("linear", "linear")), ((18,), ())],
)
def test_spec_validation(widths, acts):
    with pytest.raises(DomainError):
        MlpSpec(widths, acts)


def test_forward_zero_network():
    p = init_params(MlpSpec.standard(), 0)
    for w in p.weights:
        w[:] = 0
    np.testing.assert_array_equal(forward(p, np.arange(18.0)), [0.0, 0.0])


def test_forward_hand_network():
    spec = MlpSpec((1, 1, 2), ("relu", "linear"))
    p = MlpParams(spec, [np.array([[1.0]]), np.array([[1.0, 0.0]])], [np.zeros(1), np.zeros(2)])
    out = forward(p, np.array([[-1.0], [0.0], [2.0]]))
    np.testing.assert_array_equal(out[:, 0], [0.0, 0.0, 2.0])


def test_forward_matches_loop_oracle(rng):
    spec = MlpSpec.standard()
    p = random_params(spec, rng)
    X = rng.normal(size=(20, 18))
    out = forward(p, X)
    for x, y in zip(X, out):
        np.testing.assert_allclose(y, forward_loops(p, x), rtol=0, atol=1e-12)
    np.testing.assert_allclose(forward(p, X[3]), out[3], rtol=1e-14, atol=1e-15)


def test_forward_dimension_mismatch():
    with pytest.raises(DomainError):
        forward(init_params(MlpSpec.standard(24), 0), np.zeros(18))


def test_loss_examples(rng):
    y = rng.normal(size=(5, 2))
    assert loss_mse(y, y) == 0.0
    assert loss_mse([[0.0, 0.0]], [[3.0, 4.0]]) == 25.0
    a, b = rng.normal(size=(32, 2)), rng.normal(size=(32, 2))
    by_hand = sum((a[i, 0] - b[i, 0]) ** 2 + (a[i, 1] - b[i, 1]) ** 2 for i in range(32)) / 32
    assert loss_mse(a, b) == pytest.approx(by_hand, rel=1e-14)
    with pytest.raises(DomainError):
        loss_mse(np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(DomainError):
        loss_mse(np.zeros((3, 2)), np.zeros((4, 2)))


def test_backward_loss_matches_oracle(rng):
    p = random_params(MlpSpec.standard(), rng)
    X, Y = rng.normal(size=(8, 18)), rng.normal(size=(8, 2))
    loss, _ = backward(p, X, Y)
    assert loss == pytest.approx(mse_loops(p, X, Y), rel=1e-12)


@pytest.mark.parametrize("case", range(10))
def test_gradient_check(case):
    rng = np.random.default_rng(100 + case)
    if case < 3:
        spec = MlpSpec.standard(18 if case != 2 else 24)
    else:
        hidden = tuple(int(h) for h in rng.integers(1, 12, size=int(rng.integers(0, 4))))
        n_in = int(rng.integers(1, 10))
        spec = MlpSpec((n_in, *hidden, 2), ("relu",) * len(hidden) + ("linear",))
    p = random_params(spec, rng)
    n = int(rng.integers(1, 40))
    X, Y = rng.normal(size=(n, spec.input_width)), rng.normal(size=(n, 2))
    _, g = backward(p, X, Y)
    num = fd_gradients(p, lambda: loss_mse(forward(p, X), Y))
    assert max_relative_error(g.arrays(), num) < 1e-5


def test_gradient_zero_at_exact_fit(rng):
    spec = MlpSpec((5, 2), ("linear",))
    p = random_params(spec, rng)
    X = rng.normal(size=(16, 5))
    loss, g = backward(p, X, forward(p, X))
    assert loss == 0.0
    assert all(np.all(a == 0.0) for a in g.arrays())


def test_gradient_linear_in_residual(rng):
    spec = MlpSpec((5, 2), ("linear",))
    p = random_params(spec, rng)
    X, Y = rng.normal(size=(16, 5)), rng.normal(size=(16, 2))
    pred = forward(p, X)
    _, g1 = backward(p, X, Y)
    _, g2 = backward(p, X, pred - 2 * (pred - Y))
    for a, b in zip(g1.arrays(), g2.arrays()):
        np.testing.assert_allclose(b, 2 * a, rtol=1e-12, atol=1e-14)


def test_backward_shape_errors(rng):
    p = init_params(MlpSpec.standard(), 0)
    with pytest.raises(DomainError):
        backward(p, np.zeros((4, 18)), np.zeros((3, 2)))
    with pytest.raises(DomainError):
        backward(p, np.zeros((4, 17)), np.zeros((4, 2)))


@pytest.mark.parametrize("case", range(10))
def test_small_gradient_step_descends(case):
    rng = np.random.default_rng(200 + case)
    p = random_params(MlpSpec.standard(), rng)
    X, Y = rng.normal(size=(32, 18)), rng.normal(size=(32, 2))
    before, g = backward(p, X, Y)
    for a, ga in zip(p.arrays(), g.arrays()):
        a -= 1e-6 * ga
    assert loss_mse(forward(p, X), Y) <= before


def test_positive_homogeneity_without_biases(rng):
    p = init_params(MlpSpec.standard(), 3)
    x = rng.normal(size=18)
    for alpha in (0.1, 2.0, 37.5):
        np.testing.assert_allclose(forward(p, alpha * x), alpha * forward(p, x), rtol=1e-12)


def linear_task(n=1000, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 6))
    A = rng.normal(size=(6, 2)) * 0.5
    return X, X @ A + 0.1


def test_train_fits_linear_mapping():
    X, Y = linear_task()
    spec = MlpSpec((6, 16, 2), ("relu", "linear"))
    _, log = train(spec, TrainConfig(epochs=100, seed=1), X, Y)
    assert log.epochs == 100
    assert log.val_loss[-1] < 0.01 * log.initial_val_loss


def test_train_is_deterministic():
    X, Y = linear_task(300)
    spec = MlpSpec((6, 8, 2), ("relu", "linear"))
    cfg = TrainConfig(epochs=5, seed=9)
    p1, l1 = train(spec, cfg, X, Y)
    p2, l2 = train(spec, cfg, X, Y)
    assert l1 == l2
    assert all(np.array_equal(a, b) for a, b in zip(p1.arrays(), p2.arrays()))


def test_train_returns_best_validation_params():
    X, Y = linear_task(300)
    spec = MlpSpec((6, 8, 2), ("relu", "linear"))
    cfg = TrainConfig(epochs=8, seed=2, learning_rate=0.05)
    params, log = train(spec, cfg, X, Y)
    assert log.best_epoch >= 1
    assert log.val_loss[log.best_epoch - 1] == min(log.val_loss)


def test_train_divergence_and_input_errors():
    X, Y = linear_task(100)
    X[5, 2] = np.nan
    spec = MlpSpec((6, 4, 2), ("relu", "linear"))
    with pytest.raises(TrainingDivergedError):
        train(spec, TrainConfig(epochs=1, validation_fraction=0.0), X, Y)
    with pytest.raises(DomainError):
        train(spec, TrainConfig(epochs=1), np.zeros((0, 6)), np.zeros((0, 2)))
    with pytest.raises(DomainError):
        train(MlpSpec.standard(), TrainConfig(epochs=1), *linear_task(10))
    with pytest.raises(DomainError):
        TrainConfig(batch_size=0)
    with pytest.raises(DomainError):
        TrainConfig(learning_rate=0)


def _model(width=18, seed=4):
    rng = np.random.default_rng(seed)
    spec = MlpSpec.standard(width)
    schema = FeatureSchema(7, width == 24)
    return MlpModel(random_params(spec, rng), schema.to_dict(), 500.0)


def test_model_round_trip_is_bit_exact(tmp_path, rng):
    m = _model()
    path = tmp_path / "m.json"
    save_model(path, m)
    back = load_model(path)
    X = rng.normal(size=(100, 18))
    assert np.array_equal(m.predict_normalized(X), back.predict_normalized(X))
    assert back.train_d_cell == 500.0 and back.feature_schema == m.feature_schema
    np.testing.assert_array_equal(back.predict_positions(X, 750.0), 750.0 * forward(m.params, X))


def test_model_file_errors(tmp_path):
    path = tmp_path / "m.json"
    save_model(path, _model(24))
    text = path.read_text()
    (tmp_path / "trunc.json").write_text(text[: len(text) // 2])
    with pytest.raises(FormatError):
        load_model(tmp_path / "trunc.json")
    doc = json.loads(text)
    doc["layers"][0]["shape"] = [18, 24]
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    with pytest.raises(FormatError):
        load_model(tmp_path / "bad.json")
    (tmp_path / "other.json").write_text('{"format": "something else", "version": 1}')
    with pytest.raises(FormatError):
        load_model(tmp_path / "other.json")
    wide = load_model(path)
    with pytest.raises(DomainError):
        wide.predict_normalized(np.zeros(18))
