import importlib
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hazfractal.errors import ConfigError, InvalidInput, TrainingDiverged
from hazfractal.hgnn import (
    HgnnConfig,
    TrainSchedule,
    bilstm_encode,
    checkpoint,
    conv_maxpool,
    gmbc_fuse,
    gmbc_weight,
    hgnn_forward,
    init_params,
    loss_and_grad,
    lstm_cell_step,
    param_count,
    param_names,
    predict,
    predict_batch,
    train,
)
from hazfractal.hgnn.network import backward, cross_entropy, flatten, unflatten

train_module = importlib.import_module("hazfractal.hgnn.train")  # shadowed by the function
SMALL = HgnnConfig(fusion_dim=8, kernel_size=3, num_classes=3, seed=1)


def lstm_params(hidden, input_dim=1, bias=None):
    b = np.zeros(4 * hidden) if bias is None else np.repeat(np.asarray(bias, float), hidden)
    return {"Wx": np.zeros((input_dim, 4 * hidden)), "Wh": np.zeros((hidden, 4 * hidden)), "b": b}


def test_zero_lstm_stays_at_origin():
    h, c = lstm_cell_step([0.7], np.zeros(3), np.zeros(3), lstm_params(3))
    np.testing.assert_array_equal(h, 0.0)
    np.testing.assert_array_equal(c, 0.0)


def test_saturated_gates():
    # forget closed, input open, candidate +1, output open
    h, c = lstm_cell_step([0.0], np.zeros(2), np.full(2, 5.0), lstm_params(2, bias=[-60, 60, 60, 60]))
    np.testing.assert_allclose(c, 1.0)
    np.testing.assert_allclose(h, math.tanh(1.0))
    # forget open, input closed: the cell is carried unchanged
    h, c = lstm_cell_step([3.0], np.zeros(2), np.full(2, 0.25), lstm_params(2, bias=[60, -60, 0, 60]))
    np.testing.assert_allclose(c, 0.25)


def test_tied_bilstm_reversal_swaps_halves():
    rng = np.random.default_rng(0)
    p = {"Wx": rng.normal(size=(1, 12)), "Wh": rng.normal(size=(3, 12)), "b": rng.normal(size=12)}
    x = rng.normal(size=9)
    fwd, rev = bilstm_encode(x, p), bilstm_encode(x[::-1], p)
    np.testing.assert_allclose(fwd[:3], rev[3:])
    np.testing.assert_allclose(fwd[3:], rev[:3])


def test_conv_maxpool_examples():
    params = {"W": np.array([[1.0, -1.0], [-1.0, -1.0]]), "b": np.array([0.0, -1.0])}
    # first filter responds [-3, 2, -1]; second is negative everywhere
    np.testing.assert_array_equal(conv_maxpool([0.0, 3.0, 1.0, 2.0], params), [2.0, 0.0])
    with pytest.raises(InvalidInput):
        conv_maxpool([1.0], params)


def test_gmbc_weight_values():
    assert gmbc_weight(0.5, 0.5) == 0.625
    assert gmbc_weight(0.3, 0.0) == 0.3
    assert gmbc_weight(0.0, 0.8) == 0.0
    assert gmbc_weight(1.0, 0.8) == 1.0


@given(st.floats(0, 1), st.floats(0, 1))
def test_gmbc_weight_in_unit_interval(lam, eta):
    assert 0.0 <= gmbc_weight(lam, eta) <= 1.0


def test_gmbc_fuse_override_and_hull():
    rng = np.random.default_rng(2)
    p = {"Wc": rng.normal(size=(4, 4)), "bc": rng.normal(size=4),
         "Wl": rng.normal(size=(4, 4)), "bl": rng.normal(size=4)}
    f_c, f_l = rng.normal(size=4), rng.normal(size=4)
    np.testing.assert_array_equal(gmbc_fuse(f_c, f_l, p, psi_override=0.0), f_c)
    np.testing.assert_array_equal(gmbc_fuse(f_c, f_l, p, psi_override=1.0), f_l)
    out = gmbc_fuse(f_c, f_l, p)
    assert np.all(out >= np.minimum(f_c, f_l)) and np.all(out <= np.maximum(f_c, f_l))
    with pytest.raises(InvalidInput):
        gmbc_fuse(f_c, f_l[:3], p)


def test_param_count_by_hand():
    h, df, d, C = 4, 8, 3, 3
    lstm = 2 * (1 * 4 * h + h * 4 * h + 4 * h)
    total = 4 * lstm + 4 * (df * d + df) + 3 * (2 * df * df + 2 * df) + (C * 2 * df + C)
    assert param_count(SMALL) == total == 1379
    assert len(param_names(SMALL)) == len(set(param_names(SMALL)))


def test_config_validation():
    for bad in (dict(fusion_dim=7), dict(kernel_size=0), dict(kernel_size=20, fusion_dim=8),
                dict(num_classes=1)):
        with pytest.raises(InvalidInput):
            HgnnConfig(**bad)
    assert HgnnConfig.from_dict(SMALL.to_dict()) == SMALL


def test_forward_shapes_and_probabilities():
    params = init_params(SMALL)
    x = np.random.default_rng(0).normal(size=(5, 12))
    trace = hgnn_forward(x, params, SMALL)
    assert trace.logits.shape == (5, 3)
    np.testing.assert_allclose(trace.probabilities.sum(axis=1), 1.0)
    assert trace.features["f4"].shape == (5, 16)
    assert set(trace.gates) == {f"{g}{k}" for g in ("lambda", "eta", "psi") for k in (1, 2, 3)}
    single = hgnn_forward(x[0], params, SMALL)
    np.testing.assert_allclose(single.logits[0], trace.logits[0])
    assert isinstance(predict(single), int)
    with pytest.raises(InvalidInput):
        hgnn_forward(np.zeros(2), params, SMALL)


def test_gradients_match_finite_differences():
    params = init_params(SMALL)
    rng = np.random.default_rng(3)
    x, y = rng.normal(0.5, 0.3, size=(3, 10)), np.array([0, 2, 1])
    trace = hgnn_forward(x, params, SMALL)
    grads, dx = backward(trace, y, params, SMALL)
    flat = flatten(params, SMALL)
    analytic = flatten(grads, SMALL)
    eps = 1e-5

    def loss_at(vec, inputs=x):
        return cross_entropy(hgnn_forward(inputs, unflatten(vec, SMALL), SMALL), y)

    for name in param_names(SMALL):
        # one entry from every parameter block
        start = sum(params[n].size for n in param_names(SMALL)[: param_names(SMALL).index(name)])
        idx = start + int(rng.integers(params[name].size))
        up, down = flat.copy(), flat.copy()
        up[idx] += eps
        down[idx] -= eps
        numeric = (loss_at(up) - loss_at(down)) / (2 * eps)
        assert abs(numeric - analytic[idx]) <= 1e-4 * max(abs(numeric), abs(analytic[idx]), 1e-6), name
    for i, j in [(0, 0), (1, 5), (2, 9)]:
        up, down = x.copy(), x.copy()
        up[i, j] += eps
        down[i, j] -= eps
        numeric = (loss_at(flat, up) - loss_at(flat, down)) / (2 * eps)
        assert dx[i, j] == pytest.approx(numeric, rel=1e-4, abs=1e-9)


def test_predict_ties_go_to_lowest_class():
    assert predict(np.array([0.4, 0.4, 0.2])) == 1
    np.testing.assert_array_equal(predict(np.array([[0.1, 0.45, 0.45], [0.2, 0.3, 0.5]])), [2, 3])


def test_first_batch_loss_near_uniform():
    config = HgnnConfig(seed=0)
    x = np.random.default_rng(0).normal(0.6, 0.2, size=(64, 41))
    y = np.random.default_rng(1).integers(0, 5, size=64)
    loss, _ = loss_and_grad(x, y, init_params(config), config)
    assert abs(loss - math.log(5)) < 0.1


def toy_data(n=40, length=12, seed=0):
    rng = np.random.default_rng(seed)
    y = np.repeat([1, 2], n // 2)
    x = rng.normal(0.0, 0.05, size=(n, length)) + np.where(y == 1, 0.3, 0.9)[:, None]
    return x, y


def test_zero_learning_rate_keeps_initial_parameters():
    x, y = toy_data()
    config = HgnnConfig(fusion_dim=8, num_classes=2, seed=4)
    params, history = train(x, y, config, TrainSchedule(lr=0.0, epochs=2, batch_size=8))
    init = init_params(config)
    for name in init:
        np.testing.assert_array_equal(params[name], init[name])
    assert len(history.train_loss) == 2


def test_separable_toy_is_learned_deterministically():
    x, y = toy_data()
    config = HgnnConfig(fusion_dim=8, num_classes=2, seed=5)
    schedule = TrainSchedule(lr=1e-2, epochs=40, batch_size=8)
    params, history = train(x, y, config, schedule)
    assert np.array_equal(predict_batch(x, params, config), y)
    assert history.train_loss[-1] < history.train_loss[0]
    again, history2 = train(x, y, config, schedule)
    assert all(np.array_equal(params[k], again[k]) for k in params)
    assert history.to_csv() == history2.to_csv()
    assert history.to_csv().splitlines()[0] == "epoch,train_loss,val_macro_f1"


def test_best_epoch_is_selected_on_validation():
    x, y = toy_data()
    config = HgnnConfig(fusion_dim=8, num_classes=2, seed=5)
    _, history = train(x, y, config, TrainSchedule(lr=1e-2, epochs=5, batch_size=8), x[:10], y[:10])
    best = history.val_macro_f1[history.best_epoch - 1]
    assert best == max(history.val_macro_f1)
    assert history.val_macro_f1.index(best) == history.best_epoch - 1


def test_divergence_is_reported(monkeypatch):
    x, y = toy_data()
    monkeypatch.setattr(train_module, "loss_and_grad", lambda *a: (float("nan"), {}))
    with pytest.raises(TrainingDiverged):
        train(x, y, HgnnConfig(fusion_dim=8, num_classes=2), TrainSchedule(epochs=1))


def test_train_rejects_bad_labels():
    x, y = toy_data()
    with pytest.raises(InvalidInput):
        train(x, y + 5, HgnnConfig(fusion_dim=8, num_classes=2))


def test_checkpoint_round_trip(tmp_path):
    params = init_params(SMALL)
    path = tmp_path / "ckpt.json"
    checkpoint.save(path, params, SMALL, meta={"aspect": "risk"})
    loaded, config, meta = checkpoint.load(path)
    assert config == SMALL and meta == {"aspect": "risk"}
    for name in params:
        np.testing.assert_array_equal(loaded[name], params[name])
    data = checkpoint.to_dict(params, SMALL)
    data["version"] = 99
    with pytest.raises(ConfigError):
        checkpoint.from_dict(data)
    data = checkpoint.to_dict(params, SMALL)
    data["param_order"] = data["param_order"][::-1]
    with pytest.raises(ConfigError):
        checkpoint.from_dict(data)
