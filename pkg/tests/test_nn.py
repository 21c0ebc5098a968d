from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from cgrgen.nn import (
    ConfigError,
    ModelConfig,
    build_model,
    expected_param_count,
    lstm_forward,
    plain_receptive_field,
    receptive_field,
    rf_advantage,
    tcn_forward,
)
from cgrgen.tensor import Rng, Tensor, backward, cross_entropy, getitem, mul, sum_all
from cgrgen.train import window_count
from oracles import check_grads

TOL = 1e-4


def toy_config(variant="Hybrid", **kw) -> ModelConfig:
    base = dict(variant=variant, vocab_size=6, lstm_units=4, tcn_filters=3, tcn_dilations=(1, 2),
                dropout=0.0, bilstm_units=3, window=5, dtype="float64", seed=0)
    base.update(kw)
    return ModelConfig(**base)


def randomize(model, seed):
    """Give every parameter (biases too) generic values."""
    rng = np.random.default_rng(seed)
    for t in model.parameters():
        t.data = rng.normal(scale=0.5, size=t.shape)


# ------------------------------------------------------------ receptive field


def test_receptive_field_values():
    assert receptive_field([1], 2) == 2
    assert receptive_field([1, 2, 4, 8, 16, 32], 2) == 64
    # six undilated kernel-2 layers see 7 positions
    assert plain_receptive_field(6, 2) == 7
    ratio = receptive_field([1, 2, 4, 8, 16, 32], 2) / plain_receptive_field(6, 2)
    assert 9.0 <= ratio <= 9.3
    assert rf_advantage(6) == Fraction(64, 7)
    assert rf_advantage(2) == Fraction(4, 3)


def test_receptive_field_matches_gradient_support():
    cfg = toy_config("TcnOnly", tcn_dilations=(1, 2, 4), tcn_filters=2)
    model = build_model(cfg)
    # positive weights and inputs keep every rectifier open
    for t in model.parameters():
        t.data = np.abs(np.random.default_rng(0).normal(size=t.shape))
    T = 12
    x = Tensor(np.random.default_rng(1).random(size=(T, cfg.vocab_size)), requires_grad=True)
    backward(sum_all(getitem(tcn_forward(model.layers["tcn"], x), (T - 1,))))
    support = np.flatnonzero(np.abs(x.grad).sum(axis=1))
    assert T - support.min() == receptive_field((1, 2, 4), 2)


# ----------------------------------------------------------------- layers


def test_lstm_zero_weights_give_zero_output():
    model = build_model(toy_config("Baseline1"))
    layer = model.layers["lstm1"]
    for t in layer.params():
        t.data = np.zeros_like(t.data)
    out, _ = lstm_forward(layer, Tensor(np.random.default_rng(0).normal(size=(4, 6))))
    assert np.all(out.data == 0.0)


def test_lstm_perturbing_future_leaves_past():
    model = build_model(toy_config("Baseline1"))
    layer = model.layers["lstm1"]
    x = np.random.default_rng(0).normal(size=(6, 6))
    y1, _ = lstm_forward(layer, Tensor(x))
    x[4] += 10.0
    y2, _ = lstm_forward(layer, Tensor(x))
    np.testing.assert_array_equal(y1.data[:4], y2.data[:4])
    assert not np.array_equal(y1.data[4:], y2.data[4:])


def test_tcn_identity_kernels():
    cfg = toy_config("TcnOnly", vocab_size=3, tcn_filters=3, tcn_dilations=(1, 2))
    block = build_model(cfg).layers["tcn"]
    assert block.match is None
    for w, b in block.convs:
        w.data = np.zeros_like(w.data)
        w.data[0] = np.eye(3)
        b.data = np.zeros_like(b.data)
    x = np.random.default_rng(0).normal(size=(5, 3))
    # two relu convs leave relu(x); the residual adds x, then a final relu
    expected = np.maximum(np.maximum(x, 0) + x, 0)
    np.testing.assert_allclose(tcn_forward(block, Tensor(x)).data, expected)


def test_tcn_output_shape():
    cfg = ModelConfig(variant="TcnOnly", vocab_size=11, tcn_filters=256, tcn_dilations=(1, 2), seed=0)
    block = build_model(cfg).layers["tcn"]
    assert tcn_forward(block, Tensor(np.zeros((9, 11), dtype=np.float32))).shape == (9, 256)


def test_hybrid_logit_shape():
    model = build_model(toy_config())
    x = model.encode_inputs(np.array([[1, 3, 4, 5], [1, 2, 0, 0]]))
    assert model.forward(x).shape == (2, 4, 6)
    assert model.forward(model.encode_inputs([1, 3, 4])).shape == (3, 6)


def test_zero_tcn_branch_leaves_lstm_path():
    model = build_model(toy_config())
    randomize(model, 3)
    head = model.layers["head"]
    H = model.config.lstm_units
    head.w.data[H:] = 0.0
    x = model.encode_inputs([1, 3, 4, 2])
    h = x
    for name in ("lstm1", "lstm2"):
        h, _ = lstm_forward(model.layers[name], h)
    expected = h.data @ head.w.data[:H] + head.b.data
    np.testing.assert_allclose(model.forward(x).data, expected, rtol=1e-12)


def test_bilstm_window_output_and_count():
    model = build_model(toy_config("BiLstmWin"))
    x = model.encode_inputs(np.array([1, 3, 4, 5, 2]))
    assert model.forward(x).shape == (6,)
    assert window_count(87, 80, 3) == 3


def test_layer_names():
    assert list(build_model(toy_config("Baseline1")).layers) == ["lstm1", "lstm2", "head"]
    assert list(build_model(toy_config("Baseline2")).layers) == ["lstm1", "lstm2", "lstm3", "head"]
    assert build_model(toy_config()).slots() == ["lstm1", "lstm2", "tcn", "tcn_match", "head"]


# -------------------------------------------------------------- causality


@pytest.mark.parametrize("variant", ["Baseline1", "TcnOnly", "Hybrid"])
@pytest.mark.parametrize("seed", range(3))
def test_model_causality(variant, seed):
    model = build_model(toy_config(variant, seed=seed))
    randomize(model, seed)
    T = 8
    x = Tensor(np.random.default_rng(seed).normal(size=(T, 6)), requires_grad=True)
    for t in range(T):
        x.grad = None
        backward(sum_all(getitem(model.forward(x), (t,))))
        assert np.all(x.grad[t + 1 :] == 0.0)


# -------------------------------------------------------------- gradients


@pytest.mark.parametrize("variant", ["Baseline1", "Baseline2", "TcnOnly", "Hybrid"])
@pytest.mark.parametrize("seed", range(3))
def test_full_model_gradients(variant, seed):
    model = build_model(toy_config(variant, seed=seed))
    randomize(model, seed)
    ids = np.array([[1, 4, 3, 5, 2]])
    x = model.encode_inputs(ids[:, :-1])
    targets = ids[:, 1:]
    err = check_grads(lambda: cross_entropy(model.forward(x), targets), model.parameters())
    assert err < TOL


@pytest.mark.parametrize("seed", range(3))
def test_bilstm_window_gradients(seed):
    model = build_model(toy_config("BiLstmWin", seed=seed))
    randomize(model, seed)
    x = model.encode_inputs(np.array([[1, 3, 4, 5, 2], [3, 3, 1, 0, 4]]))
    err = check_grads(lambda: cross_entropy(model.forward(x), [2, 5]), model.parameters())
    assert err < TOL


@pytest.mark.parametrize("seed", range(3))
def test_lstm_input_gradients(seed):
    model = build_model(toy_config("Baseline1", seed=seed))
    randomize(model, seed)
    x = Tensor(np.random.default_rng(seed).normal(size=(3, 6)), requires_grad=True)
    w = Tensor(np.random.default_rng(seed + 9).normal(size=(3, 4)))
    err = check_grads(lambda: sum_all(mul(lstm_forward(model.layers["lstm1"], x)[0], w)), [x] + model.layers["lstm1"].params())
    assert err < TOL


# ----------------------------------------------------- incremental inference


@pytest.mark.parametrize("variant", ["Baseline1", "TcnOnly", "Hybrid", "BiLstmWin"])
def test_step_matches_forward(variant):
    model = build_model(toy_config(variant))
    randomize(model, 5)
    ids = np.array([[1, 3, 4, 5, 3, 2], [1, 5, 5, 3, 4, 4]])
    state = model.init_state(2)
    stepped = []
    for t in range(ids.shape[1]):
        logits, state = model.step(ids[:, t], state)
        stepped.append(logits)
    stepped = np.stack(stepped, axis=1)
    if variant == "BiLstmWin":
        W = model.config.window
        for t in range(ids.shape[1]):
            window = np.zeros((2, W), dtype=int)
            hist = ids[:, max(0, t + 1 - W) : t + 1]
            window[:, W - hist.shape[1] :] = hist
            np.testing.assert_allclose(stepped[:, t], model.forward(model.encode_inputs(window)).data, atol=1e-12)
    else:
        np.testing.assert_allclose(stepped, model.forward(model.encode_inputs(ids)).data, atol=1e-12)


# ------------------------------------------------------------ construction


def test_same_seed_same_parameters():
    a = build_model(toy_config(seed=7))
    b = build_model(toy_config(seed=7))
    c = build_model(toy_config(seed=8))
    for (na, ta), (nb, tb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb and np.array_equal(ta.data, tb.data)
    assert any(not np.array_equal(ta.data, tc.data) for ta, tc in zip(a.parameters(), c.parameters()))


def test_parameter_count_by_hand():
    # V=10, hybrid with 2 LSTM layers of 8 units, TCN of 4 filters, dilations (1, 2), K=2
    cfg = ModelConfig(variant="Hybrid", vocab_size=10, lstm_units=8, tcn_filters=4, tcn_dilations=(1, 2), seed=0)
    lstm1 = 4 * 8 * (10 + 8 + 1)  # 608
    lstm2 = 4 * 8 * (8 + 8 + 1)  # 544
    conv1 = 2 * 10 * 4 + 4  # 84
    conv2 = 2 * 4 * 4 + 4  # 36
    match = 10 * 4 + 4  # 44
    head = (8 + 4) * 10 + 10  # 130
    assert lstm1 + lstm2 + conv1 + conv2 + match + head == 1446
    assert build_model(cfg).n_params() == 1446
    assert expected_param_count(cfg) == 1446


@pytest.mark.parametrize("variant", ["Baseline1", "Baseline2", "TcnOnly", "Hybrid", "BiLstmWin"])
def test_parameter_count_closed_form(variant):
    cfg = toy_config(variant)
    assert build_model(cfg).n_params() == expected_param_count(cfg)


def test_init_conventions():
    model = build_model(ModelConfig(variant="Baseline1", vocab_size=7, lstm_units=5, seed=0))
    layer = model.layers["lstm1"]
    np.testing.assert_array_equal(layer.b.data[5:10], 1.0)
    np.testing.assert_array_equal(layer.b.data[:5], 0.0)
    w = layer.w_h.data.astype(np.float64)
    # the packed recurrent matrix has orthonormal rows
    np.testing.assert_allclose(w @ w.T, np.eye(5), atol=1e-5)


def test_config_errors():
    with pytest.raises(ConfigError):
        build_model(ModelConfig(variant="Nope", vocab_size=5))
    with pytest.raises(ConfigError):
        build_model(ModelConfig(variant="Hybrid", vocab_size=5, dropout=1.0))
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"variant": "Hybrid", "vocab_size": 5, "colour": 1})


def test_config_round_trip():
    cfg = toy_config(tcn_dilations=(1, 2, 4))
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


def test_dropout_only_in_training():
    model = build_model(toy_config(dropout=0.5))
    x = model.encode_inputs([1, 3, 4])
    np.testing.assert_array_equal(model.forward(x).data, model.forward(x).data)
    a = model.forward(x, train=True, rng=Rng(0)).data
    b = model.forward(x, train=True, rng=Rng(1)).data
    assert not np.array_equal(a, b)
