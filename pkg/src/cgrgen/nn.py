"""Layers and model assemblies: LSTM stacks, the TCN residual block, the
hybrid TCN+LSTM language model and the windowed BiLSTM classifier."""

from __future__ import annotations

import dataclasses
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .tensor import (
    Rng,
    ShapeMismatch,
    Tensor,
    causal_dilated_conv1d,
    concat_channels,
    dropout,
    getitem,
    matmul,
    one_hot,
    relu,
    sigmoid,
    stack,
    tanh,
)

VARIANTS = ("Baseline1", "Baseline2", "TcnOnly", "Hybrid", "BiLstmWin")
_DEFAULT_LSTM_LAYERS = {"Baseline1": 2, "Baseline2": 3, "Hybrid": 2}


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    variant: str = "Hybrid"
    vocab_size: int = 0
    max_len: int = 156
    lstm_units: int = 512
    lstm_layers: int | None = None
    tcn_filters: int = 256
    tcn_kernel: int = 2
    tcn_dilations: tuple[int, ...] = (1, 2, 4, 8, 16, 32)
    dropout: float = 0.5
    bilstm_units: int = 128
    bilstm_layers: int = 2
    window: int = 80
    stride: int = 3
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        self.tcn_dilations = tuple(int(d) for d in self.tcn_dilations)

    @property
    def n_lstm(self) -> int:
        if self.lstm_layers is not None:
            return self.lstm_layers
        return _DEFAULT_LSTM_LAYERS.get(self.variant, 0)

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.vocab_size < 2:
            raise ConfigError("vocab_size must be at least 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.tcn_kernel < 1 or any(d < 1 for d in self.tcn_dilations) or not self.tcn_dilations:
            raise ConfigError("tcn kernel and dilations must be positive")
        if self.variant in ("Baseline1", "Baseline2", "Hybrid") and self.n_lstm < 1:
            raise ConfigError("LSTM variants need at least one LSTM layer")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["tcn_dilations"] = list(self.tcn_dilations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------- layers


def _glorot(rng: Rng, shape, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape).astype(dtype)


def _orthogonal(rng: Rng, rows: int, cols: int, dtype) -> np.ndarray:
    a = rng.normal(size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return q[:rows, :cols].astype(dtype)


def _param(data: np.ndarray, name: str) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


@dataclass
class Dense:
    w: Tensor
    b: Tensor

    @classmethod
    def init(cls, rng: Rng, n_in: int, n_out: int, dtype, name: str) -> "Dense":
        return cls(
            _param(_glorot(rng, (n_in, n_out), n_in, n_out, dtype), f"{name}.w"),
            _param(np.zeros(n_out, dtype=dtype), f"{name}.b"),
        )

    def params(self) -> list[Tensor]:
        return [self.w, self.b]

    def forward(self, x: Tensor) -> Tensor:
        return matmul(x, self.w) + self.b


@dataclass
class LstmLayer:
    """Gate order in the packed weights is input, forget, cell, output."""

    w_x: Tensor
    w_h: Tensor
    b: Tensor

    @property
    def hidden_units(self) -> int:
        return self.w_h.shape[0]

    @property
    def input_width(self) -> int:
        return self.w_x.shape[0]

    @classmethod
    def init(cls, rng: Rng, n_in: int, hidden: int, dtype, name: str) -> "LstmLayer":
        bias = np.zeros(4 * hidden, dtype=dtype)
        bias[hidden : 2 * hidden] = 1.0
        return cls(
            _param(_glorot(rng, (n_in, 4 * hidden), n_in, 4 * hidden, dtype), f"{name}.w_x"),
            _param(_orthogonal(rng, hidden, 4 * hidden, dtype), f"{name}.w_h"),
            _param(bias, f"{name}.b"),
        )

    def params(self) -> list[Tensor]:
        return [self.w_x, self.w_h, self.b]

    def zero_state(self, batch: int) -> tuple[np.ndarray, np.ndarray]:
        z = np.zeros((batch, self.hidden_units), dtype=self.b.dtype)
        return z, z.copy()

    def step(self, x: np.ndarray, state) -> tuple[np.ndarray, tuple]:
        """Inference-only single step on plain arrays."""
        h, c = state
        H = self.hidden_units
        z = x @ self.w_x.data + h @ self.w_h.data + self.b.data
        i = 0.5 * (np.tanh(0.5 * z[:, :H]) + 1.0)
        f = 0.5 * (np.tanh(0.5 * z[:, H : 2 * H]) + 1.0)
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = 0.5 * (np.tanh(0.5 * z[:, 3 * H :]) + 1.0)
        c = f * c + i * g
        h = o * np.tanh(c)
        return h, (h, c)


def _batched(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 2:
        return getitem(x, (None,)), True
    if x.ndim != 3:
        raise ShapeMismatch(f"expected [T, C] or [B, T, C], got {x.shape}")
    return x, False


def lstm_forward(layer: LstmLayer, x: Tensor, state0=None) -> tuple[Tensor, tuple[Tensor, Tensor]]:
    """Run the LSTM recurrence over ``x`` (``[T, Cin]`` or ``[B, T, Cin]``).

    Returns the hidden sequence and the final ``(h, c)``.
    """
    xb, squeeze = _batched(x)
    if xb.shape[-1] != layer.input_width:
        raise ShapeMismatch(f"LSTM expects {layer.input_width} input channels, got {xb.shape[-1]}")
    B, T, _ = xb.shape
    H = layer.hidden_units
    if state0 is None:
        h0, c0 = layer.zero_state(B)
        h, c = Tensor(h0), Tensor(c0)
    else:
        h, c = state0
    xw = matmul(xb, layer.w_x) + layer.b
    outs = []
    for t in range(T):
        z = getitem(xw, (slice(None), t)) + matmul(h, layer.w_h)
        i = sigmoid(getitem(z, (slice(None), slice(0, H))))
        f = sigmoid(getitem(z, (slice(None), slice(H, 2 * H))))
        g = tanh(getitem(z, (slice(None), slice(2 * H, 3 * H))))
        o = sigmoid(getitem(z, (slice(None), slice(3 * H, 4 * H))))
        c = f * c + i * g
        h = o * tanh(c)
        outs.append(h)
    out = stack(outs, axis=1)
    if squeeze:
        out = getitem(out, 0)
    return out, (h, c)


@dataclass
class TcnResidualBlock:
    """Dilated causal convolutions (one per dilation) with a residual path.

    No normalization layers. ``match`` is the 1x1 convolution that aligns
    the residual channels and exists only when ``Cin != filters``.
    """

    convs: list[tuple[Tensor, Tensor]]
    dilations: tuple[int, ...]
    match: tuple[Tensor, Tensor] | None = None

    @property
    def filters(self) -> int:
        return self.convs[0][0].shape[2]

    @property
    def kernel(self) -> int:
        return self.convs[0][0].shape[0]

    @property
    def input_width(self) -> int:
        return self.convs[0][0].shape[1]

    @classmethod
    def init(cls, rng: Rng, n_in: int, filters: int, kernel: int, dilations, dtype, name: str):
        convs = []
        width = n_in
        for i, _ in enumerate(dilations):
            w = _glorot(rng, (kernel, width, filters), kernel * width, kernel * filters, dtype)
            convs.append((_param(w, f"{name}.conv{i}.w"), _param(np.zeros(filters, dtype=dtype), f"{name}.conv{i}.b")))
            width = filters
        match = None
        if n_in != filters:
            w = _glorot(rng, (1, n_in, filters), n_in, filters, dtype)
            match = (_param(w, f"{name}_match.w"), _param(np.zeros(filters, dtype=dtype), f"{name}_match.b"))
        return cls(convs, tuple(dilations), match)

    def conv_params(self) -> list[Tensor]:
        return [t for pair in self.convs for t in pair]

    def match_params(self) -> list[Tensor]:
        return list(self.match) if self.match else []

    def params(self) -> list[Tensor]:
        return self.conv_params() + self.match_params()

    def zero_state(self, batch: int):
        span = [(self.kernel - 1) * d + 1 for d in self.dilations]
        return [deque(maxlen=s) for s in span]

    def step(self, x: np.ndarray, state) -> tuple[np.ndarray, list]:
        u = x
        for (w, b), d, hist in zip(self.convs, self.dilations, state):
            hist.append(u)
            y = np.broadcast_to(b.data, (x.shape[0], self.filters)).copy()
            for k in range(self.kernel):
                back = k * d
                if back < len(hist):
                    y += hist[-1 - back] @ w.data[k]
            u = np.maximum(y, 0.0)
        res = x @ self.match[0].data[0] + self.match[1].data if self.match else x
        return np.maximum(u + res, 0.0), state


def tcn_forward(block: TcnResidualBlock, x: Tensor, train: bool = False, rng: Rng | None = None,
                dropout_p: float = 0.0) -> Tensor:
    """``relu(stack(x) + residual(x))`` where each stacked conv is followed
    by a rectifier and dropout."""
    xb, squeeze = _batched(x)
    if xb.shape[-1] != block.input_width:
        raise ShapeMismatch(f"TCN expects {block.input_width} input channels, got {xb.shape[-1]}")
    h = xb
    for (w, b), d in zip(block.convs, block.dilations):
        h = dropout(relu(causal_dilated_conv1d(h, w, b, d)), dropout_p, train, rng)
    res = causal_dilated_conv1d(xb, block.match[0], block.match[1], 1) if block.match else xb
    out = relu(h + res)
    if squeeze:
        out = getitem(out, 0)
    return out


def receptive_field(dilations: Sequence[int], kernel: int = 2) -> int:
    """Past positions (including the current one) visible to a stack of
    causal convolutions."""
    return 1 + (kernel - 1) * sum(dilations)


def plain_receptive_field(n_layers: int, kernel: int = 2) -> int:
    return receptive_field([1] * n_layers, kernel)


def rf_advantage(n: int) -> Fraction:
    """Receptive-field gain of ``n`` kernel-2 layers with dilations
    ``1, 2, ..., 2**(n-1)`` over ``n`` undilated layers: ``2**n / (n + 1)``."""
    return Fraction(receptive_field([2**i for i in range(n)], 2), plain_receptive_field(n, 2))


# ---------------------------------------------------------------- models


class Model:
    """A built network: ordered named layers plus the config that made them."""

    def __init__(self, config: ModelConfig, layers: "OrderedDict[str, object]", vocab: list[str] | None = None):
        self.config = config
        self.layers = layers
        self.vocab = vocab

    # parameter views -------------------------------------------------
    @property
    def params(self) -> "OrderedDict[str, list[Tensor]]":
        """Named parameter groups in build order (the TCN block contributes
        ``tcn`` and, when present, ``tcn_match``)."""
        out: OrderedDict[str, list[Tensor]] = OrderedDict()
        for name, layer in self.layers.items():
            if isinstance(layer, TcnResidualBlock):
                out[name] = layer.conv_params()
                if layer.match:
                    out[f"{name}_match"] = layer.match_params()
            else:
                out[name] = layer.params()
        return out

    def slots(self) -> list[str]:
        """Parameter group names numbered from 1 in build order."""
        return list(self.params)

    def parameters(self) -> list[Tensor]:
        return [t for group in self.params.values() for t in group]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [(f"{g}.{i}", t) for g, ts in self.params.items() for i, t in enumerate(ts)]

    def n_params(self) -> int:
        return sum(t.data.size for t in self.parameters())

    def zero_grad(self) -> None:
        for t in self.parameters():
            t.grad = None

    @property
    def dtype(self):
        return np.dtype(self.config.dtype)

    def encode_inputs(self, ids) -> Tensor:
        return Tensor(one_hot(ids, self.config.vocab_size, dtype=self.dtype))

    # forward -----------------------------------------------------------
    def forward(self, x: Tensor, train: bool = False, rng: Rng | None = None) -> Tensor:
        if self.config.variant == "BiLstmWin":
            return bilstm_window_forward(self, x, train, rng)
        return hybrid_forward(self, x, train, rng)

    __call__ = forward

    # incremental inference --------------------------------------------
    def init_state(self, batch: int):
        if self.config.variant == "BiLstmWin":
            return [deque(maxlen=self.config.window) for _ in range(batch)]
        state = {}
        for name, layer in self.layers.items():
            if isinstance(layer, (LstmLayer, TcnResidualBlock)):
                state[name] = layer.zero_state(batch)
        return state

    def step(self, ids, state) -> tuple[np.ndarray, object]:
        """Logits ``[B, V]`` for the next position given the latest tokens."""
        ids = np.asarray(ids, dtype=np.int64)
        if self.config.variant == "BiLstmWin":
            return self._window_step(ids, state)
        x = one_hot(ids, self.config.vocab_size, dtype=self.dtype)
        lstm_out = x
        has_lstm = False
        tcn_out = None
        for name, layer in self.layers.items():
            if isinstance(layer, LstmLayer):
                lstm_out, state[name] = layer.step(lstm_out, state[name])
                has_lstm = True
            elif isinstance(layer, TcnResidualBlock):
                tcn_out, state[name] = layer.step(x, state[name])
        parts = ([lstm_out] if has_lstm else []) + ([tcn_out] if tcn_out is not None else [])
        feats = np.concatenate(parts, axis=-1)
        head = self.layers["head"]
        return feats @ head.w.data + head.b.data, state

    def _window_step(self, ids, state):
        W = self.config.window
        for hist, tok in zip(state, ids):
            hist.append(int(tok))
        windows = np.zeros((len(state), W), dtype=np.int64)
        for r, hist in enumerate(state):
            if hist:
                windows[r, W - len(hist):] = list(hist)
        logits = bilstm_window_forward(self, self.encode_inputs(windows), False, None)
        return logits.data, state


def hybrid_forward(model: Model, x: Tensor, train: bool = False, rng: Rng | None = None) -> Tensor:
    """Logits ``[..., T, V]`` for the autoregressive variants.

    The LSTM stack and the TCN block both read the one-hot input; their
    features are concatenated channel-wise and fed to the softmax head.
    Variants without one of the branches simply skip it.
    """
    cfg = model.config
    if x.shape[-1] != cfg.vocab_size:
        raise ShapeMismatch(f"input width {x.shape[-1]} != vocab size {cfg.vocab_size}")
    feats = []
    h = None
    for name, layer in model.layers.items():
        if isinstance(layer, LstmLayer):
            h, _ = lstm_forward(layer, x if h is None else h)
            h = dropout(h, cfg.dropout, train, rng)
    if h is not None:
        feats.append(h)
    block = model.layers.get("tcn")
    if block is not None:
        feats.append(tcn_forward(block, x, train, rng, cfg.dropout))
    z = feats[0] if len(feats) == 1 else concat_channels(feats[0], feats[1])
    return model.layers["head"].forward(z)


def _reverse_time(x: Tensor) -> Tensor:
    return getitem(x, (slice(None), slice(None, None, -1)))


def bilstm_window_forward(model: Model, window: Tensor, train: bool = False, rng: Rng | None = None) -> Tensor:
    """Next-token logits from a fixed window of one-hot tokens.

    Each bidirectional layer concatenates a forward pass and a time-reversed
    pass; the classifier reads the forward state at the last position and
    the backward state at the first.
    """
    cfg = model.config
    xb, squeeze = _batched(window)
    if xb.shape[1] != cfg.window or xb.shape[2] != cfg.vocab_size:
        raise ShapeMismatch(f"window must be [{cfg.window}, {cfg.vocab_size}], got {window.shape}")
    h = xb
    fwd_out = bwd_out = None
    for k in range(cfg.bilstm_layers):
        fwd_out, _ = lstm_forward(model.layers[f"bilstm{k + 1}_fwd"], h)
        rev, _ = lstm_forward(model.layers[f"bilstm{k + 1}_bwd"], _reverse_time(h))
        bwd_out = _reverse_time(rev)
        h = dropout(concat_channels(fwd_out, bwd_out), cfg.dropout, train, rng)
    last = getitem(h, (slice(None), -1, slice(0, cfg.bilstm_units)))
    first = getitem(h, (slice(None), 0, slice(cfg.bilstm_units, 2 * cfg.bilstm_units)))
    logits = model.layers["head"].forward(concat_channels(last, first))
    if squeeze:
        logits = getitem(logits, 0)
    return logits


def build_model(config: ModelConfig, rng: Rng | None = None, vocab: list[str] | None = None) -> Model:
    """Initialize a model deterministically from ``config.seed`` (or *rng*)."""
    config.validate()
    if vocab is not None and len(vocab) != config.vocab_size:
        raise ConfigError(f"vocabulary has {len(vocab)} tokens, config says {config.vocab_size}")
    rng = rng or Rng(config.seed, stream=1)
    dtype = np.dtype(config.dtype)
    V = config.vocab_size
    layers: OrderedDict[str, object] = OrderedDict()
    width = 0
    if config.variant == "BiLstmWin":
        n_in = V
        for k in range(config.bilstm_layers):
            for direction in ("fwd", "bwd"):
                name = f"bilstm{k + 1}_{direction}"
                layers[name] = LstmLayer.init(rng, n_in, config.bilstm_units, dtype, name)
            n_in = 2 * config.bilstm_units
        width = 2 * config.bilstm_units
    else:
        if config.variant in ("Baseline1", "Baseline2", "Hybrid"):
            n_in = V
            for k in range(config.n_lstm):
                name = f"lstm{k + 1}"
                layers[name] = LstmLayer.init(rng, n_in, config.lstm_units, dtype, name)
                n_in = config.lstm_units
            width += config.lstm_units
        if config.variant in ("TcnOnly", "Hybrid"):
            layers["tcn"] = TcnResidualBlock.init(
                rng, V, config.tcn_filters, config.tcn_kernel, config.tcn_dilations, dtype, "tcn"
            )
            width += config.tcn_filters
    layers["head"] = Dense.init(rng, width, V, dtype, "head")
    return Model(config, layers, vocab)


def expected_param_count(config: ModelConfig) -> int:
    """Closed-form parameter count for *config*."""
    V = config.vocab_size

    def lstm(n_in, h):
        return 4 * h * (n_in + h + 1)

    total = 0
    width = 0
    if config.variant == "BiLstmWin":
        n_in = V
        for _ in range(config.bilstm_layers):
            total += 2 * lstm(n_in, config.bilstm_units)
            n_in = 2 * config.bilstm_units
        width = 2 * config.bilstm_units
    else:
        if config.variant in ("Baseline1", "Baseline2", "Hybrid"):
            n_in = V
            for _ in range(config.n_lstm):
                total += lstm(n_in, config.lstm_units)
                n_in = config.lstm_units
            width += config.lstm_units
        if config.variant in ("TcnOnly", "Hybrid"):
            F, K = config.tcn_filters, config.tcn_kernel
            n = len(config.tcn_dilations)
            total += K * V * F + F + (n - 1) * (K * F * F + F)
            if V != F:
                total += V * F + F
            width += F
    return total + width * V + V
