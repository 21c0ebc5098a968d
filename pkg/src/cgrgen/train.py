"""Training loop, Adam, dataset splitting, fine-tuning protocols and
checkpoint persistence."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .nn import Model, ModelConfig, build_model
from .tensor import Rng, ShapeMismatch, Tensor, backward, cross_entropy
from .vocab import EOS_ID, PAD_ID, SOS_ID

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    pass


class ProtocolError(ValueError):
    pass


class EmptyCorpus(ValueError):
    pass


class CorruptCheckpoint(ValueError):
    pass


class VersionError(ValueError):
    pass


# ------------------------------------------------------------------ data


def split_dataset(corpus: Sequence, fraction: float = 0.8, seed: int = 0) -> tuple[list, list]:
    """Shuffle deterministically and cut at ``round(N * fraction)``."""
    if len(corpus) == 0:
        raise EmptyCorpus("cannot split an empty corpus")
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    order = Rng(seed, stream=7).permutation(len(corpus))
    n_train = round(len(corpus) * fraction)
    train = [corpus[i] for i in order[:n_train]]
    test = [corpus[i] for i in order[n_train:]]
    return train, test


def make_batch(seqs: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Teacher-forcing arrays: inputs ``<sos> + s``, targets ``s + <eos>``,
    and a mask that is False on padding."""
    T = max(len(s) for s in seqs) + 1
    inputs = np.full((len(seqs), T), PAD_ID, dtype=np.int64)
    targets = np.full((len(seqs), T), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(seqs), T), dtype=bool)
    for r, s in enumerate(seqs):
        n = len(s)
        inputs[r, 0] = SOS_ID
        inputs[r, 1 : n + 1] = s
        targets[r, :n] = s
        targets[r, n] = EOS_ID
        mask[r, : n + 1] = True
    return inputs, targets, mask


def make_windows(seqs: Sequence[Sequence[int]], window: int = 80, stride: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Slide over the concatenated corpus ``<sos> s <eos> <sos> ...``;
    each window's following token is its target."""
    stream: list[int] = []
    for s in seqs:
        stream.extend([SOS_ID, *s, EOS_ID])
    starts = list(range(0, len(stream) - window, stride))
    if not starts:
        return np.zeros((0, window), dtype=np.int64), np.zeros(0, dtype=np.int64)
    X = np.array([stream[s : s + window] for s in starts], dtype=np.int64)
    y = np.array([stream[s + window] for s in starts], dtype=np.int64)
    return X, y


def window_count(length: int, window: int = 80, stride: int = 3) -> int:
    """Number of (window, next token) pairs in a stream of *length* tokens."""
    return len(range(0, length - window, stride))


# ------------------------------------------------------------------ Adam


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, in place."""
    if len(params) != len(grads):
        raise ShapeMismatch("params and grads differ in length")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.shape or state.m[i].shape != p.shape:
            raise ShapeMismatch(f"gradient {g.shape} vs parameter {p.shape}")
        m = state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        v = state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        p.data -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)


def clip_by_global_norm(grads: list[np.ndarray], max_norm: float | None) -> list[np.ndarray]:
    if not max_norm:
        return grads
    norm = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads))
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        return [g * scale for g in grads]
    return grads


# -------------------------------------------------------------- training


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 50
    batch_size: int = 64
    split: float = 0.8
    seed: int = 0
    shuffle: bool = True
    clip_norm: float | None = 5.0

    def __post_init__(self):
        if not 0.0 < self.split < 1.0:
            raise ValueError("split must be in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    test_loss: float | None
    updates: int


def _batches(model: Model, data, batch_size: int, order) -> list:
    if model.config.variant == "BiLstmWin":
        X, y = data
        return [(X[order[i : i + batch_size]], y[order[i : i + batch_size]], None) for i in range(0, len(order), batch_size)]
    out = []
    for i in range(0, len(order), batch_size):
        out.append(make_batch([data[j] for j in order[i : i + batch_size]]))
    return out


def _prepare(model: Model, seqs):
    if model.config.variant == "BiLstmWin":
        return make_windows(seqs, model.config.window, model.config.stride)
    return list(seqs)


def _loss(model: Model, batch, train: bool, rng: Rng | None) -> tuple[Tensor, int]:
    inputs, targets, mask = batch
    logits = model.forward(model.encode_inputs(inputs), train=train, rng=rng)
    loss = cross_entropy(logits, targets, mask)
    n = int(mask.sum()) if mask is not None else len(targets)
    return loss, n


def evaluate_loss(model: Model, seqs, batch_size: int = 64) -> float:
    """Token-weighted mean cross-entropy with dropout disabled."""
    data = _prepare(model, seqs)
    n_items = len(data[1]) if model.config.variant == "BiLstmWin" else len(data)
    total = count = 0.0
    for batch in _batches(model, data, batch_size, np.arange(n_items)):
        loss, n = _loss(model, batch, False, None)
        total += loss.item() * n
        count += n
    return total / count


def next_token_accuracy(model: Model, seqs, batch_size: int = 64) -> float:
    data = _prepare(model, seqs)
    n_items = len(data[1]) if model.config.variant == "BiLstmWin" else len(data)
    hits = count = 0
    for inputs, targets, mask in _batches(model, data, batch_size, np.arange(n_items)):
        logits = model.forward(model.encode_inputs(inputs)).data
        pred = logits.argmax(axis=-1)
        if mask is None:
            mask = np.ones(targets.shape, dtype=bool)
        hits += int(((pred == targets) & mask).sum())
        count += int(mask.sum())
    return hits / count


def run_epochs(
    model: Model,
    seqs,
    epochs: int,
    batch_size: int,
    lr: float,
    rng: Rng,
    trainable: Sequence[Tensor] | None = None,
    test_seqs=None,
    shuffle: bool = True,
    clip_norm: float | None = 5.0,
    on_update: Callable[[int], None] | None = None,
) -> list[EpochStats]:
    """Train only *trainable* (default: all parameters) with a fresh Adam state."""
    params = list(trainable) if trainable is not None else model.parameters()
    state = AdamState(lr=lr)
    data = _prepare(model, seqs)
    n_items = len(data[1]) if model.config.variant == "BiLstmWin" else len(data)
    if n_items == 0:
        raise EmptyCorpus("no training examples")
    history = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n_items) if shuffle else np.arange(n_items)
        total = count = 0.0
        updates = 0
        for batch in _batches(model, data, batch_size, order):
            model.zero_grad()
            loss, n = _loss(model, batch, True, rng)
            value = loss.item()
            if not math.isfinite(value):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            backward(loss)
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
            adam_step(params, clip_by_global_norm(grads, clip_norm), state)
            updates += 1
            if on_update is not None:
                on_update(updates)
            total += value * n
            count += n
        test_loss = evaluate_loss(model, test_seqs) if test_seqs else None
        history.append(EpochStats(epoch, total / count, test_loss, updates))
        log.info("epoch %d train %.4f test %s", epoch, total / count, test_loss)
    model.zero_grad()
    return history


def train_epochs(model: Model, data, config: TrainConfig, rng: Rng | None = None, test_data=None) -> list[EpochStats]:
    """Full training run with the config's learning rate, epochs and batch size."""
    rng = rng or Rng(config.seed, stream=3)
    return run_epochs(
        model,
        data,
        config.epochs,
        config.batch_size,
        config.lr,
        rng,
        test_seqs=test_data,
        shuffle=config.shuffle,
        clip_norm=config.clip_norm,
    )


# ------------------------------------------------------------ fine-tuning


@dataclass(frozen=True)
class Phase:
    slots: tuple[int, ...]
    names: tuple[str, ...]
    epochs: int
    lr: float


@dataclass
class FineTuneProtocol:
    """AU trains everything, LL only the head; P1 trains slot groups in
    reverse order of *groups* with the paired epochs and learning rates."""

    variant: str = "LL"
    epochs: int = 10
    batch_size: int = 1
    lr: float = 1e-3
    groups: tuple[tuple[int, ...], ...] = ((1, 2), (4,), (5,))
    phase_epochs: tuple[int, ...] = (2, 5, 10)
    lrs: tuple[float, ...] = (1e-6, 1e-5, 5e-4)
    clip_norm: float | None = 5.0

    def phases(self, model: Model) -> list[Phase]:
        slots = model.slots()
        if self.variant == "AU":
            return [Phase(tuple(range(1, len(slots) + 1)), tuple(slots), self.epochs, self.lr)]
        if self.variant == "LL":
            return [Phase((len(slots),), (slots[-1],), self.epochs, self.lr)]
        if self.variant != "P1":
            raise ProtocolError(f"unknown protocol {self.variant!r}")
        if not (len(self.groups) == len(self.phase_epochs) == len(self.lrs)) or not self.groups:
            raise ProtocolError("P1 groups, epochs and learning rates must have equal non-zero length")
        phases = []
        for group, epochs, lr in reversed(list(zip(self.groups, self.phase_epochs, self.lrs))):
            if not group or any(not 1 <= s <= len(slots) for s in group):
                raise ProtocolError(f"group {group} outside slots 1..{len(slots)} ({slots})")
            if epochs < 0 or lr <= 0:
                raise ProtocolError("epochs must be >= 0 and learning rates positive")
            phases.append(Phase(tuple(group), tuple(slots[s - 1] for s in group), epochs, lr))
        return phases


@dataclass
class PhaseRecord:
    phase: Phase
    updates: int
    history: list[EpochStats]


def fine_tune(model: Model, small_data, protocol: FineTuneProtocol, rng: Rng | None = None) -> list[PhaseRecord]:
    """Adapt a pretrained model in place; frozen groups are never touched."""
    rng = rng or Rng(0, stream=5)
    groups = model.params
    records = []
    for phase in protocol.phases(model):
        trainable = [t for name in phase.names for t in groups[name]]
        log.info("fine-tune phase %s: %d epochs at lr %g", phase.names, phase.epochs, phase.lr)
        history = []
        if phase.epochs:
            history = run_epochs(
                model, small_data, phase.epochs, protocol.batch_size, phase.lr, rng,
                trainable=trainable, clip_norm=protocol.clip_norm,
            )
        records.append(PhaseRecord(phase, sum(h.updates for h in history), history))
    return records


# ------------------------------------------------------------ checkpoints

MAGIC = b"CGRG"
FORMAT_VERSION = 1
_DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def checkpoint_bytes(model: Model) -> bytes:
    parts = [MAGIC, struct.pack("<H", FORMAT_VERSION)]
    for doc in (model.config.to_dict(), list(model.vocab) if model.vocab is not None else None):
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
        parts.append(struct.pack("<I", len(blob)) + blob)
    named = model.named_parameters()
    parts.append(struct.pack("<I", len(named)))
    for name, t in named:
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(t.data, dtype=t.data.dtype.newbyteorder("<"))
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def save_checkpoint(model: Model, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(model))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptCheckpoint("truncated checkpoint")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> Model:
    data = Path(path).read_bytes()
    if len(data) < 4 + 2 + 32 or data[:4] != MAGIC:
        raise CorruptCheckpoint("not a checkpoint file")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptCheckpoint("digest mismatch")
    r = _Reader(body)
    r.take(4)
    (version,) = r.unpack("<H")
    if version != FORMAT_VERSION:
        raise VersionError(f"checkpoint version {version}, expected {FORMAT_VERSION}")
    docs = []
    for _ in range(2):
        (n,) = r.unpack("<I")
        docs.append(json.loads(r.take(n).decode("utf-8")))
    config = ModelConfig.from_dict(docs[0])
    model = build_model(config, vocab=docs[1])
    targets = dict(model.named_parameters())
    (count,) = r.unpack("<I")
    if count != len(targets):
        raise CorruptCheckpoint(f"{count} parameter records, model has {len(targets)}")
    for _ in range(count):
        (n,) = r.unpack("<H")
        name = r.take(n).decode("utf-8")
        code, ndim = r.unpack("<BB")
        shape = r.unpack(f"<{ndim}I")
        dtype = _CODE_DTYPES[code]
        arr = np.frombuffer(r.take(int(np.prod(shape)) * dtype.itemsize), dtype=dtype).reshape(shape)
        t = targets.get(name)
        if t is None or t.shape != tuple(shape):
            raise CorruptCheckpoint(f"unexpected parameter record {name} {shape}")
        t.data = arr.astype(t.dtype)
    if r.pos != len(body):
        raise CorruptCheckpoint("trailing bytes")
    return model
