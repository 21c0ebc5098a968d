"""Temperature-controlled autoregressive sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Model
from .tensor import Rng
from .vocab import EOS_ID, PAD_ID, SOS_ID, SPECIALS


class NonFiniteLogits(ValueError):
    pass


@dataclass
class SamplerConfig:
    temperature: float = 0.7
    max_len: int = 156
    count: int = 30000
    seed: int = 0
    batch_size: int = 256
    start_id: int = SOS_ID
    end_id: int = EOS_ID
    pad_id: int = PAD_ID

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.count < 1:
            raise ValueError("count must be >= 1")


def tempered_softmax(logits, temperature: float = 1.0) -> np.ndarray:
    """``exp(y_i / T) / sum_j exp(y_j / T)`` over the last axis, in float64."""
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NonFiniteLogits("logits contain NaN or inf")
    z = z / temperature
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def sample_next(logits, temperature: float, rng: Rng, size: int | None = None):
    """Draw token ids from the tempered categorical over ``logits[..., V]``.

    ``logits`` of shape ``[V]`` gives a single id (or ``size`` ids);
    ``[B, V]`` gives one id per row. Draws use the inverse CDF of one
    uniform per sample, so equal rng streams give equal tokens.
    """
    p = tempered_softmax(logits, temperature)
    cdf = np.cumsum(p, axis=-1)
    if p.ndim == 1:
        u = rng.random(size)
        ids = np.searchsorted(cdf, np.asarray(u) * cdf[-1], side="right")
        ids = np.minimum(ids, p.shape[-1] - 1)
        return int(ids) if size is None else ids
    u = rng.random(p.shape[0]) * cdf[:, -1]
    ids = (cdf <= u[:, None]).sum(axis=-1)
    return np.minimum(ids, p.shape[-1] - 1)


def _generate_chunk(model: Model, n: int, config: SamplerConfig, rng: Rng, tokens) -> list[str]:
    state = model.init_state(n)
    current = np.full(n, config.start_id, dtype=np.int64)
    pieces: list[list[str]] = [[] for _ in range(n)]
    lengths = np.zeros(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    n_special = len(SPECIALS)
    while active.any():
        logits, state = model.step(current, state)
        nxt = sample_next(logits, config.temperature, rng)
        for r in np.flatnonzero(active):
            tok = int(nxt[r])
            if tok == config.end_id:
                active[r] = False
                continue
            if tok < n_special:
                # stray framing token in the payload: ends the string
                active[r] = False
                continue
            text = tokens[tok]
            if lengths[r] + len(text) > config.max_len:
                active[r] = False
                continue
            pieces[r].append(text)
            lengths[r] += len(text)
        current = np.where(active, nxt, config.pad_id)
    return ["".join(p) for p in pieces]


def generate(model: Model, config: SamplerConfig) -> list[str]:
    """Sample ``config.count`` strings without framing tokens.

    Work is split into chunks of ``config.batch_size``; chunk *k* draws from
    its own stream ``Rng(seed, k)`` and results are concatenated in chunk
    order, so the output depends only on the seed and the model.
    """
    if model.vocab is None:
        raise ValueError("model has no vocabulary attached")
    out: list[str] = []
    chunk = 0
    while len(out) < config.count:
        n = min(config.batch_size, config.count - len(out))
        out.extend(_generate_chunk(model, n, config, Rng(config.seed, stream=100 + chunk), model.vocab))
        chunk += 1
    return out
