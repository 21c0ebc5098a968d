"""Token vocabulary for CGRSmiles language models."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .chemgraph.graph import CgrSyntaxError
from .chemgraph.parser import tokenize

log = logging.getLogger(__name__)

PAD, SOS, EOS = "<pad>", "<sos>", "<eos>"
SPECIALS = (PAD, SOS, EOS)
PAD_ID, SOS_ID, EOS_ID = 0, 1, 2


class TokenizeError(ValueError):
    def __init__(self, line: int, column: int, reason: str):
        super().__init__(f"line {line}, column {column}: {reason}")
        self.line = line
        self.column = column


def split_tokens(text: str, line: int = 1) -> list[str]:
    """Longest-match tokens: bracket atoms, dynamic bonds, two-letter
    organic symbols and ``%nn`` ring labels are single tokens."""
    try:
        return [tok.text for tok in tokenize(text)]
    except CgrSyntaxError as exc:
        raise TokenizeError(line, exc.position + 1, exc.reason) from None


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]

    def __post_init__(self):
        if self.tokens[:3] != SPECIALS:
            raise ValueError("vocabulary must start with the special tokens")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def id(self, token: str) -> int:
        return self._index[token]

    def encode(self, text: str, line: int = 1) -> list[int]:
        ids = []
        for tok in split_tokens(text, line):
            if tok not in self._index:
                raise TokenizeError(line, text.find(tok) + 1, f"token {tok!r} not in vocabulary")
            ids.append(self._index[tok])
        return ids

    def decode(self, ids: Iterable[int]) -> str:
        return "".join(self.tokens[i] for i in ids if i >= len(SPECIALS))

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(tuple(lines))


def build_vocab(corpus: Iterable[str]) -> Vocab:
    """Specials first, then every token seen in *corpus* in sorted order."""
    seen: set[str] = set()
    n = 0
    for lineno, text in enumerate(corpus, 1):
        seen.update(split_tokens(text, lineno))
        n += 1
    if n == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    return Vocab(SPECIALS + tuple(sorted(seen)))


def read_corpus(path, max_len: int | None = 156) -> tuple[list[str], dict[str, int]]:
    """One string per line; ``#`` lines and blanks ignored. Over-long and
    untokenizable lines are skipped, logged and counted."""
    kept: list[str] = []
    stats = {"lines": 0, "skipped_length": 0, "skipped_syntax": 0}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            stats["lines"] += 1
            if max_len is not None and len(line) > max_len:
                stats["skipped_length"] += 1
                log.info("line %d skipped: length %d > %d", lineno, len(line), max_len)
                continue
            try:
                split_tokens(line, lineno)
            except TokenizeError as exc:
                stats["skipped_syntax"] += 1
                log.warning("line %d skipped: %s", lineno, exc)
                continue
            kept.append(line)
    return kept, stats
