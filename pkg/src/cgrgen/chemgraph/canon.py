"""Canonical atom ranking by iterative neighborhood refinement."""

from __future__ import annotations

from typing import Hashable, Sequence

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _dense_ranks(keys: Sequence) -> list[int]:
    order = sorted(set(keys))
    lookup = {k: i for i, k in enumerate(order)}
    return [lookup[k] for k in keys]


def refine(ranks: list[int], adjacency: Sequence[Sequence[tuple[int, Hashable]]]) -> list[int]:
    """Weisfeiler-Leman refinement until the partition stops splitting."""
    n_classes = len(set(ranks))
    while True:
        keys = [
            (ranks[i], tuple(sorted((label, ranks[j]) for j, label in adjacency[i])))
            for i in range(len(ranks))
        ]
        new = _dense_ranks(keys)
        n_new = len(set(new))
        ranks = new
        if n_new == n_classes:
            return ranks
        n_classes = n_new


def canonical_ranks(
    labels: Sequence[Hashable],
    adjacency: Sequence[Sequence[tuple[int, Hashable]]],
) -> list[int]:
    """Return a permutation-invariant total order of the atoms.

    *labels* are comparable per-atom invariants, *adjacency[i]* lists
    ``(neighbor, edge_label)``. Ties that survive refinement are broken by
    individualizing one member of the lowest tied class and refining again;
    for the symmetric classes that occur in molecules the members are
    automorphic, so the choice does not affect the result.
    """
    n = len(labels)
    if n == 0:
        return []
    ranks = refine(_dense_ranks(list(labels)), adjacency)
    while len(set(ranks)) < n:
        counts: dict[int, int] = {}
        for r in ranks:
            counts[r] = counts.get(r, 0) + 1
        tied = min(r for r, c in counts.items() if c > 1)
        chosen = ranks.index(tied)
        keys = [(r, 0 if i == chosen or r != tied else 1) for i, r in enumerate(ranks)]
        ranks = refine(_dense_ranks(keys), adjacency)
    return ranks
