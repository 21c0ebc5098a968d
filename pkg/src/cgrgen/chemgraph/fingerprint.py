"""Circular (Morgan-style) fingerprints and Tanimoto similarity."""

from __future__ import annotations

from dataclasses import dataclass

from .analysis import implicit_hydrogens, ring_edges
from .graph import LengthMismatch, MolGraph

N_BITS = 2048
RADIUS = 2

_MASK64 = (1 << 64) - 1
_MULT = 0x9E3779B97F4A7C15


def _mix(h: int, x: int) -> int:
    h = ((h ^ (x & _MASK64)) * _MULT) & _MASK64
    return h ^ (h >> 29)


def _hash_ints(values) -> int:
    h = 0x84222325CBF29CE4
    for v in values:
        h = _mix(h, v)
    return h


@dataclass(frozen=True)
class Fingerprint:
    bits: int
    n_bits: int = N_BITS
    radius: int = RADIUS

    def popcount(self) -> int:
        return self.bits.bit_count()

    def on_bits(self) -> list[int]:
        return [i for i in range(self.n_bits) if self.bits >> i & 1]


def fingerprint(m: MolGraph, radius: int = RADIUS, n_bits: int = N_BITS) -> Fingerprint:
    """Fold hashed circular atom environments into an *n_bits* bitset."""
    if not m.atoms:
        raise ValueError("empty molecule")
    in_ring = [False] * len(m.atoms)
    edges = [(a, b) for a, b, _ in m.bonds]
    for k in ring_edges(len(m.atoms), edges):
        a, b = edges[k]
        in_ring[a] = in_ring[b] = True
    ids = []
    for i, atom in enumerate(m.atoms):
        ids.append(
            _hash_ints(
                (
                    atom.element.number,
                    len(m.neighbors[i]),
                    implicit_hydrogens(m, i),
                    atom.charge_before + 8,
                    int(atom.aromatic),
                    int(in_ring[i]),
                    atom.isotope or 0,
                )
            )
        )
    seen = set(ids)
    for level in range(1, radius + 1):
        new_ids = []
        for i in range(len(m.atoms)):
            env = sorted((order.code, ids[j]) for j, order in m.neighbors[i])
            new_ids.append(_hash_ints([level, ids[i], *(v for pair in env for v in pair)]))
        ids = new_ids
        seen.update(ids)
    bits = 0
    for h in seen:
        bits |= 1 << (h % n_bits)
    return Fingerprint(bits, n_bits, radius)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    if a.n_bits != b.n_bits:
        raise LengthMismatch(f"{a.n_bits} vs {b.n_bits} bits")
    union = (a.bits | b.bits).bit_count()
    if union == 0:
        return 1.0
    return (a.bits & b.bits).bit_count() / union
