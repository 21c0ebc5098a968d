"""Generative metrics: validity, uniqueness, reaction-center novelty,
in-context Tanimoto diversity, oxidation fraction and hydrogen balance."""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .chemgraph import (
    AFTER,
    BEFORE,
    EmptyCenter,
    contains_oo,
    fingerprint,
    molecules,
    parse_cgrsmiles,
    project,
    rc_hash,
    reaction_center,
    tanimoto,
    to_reaction_smiles,
    validate,
    write_cgrsmiles,
)
from .tensor import Rng

N_BINS = 20
PAIR_CAP = 1_000_000


class ModeError(ValueError):
    pass


def _pct(num: int, den: int) -> float | None:
    return None if den == 0 else 100.0 * num / den


def compute_validity(strings: Sequence[str], max_len: int | None = 156) -> tuple[list[str], float | None]:
    """Valid subset (input order) and its percentage; ``None`` when empty."""
    valid = [s for s in strings if validate(s, max_len=max_len).valid]
    return valid, _pct(len(valid), len(strings))


def canonical_forms(valid: Iterable[str]) -> list[str]:
    return [write_cgrsmiles(parse_cgrsmiles(s, max_len=None)) for s in valid]


def compute_uniqueness(valid: Sequence[str]) -> float | None:
    """Percent of valid strings whose canonical forms are distinct."""
    forms = canonical_forms(valid)
    return _pct(len(set(forms)), len(forms))


def rc_keys(strings: Iterable[str], radius: int = 1) -> set[int]:
    keys = set()
    for s in strings:
        try:
            keys.add(rc_hash(reaction_center(parse_cgrsmiles(s, max_len=None), radius)).key)
        except EmptyCenter:
            continue
    return keys


def rc_stats(generated_valid: Iterable[str], reference: Iterable[str] | set[int], radius: int = 1) -> tuple[int, int]:
    """``(distinct, novel)`` reaction-center keys; *reference* may be given
    as strings or as a precomputed key set."""
    gen = rc_keys(generated_valid, radius)
    ref = reference if isinstance(reference, (set, frozenset)) else rc_keys(reference, radius)
    return len(gen), len(gen - ref)


def oxidation_fraction(generated_valid: Sequence[str]) -> float | None:
    """Percent of reactions with an O=O pair among the reactants."""
    hits = 0
    for s in generated_valid:
        before = project(parse_cgrsmiles(s, max_len=None), BEFORE)
        hits += contains_oo(molecules(before))
    return _pct(hits, len(generated_valid))


def copy_error_fraction(generated_valid: Sequence[str]) -> float | None:
    """Percent of reactions whose product side repeats the reactant side."""
    hits = 0
    for s in generated_valid:
        reactants, products = to_reaction_smiles(parse_cgrsmiles(s, max_len=None))
        hits += reactants == products
    return _pct(hits, len(generated_valid))


def h_balance_histogram(generated_valid: Iterable[str]) -> dict[int, int]:
    counts = Counter(validate(s, max_len=None).h_balance for s in generated_valid)
    return dict(sorted(counts.items()))


# ------------------------------------------------------------- Tanimoto


@dataclass
class TanimotoReport:
    mode: str
    scores: list[float]
    mean: float | None
    histogram: list[int] = field(default_factory=list)


def histogram(scores: Sequence[float], n_bins: int = N_BINS) -> list[int]:
    """Counts over ``[0, 1]`` in bins of width ``1/n_bins``; 1.0 lands in the last bin."""
    counts = [0] * n_bins
    for s in scores:
        counts[min(int(s * n_bins), n_bins - 1)] += 1
    return counts


def in_context_molecules(strings: Iterable[str]):
    """Reactant and product molecules of each reaction, atom maps dropped."""
    mols = []
    for s in strings:
        g = parse_cgrsmiles(s, max_len=None)
        for side in (BEFORE, AFTER):
            mols.extend(molecules(project(g, side)))
    return mols


def _report(mode: str, scores: list[float]) -> TanimotoReport:
    mean = float(np.mean(scores)) if scores else None
    return TanimotoReport(mode, scores, mean, histogram(scores))


def in_context_tanimoto(
    generated: Sequence[str],
    mode: str = "internal_pairwise",
    dataset: Sequence[str] | None = None,
    sample_cap: int = PAIR_CAP,
    seed: int = 0,
) -> TanimotoReport:
    """Similarity of molecules extracted from generated reactions.

    ``internal_pairwise`` scores pairs within the generated set: every pair
    when there are at most *sample_cap*, otherwise *sample_cap* seeded random
    pairs. ``nearest_to_dataset`` gives each generated molecule its highest
    similarity to any dataset molecule.
    """
    fps = [fingerprint(m) for m in in_context_molecules(generated)]
    if mode == "internal_pairwise":
        n = len(fps)
        n_pairs = n * (n - 1) // 2
        if n_pairs <= sample_cap:
            scores = [tanimoto(fps[i], fps[j]) for i, j in itertools.combinations(range(n), 2)]
        else:
            rng = Rng(seed, stream=21)
            i = rng.integers(0, n, sample_cap)
            j = (i + rng.integers(1, n, sample_cap)) % n
            scores = [tanimoto(fps[a], fps[b]) for a, b in zip(i, j)]
        return _report(mode, scores)
    if mode == "nearest_to_dataset":
        if dataset is None:
            raise ModeError("nearest_to_dataset needs a dataset")
        ref = [fingerprint(m) for m in in_context_molecules(dataset)]
        if not ref:
            raise ModeError("dataset yields no molecules")
        return _report(mode, [max(tanimoto(f, r) for r in ref) for f in fps])
    raise ModeError(f"unknown mode {mode!r}")


# --------------------------------------------------------------- report


@dataclass
class GenerationReport:
    n_generated: int
    n_valid: int
    valid_pct: float | None
    unique_pct: float | None
    n_rc_distinct: int
    n_rc_novel: int | None
    oxidation_pct: float | None
    copy_error_pct: float | None
    h_balance: dict[int, int]
    unique_denominator: str = "valid"
    tanimoto: list[TanimotoReport] = field(default_factory=list)

    def to_text(self) -> str:
        """Flat ``key: value`` document; absent values are written as ``NA``."""

        def fmt(v):
            if v is None:
                return "NA"
            if isinstance(v, float):
                return f"{v:.4f}"
            return str(v)

        lines = [
            f"n_generated: {self.n_generated}",
            f"n_valid: {self.n_valid}",
            f"valid_pct: {fmt(self.valid_pct)}",
            f"unique_pct: {fmt(self.unique_pct)}",
            f"unique_denominator: {self.unique_denominator}",
            f"n_rc_distinct: {self.n_rc_distinct}",
            f"n_rc_novel: {fmt(self.n_rc_novel)}",
            f"oxidation_pct: {fmt(self.oxidation_pct)}",
            f"copy_error_pct: {fmt(self.copy_error_pct)}",
            "h_balance: " + ",".join(f"{k}:{v}" for k, v in self.h_balance.items()),
        ]
        for rep in self.tanimoto:
            lines.append(f"tanimoto.{rep.mode}.n: {len(rep.scores)}")
            lines.append(f"tanimoto.{rep.mode}.mean: {fmt(rep.mean)}")
            lines.append(f"tanimoto.{rep.mode}.hist: " + ",".join(map(str, rep.histogram)))
        return "\n".join(lines) + "\n"


def generation_report(
    generated: Sequence[str],
    reference: Sequence[str] | None = None,
    radius: int = 1,
    tanimoto_modes: Sequence[str] = (),
    sample_cap: int = PAIR_CAP,
    seed: int = 0,
    max_len: int | None = 156,
) -> GenerationReport:
    valid, valid_pct = compute_validity(generated, max_len)
    distinct, novel = rc_stats(valid, reference or [], radius)
    reports = [
        in_context_tanimoto(valid, mode, reference, sample_cap, seed) for mode in tanimoto_modes if valid
    ]
    return GenerationReport(
        n_generated=len(generated),
        n_valid=len(valid),
        valid_pct=valid_pct,
        unique_pct=compute_uniqueness(valid),
        n_rc_distinct=distinct,
        n_rc_novel=novel if reference is not None else None,
        oxidation_pct=oxidation_fraction(valid),
        copy_error_pct=copy_error_fraction(valid),
        h_balance=h_balance_histogram(valid),
        tanimoto=reports,
    )
