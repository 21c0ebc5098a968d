"""Template-based synthetic CGRSmiles corpora.

Each template is a CGR with ``{R}``/``{S}`` substituent slots; the slot
strings attach through their first atom. Template ring labels use 7-9 so
they never collide with the 1-2 labels inside substituents. Generated
strings are canonicalized before being returned.
"""

from __future__ import annotations

from .chemgraph import DEFAULT_MAX_LEN, canonical, validate
from .tensor import Rng

SUBSTITUENTS = (
    "C", "CC", "CCC", "CCCC", "C(C)C", "CC(C)C", "C(C)(C)C", "C1CCCC1", "C1CCCCC1",
    "c1ccccc1", "c1ccc(C)cc1", "c1ccc(Cl)cc1", "c1ccc(Br)cc1", "c1ccc(F)cc1",
    "c1ccc(OC)cc1", "c1ccncc1", "c1ccoc1", "c1ccsc1", "CCO", "CCCl", "CC#N", "C=C",
    "CC=C", "C(F)(F)F", "CCc1ccccc1", "c1ccc2ccccc2c1", "CC(=O)C", "C(=O)OC",
)

# wrap an inner substituent {X}; ring labels 3-4 keep clear of the inner ones
SCAFFOLDS = (
    "c3ccc({X})cc3", "C3CCC({X})CC3", "CC({X})CC", "C(=O)N{X}", "COc3ccc({X})cc3",
    "c3cc({X})ccn3", "CC(C)(C){X}", "C(F)(F)C{X}",
)

TEMPLATES = {
    "alcohol_to_aldehyde_o2": "O[=>-]O.O[->=]C{R}",
    "alcohol_to_ketone_o2": "O[=>-]O.O[->=]C({R}){S}",
    "alcohol_to_aldehyde_h2o2": "O[->.]O.O[->=]C{R}",
    "epoxidation_h2o2": "O[->.]O9[.>-]C({R})[=>-]C[.>-]9{S}",
    "esterification": "O[->.]C(=O)({R})[.>-]O{S}",
    "amidation": "O[->.]C(=O)({R})[.>-]N{S}",
    "ester_hydrolysis": "O[.>-]C(=O)({R})[->.]O{S}",
    "amination": "Cl[->.]C({R})[.>-]N{S}",
    "halide_hydrolysis": "Br[->.]C({R})[.>-]O",
    "sulfide_oxidation_h2o2": "O[->.]O[.>=]S({R}){S}",
    "aromatic_bromination": "Br[->.]Br[.>-]c7ccc({R})cc7",
    "diels_alder": "C9({R})[=>-]C[->=]C[=>-]C[.>-]C({S})[=>-]C[.>-]9",
    "amine_oxide": "C[N0>+](C)({R})[.>-][O0>-][->.]O",
    "dehydration": "O[->.]C({R})[->=]C{S}",
    "suzuki": "Br8[->.]c7ccc({R})cc7[.>-]c7ccc({S})cc7[->.]B(O)(O)[.>-]8",
    "aldehyde_autoxidation": "O[=>-]O[.>-]C(=O){R}",
    "dioxetane": "O9[=>-]O[.>-]C({R})[=>-]C[.>-]9{S}",
}

GENERAL = (
    "alcohol_to_aldehyde_h2o2", "epoxidation_h2o2", "esterification", "amidation",
    "ester_hydrolysis", "amination", "halide_hydrolysis", "sulfide_oxidation_h2o2",
    "aromatic_bromination", "diels_alder", "amine_oxide", "dehydration", "suzuki",
    "alcohol_to_aldehyde_o2",
)
OXIDATION_O2 = ("alcohol_to_aldehyde_o2", "alcohol_to_ketone_o2", "aldehyde_autoxidation", "dioxetane")
OXIDATION_OTHER = ("alcohol_to_aldehyde_h2o2", "sulfide_oxidation_h2o2", "epoxidation_h2o2")


def instantiate(name: str, r: str, s: str) -> str:
    return TEMPLATES[name].replace("{R}", r).replace("{S}", s)


def substituent(rng: Rng, depth: int = 0) -> str:
    """A base substituent wrapped in *depth* scaffolds."""
    text = SUBSTITUENTS[int(rng.integers(len(SUBSTITUENTS)))]
    for _ in range(depth):
        text = SCAFFOLDS[int(rng.integers(len(SCAFFOLDS)))].replace("{X}", text)
    return text


def _draw(rng: Rng, names, max_len: int, depth: int, min_len: int) -> str | None:
    name = names[int(rng.integers(len(names)))]
    r = substituent(rng, depth)
    s = substituent(rng, depth)
    text = canonical(instantiate(name, r, s), max_len=None)
    if not min_len <= len(text) <= max_len or not validate(text, max_len=max_len).valid:
        return None
    return text


def reaction_corpus(
    n: int,
    seed: int = 0,
    templates=GENERAL,
    exclude=(),
    max_len: int = DEFAULT_MAX_LEN,
    depth: int = 0,
    min_len: int = 0,
    max_attempts: int | None = None,
) -> list[str]:
    """*n* distinct valid canonical reactions drawn from *templates*.

    *depth* nests substituents inside scaffolds to make larger molecules;
    strings outside ``[min_len, max_len]`` characters are redrawn. Gives up
    with RuntimeError after *max_attempts* draws (default ``200 n + 1000``).
    """
    rng = Rng(seed, stream=11)
    banned = set(exclude)
    out: list[str] = []
    seen: set[str] = set()
    limit = 200 * n + 1000 if max_attempts is None else max_attempts
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > limit:
            raise RuntimeError(f"could only draw {len(out)} distinct reactions")
        text = _draw(rng, templates, max_len, depth, min_len)
        if text is None or text in seen or text in banned:
            continue
        seen.add(text)
        out.append(text)
    return out


def oxidation_corpus(
    n: int,
    seed: int = 0,
    o2_fraction: float = 0.8,
    exclude=(),
    max_len: int = DEFAULT_MAX_LEN,
) -> list[str]:
    """Small oxidation-heavy set: about *o2_fraction* of entries react with O=O."""
    n_o2 = round(n * o2_fraction)
    first = reaction_corpus(n_o2, seed, OXIDATION_O2, exclude, max_len)
    rest = reaction_corpus(n - n_o2, seed + 1, OXIDATION_OTHER, tuple(exclude) + tuple(first), max_len)
    rng = Rng(seed, stream=12)
    merged = first + rest
    return [merged[i] for i in rng.permutation(len(merged))]


SMOKE_TEMPLATES = (
    "epoxidation_h2o2", "esterification", "amidation", "ester_hydrolysis", "amination",
    "sulfide_oxidation_h2o2", "diels_alder", "dehydration", "suzuki", "dioxetane",
)


def long_corpus(seed: int = 0, min_len: int = 140, templates=SMOKE_TEMPLATES) -> list[str]:
    """One long reaction per template, nesting deeper until *min_len* is reached.

    Distinct templates make each string identifiable from its first few
    tokens, which keeps a memorization test about capacity rather than
    about resolving shared prefixes.
    """
    out = []
    for k, name in enumerate(templates):
        for depth in range(2, 8):
            try:
                out.extend(reaction_corpus(1, seed + k, (name,), exclude=out, depth=depth, min_len=min_len, max_attempts=60))
                break
            except RuntimeError:
                continue
        else:
            raise RuntimeError(f"template {name} never reaches {min_len} characters")
    return out
