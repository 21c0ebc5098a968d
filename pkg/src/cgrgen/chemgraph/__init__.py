"""Condensed-graph-of-reaction strings: parsing, validation, analysis."""

from .analysis import (
    AFTER,
    BEFORE,
    ReactionCenterKey,
    ValidityReport,
    contains_oo,
    implicit_hydrogens,
    molecules,
    mol_smiles,
    project,
    rc_hash,
    reaction_center,
    reaction_smiles,
    to_reaction_smiles,
    validate,
)
from .elements import ELEMENTS, Element, get_element
from .fingerprint import Fingerprint, fingerprint, tanimoto
from .graph import (
    Atom,
    Bond,
    BondOrder,
    CgrGraph,
    CgrSyntaxError,
    ChemError,
    EmptyCenter,
    LengthError,
    LengthMismatch,
    MolGraph,
    ValenceError,
)
from .parser import DEFAULT_MAX_LEN, parse_cgrsmiles, tokenize
from .writer import write_cgrsmiles


def canonical(text: str, max_len: int | None = DEFAULT_MAX_LEN) -> str:
    """Parse and re-serialize; equal outputs mean isomorphic graphs."""
    return write_cgrsmiles(parse_cgrsmiles(text, max_len=max_len))


__all__ = [
    "AFTER",
    "BEFORE",
    "DEFAULT_MAX_LEN",
    "ELEMENTS",
    "Atom",
    "Bond",
    "BondOrder",
    "CgrGraph",
    "CgrSyntaxError",
    "ChemError",
    "Element",
    "EmptyCenter",
    "Fingerprint",
    "LengthError",
    "LengthMismatch",
    "MolGraph",
    "ReactionCenterKey",
    "ValenceError",
    "ValidityReport",
    "canonical",
    "contains_oo",
    "fingerprint",
    "get_element",
    "implicit_hydrogens",
    "molecules",
    "mol_smiles",
    "parse_cgrsmiles",
    "project",
    "rc_hash",
    "reaction_center",
    "reaction_smiles",
    "tanimoto",
    "to_reaction_smiles",
    "tokenize",
    "validate",
    "write_cgrsmiles",
]
