"""CGRSmiles reader.

Grammar: SMILES organic-subset atoms, bracket atoms
``[isotope? symbol H-count? charge? (:map)?]`` where the charge may be
dynamic (``[N+>0]``), bonds ``- = # :``, dynamic bonds ``[x>y]`` with
x, y in ``. - = # :``, ring closures ``0-9`` and ``%nn``, branches, and
``.`` separating disconnected parts.
"""

from __future__ import annotations

import re
from typing import NamedTuple

from .elements import ELEMENTS
from .graph import Atom, Bond, BondOrder, CgrGraph, CgrSyntaxError, ChemError, LengthError

DEFAULT_MAX_LEN = 156

_TOKEN_RE = re.compile(
    r"(?P<bracket>\[[^\[\]]*\])"
    r"|(?P<organic>Cl|Br|[BCNOPSFI]|[bcnops])"
    r"|(?P<ring>%\d\d|\d)"
    r"|(?P<bond>[-=#:.])"
    r"|(?P<open>\()"
    r"|(?P<close>\))"
)
_DYN_BOND_RE = re.compile(r"([-=#:.])>([-=#:.])")
_CHARGE = r"(?:0|[+-][1-4]|\+{1,4}|-{1,4})"
_ATOM_RE = re.compile(
    r"(?P<iso>[1-9]\d*)?"
    r"(?P<sym>[A-Z][a-z]?|se|[bcnops])"
    r"(?P<h>H\d?)?"
    rf"(?P<chg>{_CHARGE}(?:>{_CHARGE})?)?"
    r"(?::(?P<map>[1-9]\d*))?"
)


class Token(NamedTuple):
    kind: str
    text: str
    pos: int


def tokenize(text: str) -> list[Token]:
    """Split a CGRSmiles string into grammar tokens (longest match)."""
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            reason = "unclosed bracket" if text[pos] == "[" else f"unknown token {text[pos]!r}"
            raise CgrSyntaxError(pos, reason)
        kind = m.lastgroup
        tok = m.group()
        if kind == "bracket":
            kind = "dynbond" if _DYN_BOND_RE.fullmatch(tok[1:-1]) else "atom"
        elif kind == "organic":
            kind = "atom"
        tokens.append(Token(kind, tok, pos))
        pos = m.end()
    return tokens


def parse_charge(text: str) -> int:
    if text == "0":
        return 0
    sign = 1 if text[0] == "+" else -1
    if len(text) > 1 and text[1].isdigit():
        return sign * int(text[1:])
    return sign * len(text)


def _parse_atom(tok: Token) -> Atom:
    text = tok.text
    if not text.startswith("["):
        symbol = text
        aromatic = symbol.islower()
        return Atom(ELEMENTS[symbol.capitalize()], aromatic=aromatic)
    m = _ATOM_RE.fullmatch(text[1:-1])
    if m is None:
        raise CgrSyntaxError(tok.pos, f"malformed bracket atom {text}")
    sym = m["sym"]
    aromatic = sym.islower()
    element = ELEMENTS.get(sym.capitalize())
    if element is None:
        raise CgrSyntaxError(tok.pos, f"unknown element {sym!r}")
    if m["h"]:
        h = int(m["h"][1:]) if len(m["h"]) > 1 else 1
    else:
        h = 0
    cb = ca = 0
    if m["chg"]:
        parts = m["chg"].split(">")
        cb = parse_charge(parts[0])
        ca = parse_charge(parts[-1])
    try:
        return Atom(
            element,
            aromatic=aromatic,
            explicit_h=h,
            charge_before=cb,
            charge_after=ca,
            isotope=int(m["iso"]) if m["iso"] else None,
            map_index=int(m["map"]) if m["map"] else None,
        )
    except ChemError as exc:
        raise CgrSyntaxError(tok.pos, str(exc)) from None


def _bond_spec(tok: Token) -> tuple[BondOrder, BondOrder]:
    if tok.kind == "dynbond":
        before, after = tok.text[1], tok.text[3]
        return BondOrder(before), BondOrder(after)
    order = BondOrder(tok.text)
    return order, order


def parse_cgrsmiles(text: str, max_len: int | None = DEFAULT_MAX_LEN) -> CgrGraph:
    """Parse a CGRSmiles string into a :class:`CgrGraph`.

    Raises ``CgrSyntaxError`` for grammar violations and ``LengthError``
    when *text* is longer than *max_len* (``None`` disables the cap).
    """
    if not text:
        raise CgrSyntaxError(0, "empty string")
    if max_len is not None and len(text) > max_len:
        raise LengthError(f"length {len(text)} exceeds cap {max_len}")

    atoms: list[Atom] = []
    bonds: dict[frozenset, Bond] = {}
    stack: list[int] = []
    rings: dict[str, tuple[int, tuple[BondOrder, BondOrder] | None, int]] = {}
    prev: int | None = None
    pending: tuple[BondOrder, BondOrder] | None = None
    pending_pos = 0
    dot = False

    def add_bond(a: int, b: int, spec, pos: int):
        if spec is None:
            order = BondOrder.AROMATIC if atoms[a].aromatic and atoms[b].aromatic else BondOrder.SINGLE
            spec = (order, order)
        if a == b:
            raise CgrSyntaxError(pos, "ring closure to self")
        key = frozenset((a, b))
        if key in bonds:
            raise CgrSyntaxError(pos, "duplicate bond")
        try:
            bonds[key] = Bond(a, b, *spec)
        except ChemError as exc:
            raise CgrSyntaxError(pos, str(exc)) from None

    for tok in tokenize(text):
        kind = tok.kind
        if kind == "atom":
            atom = _parse_atom(tok)
            idx = len(atoms)
            atoms.append(atom)
            if prev is not None and not dot:
                add_bond(prev, idx, pending, tok.pos)
            prev, pending, dot = idx, None, False
        elif kind in ("bond", "dynbond"):
            if prev is None:
                raise CgrSyntaxError(tok.pos, "bond without preceding atom")
            if pending is not None or dot:
                raise CgrSyntaxError(tok.pos, "consecutive bonds")
            if tok.text == ".":
                dot = True
            else:
                pending, pending_pos = _bond_spec(tok), tok.pos
        elif kind == "ring":
            if prev is None or dot:
                raise CgrSyntaxError(tok.pos, "ring closure without atom")
            label = tok.text
            if label in rings:
                other, spec, _ = rings.pop(label)
                if spec is not None and pending is not None and spec != pending:
                    raise CgrSyntaxError(tok.pos, "conflicting ring closure bonds")
                add_bond(other, prev, spec if spec is not None else pending, tok.pos)
            else:
                rings[label] = (prev, pending, tok.pos)
            pending = None
        elif kind == "open":
            if prev is None or pending is not None or dot:
                raise CgrSyntaxError(tok.pos, "misplaced branch")
            stack.append(prev)
        else:
            if not stack:
                raise CgrSyntaxError(tok.pos, "unmatched parenthesis")
            if pending is not None or dot:
                raise CgrSyntaxError(tok.pos, "dangling bond")
            prev = stack.pop()
    if stack:
        raise CgrSyntaxError(len(text), "unmatched parenthesis")
    if rings:
        _, _, pos = next(iter(rings.values()))
        raise CgrSyntaxError(pos, "unclosed ring")
    if pending is not None or dot:
        raise CgrSyntaxError(pending_pos if pending else len(text), "dangling bond")
    if not atoms:
        raise CgrSyntaxError(0, "no atoms")
    return CgrGraph(tuple(atoms), tuple(bonds.values()), source_text=text)
