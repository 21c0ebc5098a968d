"""Canonical CGRSmiles / SMILES writer."""

from __future__ import annotations

from .canon import canonical_ranks
from .elements import ORGANIC_SYMBOLS
from .graph import Atom, Bond, BondOrder, CgrGraph


def _charge_text(charge: int, zero: str = "") -> str:
    if charge == 0:
        return zero
    sign = "+" if charge > 0 else "-"
    return sign if abs(charge) == 1 else f"{sign}{abs(charge)}"


def atom_text(atom: Atom) -> str:
    symbol = atom.symbol.lower() if atom.aromatic else atom.symbol
    plain = (
        atom.explicit_h is None
        and atom.symbol in ORGANIC_SYMBOLS
        and atom.isotope is None
        and atom.map_index is None
        and atom.charge_before == 0
        and atom.charge_after == 0
    )
    if plain:
        return symbol
    parts = ["[", str(atom.isotope) if atom.isotope else "", symbol]
    h = atom.explicit_h or 0
    if h:
        parts.append("H" if h == 1 else f"H{h}")
    if atom.dynamic_charge:
        parts.append(f"{_charge_text(atom.charge_before, '0')}>{_charge_text(atom.charge_after, '0')}")
    else:
        parts.append(_charge_text(atom.charge_before))
    if atom.map_index is not None:
        parts.append(f":{atom.map_index}")
    parts.append("]")
    return "".join(parts)


def bond_text(bond: Bond, atoms: tuple[Atom, ...]) -> str:
    if bond.dynamic:
        return f"[{bond.before.symbol}>{bond.after.symbol}]"
    both_aromatic = atoms[bond.a].aromatic and atoms[bond.b].aromatic
    order = bond.before
    if order is BondOrder.SINGLE:
        return "-" if both_aromatic else ""
    if order is BondOrder.AROMATIC:
        return "" if both_aromatic else ":"
    return order.symbol


def atom_label(atom: Atom) -> tuple:
    return (
        atom.element.number,
        atom.aromatic,
        atom.isotope or 0,
        atom.charge_before,
        atom.charge_after,
        -1 if atom.explicit_h is None else atom.explicit_h,
        atom.map_index or 0,
    )


def bond_label(bond: Bond) -> tuple[int, int]:
    return bond.before.code, bond.after.code


def graph_ranks(g: CgrGraph) -> list[int]:
    adjacency = [[(j, bond_label(b)) for j, b in nbrs] for nbrs in g.neighbors]
    return canonical_ranks([atom_label(a) for a in g.atoms], adjacency)


def write_cgrsmiles(g: CgrGraph) -> str:
    """Serialize *g* canonically.

    Isomorphic graphs produce identical strings; components are emitted in
    lexicographic order and joined with ``.``.
    """
    ranks = graph_ranks(g)
    nbrs = [sorted(g.neighbors[i], key=lambda x: ranks[x[0]]) for i in range(len(g.atoms))]
    visited = [False] * len(g.atoms)
    parent_bond: dict[int, Bond | None] = {}
    children: dict[int, list[tuple[int, Bond]]] = {i: [] for i in range(len(g.atoms))}
    ring_open: dict[int, list[tuple[int, Bond]]] = {i: [] for i in range(len(g.atoms))}
    ring_close: dict[int, list[tuple[int, Bond]]] = {i: [] for i in range(len(g.atoms))}
    handled: set[int] = set()

    def dfs(u: int):
        visited[u] = True
        for v, bond in nbrs[u]:
            if id(bond) in handled:
                continue
            handled.add(id(bond))
            if visited[v]:
                # back edge to an ancestor: opened at v, closed at u
                ring_open[v].append((u, bond))
                ring_close[u].append((v, bond))
            else:
                children[u].append((v, bond))
                parent_bond[v] = bond
                dfs(v)

    starts = []
    for i in sorted(range(len(g.atoms)), key=lambda k: ranks[k]):
        if not visited[i]:
            parent_bond[i] = None
            starts.append(i)
            dfs(i)

    digits: dict[int, int] = {}  # id(bond) -> ring label

    def ring_label(k: int) -> str:
        return str(k) if k < 10 else f"%{k:02d}"

    def emit(u: int, out: list[str]):
        out.append(atom_text(g.atoms[u]))
        freed = []
        for v, bond in sorted(ring_close[u], key=lambda x: ranks[x[0]]):
            k = digits.pop(id(bond))
            out.append(ring_label(k))
            freed.append(k)
        in_use = set(digits.values()) | set(freed)
        for v, bond in sorted(ring_open[u], key=lambda x: ranks[x[0]]):
            k = 1
            while k in in_use:
                k += 1
            in_use.add(k)
            digits[id(bond)] = k
            out.append(bond_text(bond, g.atoms) + ring_label(k))
        kids = children[u]
        for idx, (v, bond) in enumerate(kids):
            last = idx == len(kids) - 1
            if not last:
                out.append("(")
            out.append(bond_text(bond, g.atoms))
            emit(v, out)
            if not last:
                out.append(")")

    parts = []
    for s in starts:
        out: list[str] = []
        emit(s, out)
        parts.append("".join(out))
    return ".".join(sorted(parts))
