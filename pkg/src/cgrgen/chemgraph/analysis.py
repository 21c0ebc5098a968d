"""Projections, valence/aromaticity checks and reaction-center analysis."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .canon import canonical_ranks, fnv1a64
from .graph import (
    Atom,
    Bond,
    BondOrder,
    CgrGraph,
    ChemError,
    EmptyCenter,
    MolGraph,
    ValenceError,
)
from .parser import DEFAULT_MAX_LEN, parse_cgrsmiles
from .writer import write_cgrsmiles

BEFORE = "before"
AFTER = "after"


def project(g: CgrGraph, side: str) -> MolGraph:
    """Reactant (``before``) or product (``after``) side of a CGR."""
    if side not in (BEFORE, AFTER):
        raise ValueError(f"side must be 'before' or 'after', got {side!r}")
    atoms = []
    for atom in g.atoms:
        charge = atom.charge_before if side == BEFORE else atom.charge_after
        atoms.append(replace(atom, charge_before=charge, charge_after=charge))
    bonds = []
    for bond in g.bonds:
        order = bond.before if side == BEFORE else bond.after
        if order is not BondOrder.NONE:
            bonds.append((bond.a, bond.b, order))
    return MolGraph(tuple(atoms), tuple(bonds))


def _bond_sums(m: MolGraph, i: int) -> tuple[int, int]:
    """Bond-order sum with aromatic=1.5 (rounded down) and with aromatic=1."""
    total = 0.0
    as_single = 0
    for _, order in m.neighbors[i]:
        total += order.contribution
        as_single += 1 if order is BondOrder.AROMATIC else int(order.contribution)
    return math.floor(total), as_single


def implicit_hydrogens(m: MolGraph, i: int) -> int:
    """Hydrogen count of atom *i*.

    Bracket atoms report their written H count. Organic-subset atoms take
    the smallest allowed valence that accommodates the bond-order sum.
    Aromatic atoms that cannot take the rounded 1.5-per-bond sum at their
    lowest valence are treated as lone-pair donors (furan O, thiophene S,
    N-substituted pyrrole N), counting each aromatic bond once.
    """
    atom = m.atoms[i]
    if atom.explicit_h is not None:
        return atom.explicit_h
    valences = atom.element.valences(m.charge(i))
    total, as_single = _bond_sums(m, i)
    if atom.aromatic:
        lowest = valences[0]
        if total <= lowest:
            return lowest - total
        if as_single <= lowest:
            return lowest - as_single
        raise ValenceError(f"aromatic {atom.symbol} (atom {i}) exceeds valence {lowest}")
    for v in valences:
        if v >= total:
            return v - total
    raise ValenceError(f"{atom.symbol} (atom {i}) bond order {total} exceeds valences {valences}")


def valence_errors(m: MolGraph) -> list[str]:
    errors = []
    for i, atom in enumerate(m.atoms):
        if atom.explicit_h is None:
            try:
                implicit_hydrogens(m, i)
            except ValenceError as exc:
                errors.append(str(exc))
            continue
        total, as_single = _bond_sums(m, i)
        load = (as_single if atom.aromatic else total) + atom.explicit_h
        limit = max(atom.element.valences(m.charge(i)))
        if load > limit:
            errors.append(f"[{atom.symbol}] (atom {i}) load {load} exceeds valence {limit}")
    return errors


def ring_edges(n: int, edges: Sequence[tuple[int, int]]) -> set[int]:
    """Indices of edges lying on at least one cycle (non-bridges)."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for k, (a, b) in enumerate(edges):
        adj[a].append((b, k))
        adj[b].append((a, k))
    disc = [-1] * n
    low = [0] * n
    bridges: set[int] = set()
    timer = 0
    for root in range(n):
        if disc[root] != -1:
            continue
        disc[root] = low[root] = timer
        timer += 1
        stack = [(root, -1, iter(adj[root]))]
        while stack:
            u, via, it = stack[-1]
            advanced = False
            for v, k in it:
                if k == via:
                    continue
                if disc[v] == -1:
                    disc[v] = low[v] = timer
                    timer += 1
                    stack.append((v, k, iter(adj[v])))
                    advanced = True
                    break
                low[u] = min(low[u], disc[v])
            if not advanced:
                stack.pop()
                if stack:
                    p = stack[-1][0]
                    low[p] = min(low[p], low[u])
                    if low[u] > disc[p]:
                        bridges.add(via)
    return set(range(len(edges))) - bridges


def aromatic_errors(g: CgrGraph) -> list[str]:
    """Every aromatic atom must sit on a cycle of aromatic atoms joined by
    bonds that are aromatic on at least one side."""
    arom = [i for i, a in enumerate(g.atoms) if a.aromatic]
    if not arom:
        return []
    edges = [
        (b.a, b.b)
        for b in g.bonds
        if g.atoms[b.a].aromatic
        and g.atoms[b.b].aromatic
        and BondOrder.AROMATIC in (b.before, b.after)
    ]
    on_ring = set()
    for k in ring_edges(len(g.atoms), edges):
        on_ring.update(edges[k])
    return [f"aromatic atom {i} ({g.atoms[i].symbol}) not in an aromatic ring" for i in arom if i not in on_ring]


@dataclass(frozen=True)
class ValidityReport:
    parse_ok: bool
    valence_ok_before: bool = False
    valence_ok_after: bool = False
    aromatic_ok: bool = False
    h_balance: int = 0
    errors: tuple[str, ...] = field(default=())

    @property
    def valid(self) -> bool:
        return self.parse_ok and self.valence_ok_before and self.valence_ok_after and self.aromatic_ok


def total_hydrogens(m: MolGraph) -> int:
    return sum(implicit_hydrogens(m, i) for i in range(len(m.atoms)))


def validate(g: CgrGraph | str, max_len: int | None = DEFAULT_MAX_LEN) -> ValidityReport:
    """Check a CGR (or raw string); never raises, failures land in the report."""
    if isinstance(g, str):
        try:
            g = parse_cgrsmiles(g, max_len=max_len)
        except ChemError as exc:
            return ValidityReport(parse_ok=False, errors=(str(exc),))
    before, after = project(g, BEFORE), project(g, AFTER)
    err_before = valence_errors(before)
    err_after = valence_errors(after)
    err_arom = aromatic_errors(g)
    balance = 0
    if not err_before and not err_after:
        balance = total_hydrogens(after) - total_hydrogens(before)
    errors = [f"before: {e}" for e in err_before] + [f"after: {e}" for e in err_after] + err_arom
    return ValidityReport(
        parse_ok=True,
        valence_ok_before=not err_before,
        valence_ok_after=not err_after,
        aromatic_ok=not err_arom,
        h_balance=balance,
        errors=tuple(errors),
    )


def components(m: MolGraph) -> list[list[int]]:
    seen = [False] * len(m.atoms)
    comps = []
    for start in range(len(m.atoms)):
        if seen[start]:
            continue
        seen[start] = True
        comp, queue = [], deque([start])
        while queue:
            u = queue.popleft()
            comp.append(u)
            for v, _ in m.neighbors[u]:
                if not seen[v]:
                    seen[v] = True
                    queue.append(v)
        comps.append(sorted(comp))
    return comps


def submolecule(m: MolGraph, indices: Iterable[int]) -> MolGraph:
    indices = sorted(indices)
    remap = {old: new for new, old in enumerate(indices)}
    atoms = tuple(m.atoms[i] for i in indices)
    bonds = tuple((remap[a], remap[b], o) for a, b, o in m.bonds if a in remap and b in remap)
    return MolGraph(atoms, bonds)


def molecules(m: MolGraph) -> list[MolGraph]:
    return [submolecule(m, comp) for comp in components(m)]


def mol_smiles(m: MolGraph, keep_mapping: bool = False) -> str:
    """Canonical SMILES of a molecule; map numbers dropped unless requested."""
    atoms = []
    for i, atom in enumerate(m.atoms):
        if atom.map_index is not None and not keep_mapping:
            atom = replace(atom, map_index=None)
        elif atom.map_index is not None and atom.explicit_h is None:
            atom = replace(atom, explicit_h=implicit_hydrogens(m, i))
        atoms.append(atom)
    return write_cgrsmiles(MolGraph(tuple(atoms), m.bonds).to_cgr())


def to_reaction_smiles(g: CgrGraph, keep_mapping: bool = False) -> tuple[list[str], list[str]]:
    """Reactant and product SMILES lists (sorted) from the two projections.

    Raises ``ValenceError`` if either side fails the valence check.
    """
    result = []
    for side in (BEFORE, AFTER):
        m = project(g, side)
        errors = valence_errors(m)
        if errors:
            raise ValenceError(f"{side}: {errors[0]}")
        result.append(sorted(mol_smiles(mol, keep_mapping) for mol in molecules(m)))
    return result[0], result[1]


def reaction_smiles(g: CgrGraph, keep_mapping: bool = False) -> str:
    reactants, products = to_reaction_smiles(g, keep_mapping)
    return ".".join(reactants) + ">>" + ".".join(products)


def induced_subgraph(g: CgrGraph, indices: Iterable[int]) -> CgrGraph:
    indices = sorted(set(indices))
    remap = {old: new for new, old in enumerate(indices)}
    atoms = tuple(g.atoms[i] for i in indices)
    bonds = tuple(
        Bond(remap[b.a], remap[b.b], b.before, b.after) for b in g.bonds if b.a in remap and b.b in remap
    )
    return CgrGraph(atoms, bonds)


def reaction_center(g: CgrGraph, radius: int = 1) -> CgrGraph:
    """Atoms touched by a dynamic bond or charge, grown by *radius* hops."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    core = {i for i, a in enumerate(g.atoms) if a.dynamic_charge}
    for bond in g.bonds:
        if bond.dynamic:
            core.update((bond.a, bond.b))
    if not core:
        raise EmptyCenter("no dynamic bonds or charges")
    selected = set(core)
    frontier = set(core)
    for _ in range(radius):
        nxt = {j for i in frontier for j, _ in g.neighbors[i]} - selected
        selected |= nxt
        frontier = nxt
    return induced_subgraph(g, selected)


@dataclass(frozen=True)
class ReactionCenterKey:
    canonical_form: str
    key: int


def _rc_label(g: CgrGraph, i: int) -> tuple:
    atom = g.atoms[i]
    orders = tuple(sorted((b.before.code, b.after.code) for _, b in g.neighbors[i]))
    return (atom.symbol, atom.aromatic, atom.charge_before, atom.charge_after, orders)


def rc_hash(sub: CgrGraph) -> ReactionCenterKey:
    """Canonical string and 64-bit FNV-1a key of a reaction-center subgraph."""
    if not sub.atoms:
        raise EmptyCenter("empty subgraph")
    labels = [_rc_label(sub, i) for i in range(len(sub.atoms))]
    adjacency = [[(j, (b.before.code, b.after.code)) for j, b in nbrs] for nbrs in sub.neighbors]
    ranks = canonical_ranks(labels, adjacency)
    order = sorted(range(len(sub.atoms)), key=lambda i: ranks[i])
    atom_part = ";".join(
        f"{'' if not a.aromatic else '~'}{a.symbol}{a.charge_before:+d}{a.charge_after:+d}"
        for a in (sub.atoms[i] for i in order)
    )
    edges = sorted(
        (min(ranks[b.a], ranks[b.b]), max(ranks[b.a], ranks[b.b]), b.before.symbol + b.after.symbol)
        for b in sub.bonds
    )
    bond_part = ";".join(f"{a}-{b}:{s}" for a, b, s in edges)
    form = f"{atom_part}|{bond_part}"
    return ReactionCenterKey(form, fnv1a64(form.encode("utf-8")))


def contains_oo(reactants: Iterable[MolGraph]) -> bool:
    """True if any reactant has two oxygens joined by a double bond."""
    for m in reactants:
        for a, b, order in m.bonds:
            if order is BondOrder.DOUBLE and m.atoms[a].symbol == "O" and m.atoms[b].symbol == "O":
                return True
    return False
