"""Core data types for condensed graphs of reaction (CGR)."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

from .elements import Element


class ChemError(ValueError):
    """Base class for chemistry-side failures."""


class CgrSyntaxError(ChemError):
    def __init__(self, position: int, reason: str):
        super().__init__(f"{reason} at position {position}")
        self.position = position
        self.reason = reason


class LengthError(ChemError):
    pass


class ValenceError(ChemError):
    pass


class EmptyCenter(ChemError):
    pass


class LengthMismatch(ChemError):
    pass


class BondOrder(enum.Enum):
    NONE = "."
    SINGLE = "-"
    DOUBLE = "="
    TRIPLE = "#"
    AROMATIC = ":"

    @property
    def symbol(self) -> str:
        return self.value

    @property
    def contribution(self) -> float:
        return _CONTRIBUTION[self]

    @property
    def code(self) -> int:
        """Small integer used for sorting and hashing."""
        return _CODE[self]


_CONTRIBUTION = {
    BondOrder.NONE: 0.0,
    BondOrder.SINGLE: 1.0,
    BondOrder.DOUBLE: 2.0,
    BondOrder.TRIPLE: 3.0,
    BondOrder.AROMATIC: 1.5,
}
_CODE = {o: i for i, o in enumerate(BondOrder)}


@dataclass(frozen=True)
class Atom:
    element: Element
    aromatic: bool = False
    explicit_h: int | None = None
    charge_before: int = 0
    charge_after: int = 0
    isotope: int | None = None
    map_index: int | None = None

    def __post_init__(self):
        if self.aromatic and not self.element.aromatic_capable:
            raise ChemError(f"{self.element.symbol} cannot be aromatic")
        if abs(self.charge_before) > 4 or abs(self.charge_after) > 4:
            raise ChemError("formal charge out of range")
        if self.explicit_h is not None and self.explicit_h < 0:
            raise ChemError("negative hydrogen count")

    @property
    def symbol(self) -> str:
        return self.element.symbol

    @property
    def dynamic_charge(self) -> bool:
        return self.charge_before != self.charge_after

    @property
    def bracketed(self) -> bool:
        return self.explicit_h is not None


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    before: BondOrder
    after: BondOrder

    def __post_init__(self):
        if self.a == self.b:
            raise ChemError("bond to self")
        if self.before is BondOrder.NONE and self.after is BondOrder.NONE:
            raise ChemError("bond absent on both sides")

    @property
    def dynamic(self) -> bool:
        return self.before is not self.after

    def other(self, i: int) -> int:
        return self.b if i == self.a else self.a


@dataclass(frozen=True)
class CgrGraph:
    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]
    source_text: str = field(default="", compare=False)

    def __post_init__(self):
        seen = set()
        n = len(self.atoms)
        for bond in self.bonds:
            if not (0 <= bond.a < n and 0 <= bond.b < n):
                raise ChemError("bond index out of range")
            key = frozenset((bond.a, bond.b))
            if key in seen:
                raise ChemError(f"duplicate bond {bond.a}-{bond.b}")
            seen.add(key)

    @cached_property
    def neighbors(self) -> tuple[tuple[tuple[int, Bond], ...], ...]:
        adj: list[list[tuple[int, Bond]]] = [[] for _ in self.atoms]
        for bond in self.bonds:
            adj[bond.a].append((bond.b, bond))
            adj[bond.b].append((bond.a, bond))
        return tuple(tuple(x) for x in adj)

    @property
    def is_static(self) -> bool:
        return not any(b.dynamic for b in self.bonds) and not any(a.dynamic_charge for a in self.atoms)

    def __len__(self) -> int:
        return len(self.atoms)


@dataclass(frozen=True)
class MolGraph:
    """One side of a CGR; every atom has charge_before == charge_after."""

    atoms: tuple[Atom, ...]
    bonds: tuple[tuple[int, int, BondOrder], ...]

    @cached_property
    def neighbors(self) -> tuple[tuple[tuple[int, BondOrder], ...], ...]:
        adj: list[list[tuple[int, BondOrder]]] = [[] for _ in self.atoms]
        for a, b, order in self.bonds:
            adj[a].append((b, order))
            adj[b].append((a, order))
        return tuple(tuple(x) for x in adj)

    def charge(self, i: int) -> int:
        return self.atoms[i].charge_before

    def to_cgr(self) -> CgrGraph:
        """View the molecule as a static CGR (used for SMILES writing)."""
        return CgrGraph(self.atoms, tuple(Bond(a, b, o, o) for a, b, o in self.bonds))

    def __len__(self) -> int:
        return len(self.atoms)
