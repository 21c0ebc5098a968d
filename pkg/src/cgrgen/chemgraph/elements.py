"""Periodic table subset with valence rules used by the validity filter."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Element:
    symbol: str
    number: int
    group: int
    allowed_valences: tuple[int, ...]
    aromatic_capable: bool = False
    organic_subset: bool = False

    def valences(self, charge: int = 0) -> tuple[int, ...]:
        """Allowed valences adjusted for formal charge.

        Electron-rich main-group atoms gain a bond per positive charge
        (N+ behaves like C), atoms of groups 13/14 and alkali/alkaline-earth
        metals lose one. Transition metals keep their table regardless of charge.
        """
        if charge == 0 or self.group in range(3, 13):
            return self.allowed_valences
        if self.group >= 15:
            shifted = [v + charge for v in self.allowed_valences]
        elif self.group == 14:
            shifted = [v - abs(charge) for v in self.allowed_valences]
        else:
            shifted = [v - charge for v in self.allowed_valences]
        kept = tuple(v for v in shifted if v >= 0)
        return kept or (0,)


_TABLE = [
    Element("H", 1, 1, (1,)),
    Element("Li", 3, 1, (1,)),
    Element("B", 5, 13, (3,), True, True),
    Element("C", 6, 14, (4,), True, True),
    Element("N", 7, 15, (3, 5), True, True),
    Element("O", 8, 16, (2,), True, True),
    Element("F", 9, 17, (1,), False, True),
    Element("Na", 11, 1, (1,)),
    Element("Mg", 12, 2, (2,)),
    Element("Si", 14, 14, (4,)),
    Element("P", 15, 15, (3, 5), True, True),
    Element("S", 16, 16, (2, 4, 6), True, True),
    Element("Cl", 17, 17, (1,), False, True),
    Element("K", 19, 1, (1,)),
    Element("Cu", 29, 11, (1, 2)),
    Element("Zn", 30, 12, (2,)),
    Element("Se", 34, 16, (2, 4, 6), True),
    Element("Br", 35, 17, (1,), False, True),
    Element("Pd", 46, 10, (0, 2, 4)),
    Element("I", 53, 17, (1,), False, True),
    Element("Pt", 78, 10, (0, 2, 4, 6)),
    Element("Au", 79, 11, (1, 3)),
]

ELEMENTS: dict[str, Element] = {e.symbol: e for e in _TABLE}

# symbols usable without brackets, longest first for greedy matching
ORGANIC_SYMBOLS = ("Cl", "Br", "B", "C", "N", "O", "P", "S", "F", "I")
AROMATIC_ORGANIC = ("b", "c", "n", "o", "p", "s")
# lowercase forms accepted inside brackets
AROMATIC_BRACKET = ("se", "b", "c", "n", "o", "p", "s")


def get_element(symbol: str) -> Element:
    try:
        return ELEMENTS[symbol]
    except KeyError:
        raise KeyError(f"unknown element {symbol!r}") from None
