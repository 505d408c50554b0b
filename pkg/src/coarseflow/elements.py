"""Element tables: allowed atom symbols, their max valences and one-hot channel order.

The table is dataset configuration, loaded from a small JSON document of the form

    {"order": ["C", "N", ...], "valence": {"C": 4, "N": 3, ...}}

where ``order`` fixes the one-hot channel index of each element.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import UnknownElement


@dataclass(frozen=True)
class ElementTable:
    """Ordered element symbols with per-element maximum valence."""

    symbols: tuple[str, ...]
    max_valence: dict[str, int]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if set(self.symbols) != set(self.max_valence):
            raise ValueError("order and valence entries disagree")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.symbols)})

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    def channel(self, symbol: str) -> int:
        """One-hot channel index of an element symbol."""
        try:
            return self._index[symbol]
        except KeyError:
            raise UnknownElement(f"element {symbol!r} not in table") from None

    def valence(self, symbol: str) -> int:
        try:
            return self.max_valence[symbol]
        except KeyError:
            raise UnknownElement(f"element {symbol!r} not in table") from None

    def to_json(self) -> dict:
        return {"order": list(self.symbols), "valence": dict(self.max_valence)}

    @classmethod
    def from_json(cls, doc: dict) -> "ElementTable":
        return cls(tuple(doc["order"]), {k: int(v) for k, v in doc["valence"].items()})


def load_element_table(path: str) -> ElementTable:
    with open(path, "r", encoding="utf-8") as fh:
        return ElementTable.from_json(json.load(fh))


def save_element_table(table: ElementTable, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(table.to_json(), fh, indent=1)
        fh.write("\n")


# Kekulized max valences for the two dataset presets. The 9-element table matches
# drug-like small molecule sets; the 7-element one matches polymer-like sets.
ZINC_TABLE = ElementTable(
    ("C", "N", "O", "F", "P", "S", "Cl", "Br", "I"),
    {"C": 4, "N": 3, "O": 2, "F": 1, "P": 5, "S": 6, "Cl": 1, "Br": 1, "I": 1},
)

POLYMER_TABLE = ElementTable(
    ("C", "N", "O", "F", "Si", "S", "P"),
    {"C": 4, "N": 3, "O": 2, "F": 1, "Si": 4, "S": 6, "P": 5},
)

BUILTIN_TABLES = {"zinc": ZINC_TABLE, "polymer": POLYMER_TABLE}
