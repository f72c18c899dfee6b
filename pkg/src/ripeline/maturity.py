"""The five tomato maturity stages."""

from __future__ import annotations

import enum

__all__ = ["MaturityClass", "NUM_CLASSES"]


class MaturityClass(enum.IntEnum):
    """Ripening stages with stable ordinal ids 0-4.

    ``BRITTLE`` is the breaker stage.
    """

    GREEN = 0
    BRITTLE = 1
    PINK = 2
    PALE_RED = 3
    MATURE_RED = 4

    @property
    def label(self) -> str:
        return _NAMES[self]

    @classmethod
    def from_name(cls, name: str) -> "MaturityClass":
        """Parse ``"PaleRed"``, ``"pale_red"``, ``"pale red"`` and the like."""
        key = name.strip().lower().replace("_", "").replace("-", "").replace(" ", "")
        for member, label in _NAMES.items():
            if label.lower() == key:
                return member
        raise ValueError(f"unknown maturity class {name!r}")


_NAMES = {
    MaturityClass.GREEN: "Green",
    MaturityClass.BRITTLE: "Brittle",
    MaturityClass.PINK: "Pink",
    MaturityClass.PALE_RED: "PaleRed",
    MaturityClass.MATURE_RED: "MatureRed",
}

NUM_CLASSES = len(MaturityClass)
