"""Gesture label vocabulary for suturing.

Suturing decomposes into four fundamental surgemes plus a catch-all: the
needle is positioned at the entry point, pushed through the tissue, pulled
out, and handed back to the starting manipulator. Recordings are annotated
with a finer-grained raw vocabulary (G1..G15); two grouping strategies map
those raw labels onto the five classes. Strategy 1 keeps only the four
canonical raw gestures and sends everything else to Other; strategy 2 also
folds in raw gestures that are similar in motion.
"""

from __future__ import annotations

from enum import Enum


class GestureClass(Enum):
    """The five task-level classes with stable integer codes."""

    OTHER = 0
    POSITIONING = 1
    PUSH = 2
    PULL = 3
    HANDOFF = 4

    @staticmethod
    def from_code(code: int) -> "GestureClass":
        return _BY_CODE[code]


_BY_CODE = {c.value: c for c in GestureClass}

N_CLASSES = len(GestureClass)


class RawGestureLabel(Enum):
    """Raw annotation vocabulary; G12..G15 are carried for dataset compatibility."""

    G1 = 1
    G2 = 2
    G3 = 3
    G4 = 4
    G5 = 5
    G6 = 6
    G7 = 7
    G8 = 8
    G9 = 9
    G10 = 10
    G11 = 11
    G12 = 12
    G13 = 13
    G14 = 14
    G15 = 15

    @staticmethod
    def parse(text: str) -> "RawGestureLabel":
        return RawGestureLabel[text.strip()]


_G = RawGestureLabel

_STRATEGY_1 = {
    _G.G2: GestureClass.POSITIONING,
    _G.G3: GestureClass.PUSH,
    _G.G6: GestureClass.PULL,
    _G.G4: GestureClass.HANDOFF,
}

_STRATEGY_2 = {
    _G.G2: GestureClass.POSITIONING,
    _G.G5: GestureClass.POSITIONING,
    _G.G3: GestureClass.PUSH,
    _G.G6: GestureClass.PULL,
    _G.G10: GestureClass.PULL,
    _G.G4: GestureClass.HANDOFF,
    _G.G8: GestureClass.HANDOFF,
}


class LabelStrategy(Enum):
    """Total mapping from raw labels to the five classes.

    Raw labels outside the grouped sets (including G7 and G12..G15) map to
    Other under both strategies.
    """

    STRATEGY_1 = 1
    STRATEGY_2 = 2

    def apply(self, raw: RawGestureLabel) -> GestureClass:
        table = _STRATEGY_1 if self is LabelStrategy.STRATEGY_1 else _STRATEGY_2
        return table.get(raw, GestureClass.OTHER)
