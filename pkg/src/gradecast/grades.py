"""Letter-grade scale, letter/numeric conversion and tick arithmetic.

The scale has 11 letters but only 10 distinct grade points because A+ and A
both map to 4.0. Tick distances are counted on the 10-value distinct grid,
so A+ <-> A is zero ticks and a predicted 4.0 always canonicalizes to "A".
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidGrade, OffGrid, OutOfRange

LETTERS = ("A+", "A", "A-", "B+", "B", "B-", "C+", "C", "C-", "D", "F")
VALUES = (4.0, 4.0, 3.67, 3.33, 3.0, 2.67, 2.33, 2.0, 1.67, 1.0, 0.0)

# 10 distinct grade points, descending. Index in this grid defines the tick.
DISTINCT_GRID = (4.0, 3.67, 3.33, 3.0, 2.67, 2.33, 2.0, 1.67, 1.0, 0.0)

# Duplicated 4.0 canonicalizes to "A" (skip "A+" when building value -> letter).
_VALUE_TO_LETTER = {}
for _letter, _value in zip(LETTERS, VALUES):
    _VALUE_TO_LETTER.setdefault(_value, _letter if _letter != "A+" else "A")

_LETTER_TO_VALUE = dict(zip(LETTERS, VALUES))

# Grid values are short decimals; tolerance absorbs float representation noise.
GRID_TOL = 1e-9


def letter_to_numeric(letter: str) -> float:
    """Map a letter label to its grade-point value."""
    try:
        return _LETTER_TO_VALUE[letter]
    except KeyError:
        raise InvalidGrade(f"unknown letter grade {letter!r}") from None


def numeric_to_nearest_letter(g: float) -> str:
    """Return the letter whose value is nearest to g; midpoint ties go up.

    g must already be clipped to [0, 4]. The duplicated 4.0 returns "A".
    """
    if not (0.0 <= g <= 4.0):
        raise OutOfRange(f"grade {g!r} outside [0, 4]")
    best_value = DISTINCT_GRID[0]
    best_dist = abs(g - best_value)
    for value in DISTINCT_GRID[1:]:
        dist = abs(g - value)
        # Strictly-better only: on a midpoint tie the earlier (higher) value wins.
        if dist < best_dist - GRID_TOL:
            best_dist = dist
            best_value = value
    return _VALUE_TO_LETTER[best_value]


def snap_to_grid(g: float) -> float:
    """Clip to [0, 4] and move to the nearest distinct grid value."""
    g = min(4.0, max(0.0, g))
    return _LETTER_TO_VALUE[numeric_to_nearest_letter(g)]


def grid_index(g: float) -> int:
    """Index of an on-grid value in the descending distinct grid."""
    for i, value in enumerate(DISTINCT_GRID):
        if abs(g - value) <= GRID_TOL:
            return i
    raise OffGrid(f"value {g!r} is not on the letter-grade grid")


def tick_distance(a: float, b: float) -> int:
    """Number of grid steps between two on-grid grade values."""
    return abs(grid_index(a) - grid_index(b))


def clip_grade(g: float) -> float:
    """Clip a raw model output onto the grade scale [0, 4]."""
    return float(np.clip(g, 0.0, 4.0))
