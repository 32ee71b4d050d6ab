"""Grade scale, letter conversion and tick arithmetic."""

import numpy as np
import pytest

from gradecast import grades
from gradecast.errors import InvalidGrade, OffGrid, OutOfRange


def test_scale_shape():
    assert len(grades.LETTERS) == 11
    assert len(grades.VALUES) == 11
    assert len(grades.DISTINCT_GRID) == 10
    # non-increasing values, exactly one duplicate (the 4.0 pair)
    assert all(a >= b for a, b in zip(grades.VALUES, grades.VALUES[1:]))
    assert sorted(grades.DISTINCT_GRID, reverse=True) == list(grades.DISTINCT_GRID)
    assert len(set(grades.DISTINCT_GRID)) == 10


@pytest.mark.parametrize("letter,value", [
    ("B", 3.0), ("F", 0.0), ("A+", 4.0), ("A", 4.0), ("C-", 1.67), ("D", 1.0),
])
def test_letter_to_numeric(letter, value):
    assert grades.letter_to_numeric(letter) == value


def test_letter_to_numeric_unknown():
    with pytest.raises(InvalidGrade, match="E"):
        grades.letter_to_numeric("E")


def test_nearest_letter_exact_points():
    assert grades.numeric_to_nearest_letter(3.0) == "B"
    assert grades.numeric_to_nearest_letter(4.0) == "A"  # canonicalized
    assert grades.numeric_to_nearest_letter(0.0) == "F"


def test_nearest_letter_midpoint_goes_up():
    # 3.5 sits exactly between 3.33 and 3.67
    assert grades.numeric_to_nearest_letter(3.5) == "A-"
    # 0.5 between F (0) and D (1)
    assert grades.numeric_to_nearest_letter(0.5) == "D"


def test_nearest_letter_out_of_range():
    with pytest.raises(OutOfRange):
        grades.numeric_to_nearest_letter(4.2)
    with pytest.raises(OutOfRange):
        grades.numeric_to_nearest_letter(-0.1)


def test_nearest_letter_matches_brute_force():
    rng = np.random.default_rng(7)
    for g in rng.uniform(0.0, 4.0, size=1000):
        got = grades.letter_to_numeric(grades.numeric_to_nearest_letter(g))
        best = min(abs(g - v) for v in grades.DISTINCT_GRID)
        assert abs(g - got) <= best + 1e-12


def test_roundtrip_letters():
    for letter in grades.LETTERS:
        value = grades.letter_to_numeric(letter)
        back = grades.numeric_to_nearest_letter(value)
        assert back == ("A" if letter == "A+" else letter)


def test_tick_distance_table_rows():
    # The canonical examples: B vs {B}=0, {B-,B,B+}<=1, {C+,B-,B,B+,A-}<=2.
    b = grades.letter_to_numeric("B")
    within = {x: grades.tick_distance(b, grades.letter_to_numeric(x))
              for x in ("A+", "A", "A-", "B+", "B", "B-", "C+", "C", "C-", "D", "F")}
    assert within["B"] == 0
    assert {k for k, v in within.items() if v <= 1} == {"B-", "B", "B+"}
    assert {k for k, v in within.items() if v <= 2} == {"C+", "B-", "B", "B+", "A-"}


def test_tick_distance_symmetric_and_zero_iff_equal():
    for a in grades.DISTINCT_GRID:
        for b in grades.DISTINCT_GRID:
            d1 = grades.tick_distance(a, b)
            d2 = grades.tick_distance(b, a)
            assert d1 == d2
            assert (d1 == 0) == (a == b)


def test_tick_distance_off_grid():
    with pytest.raises(OffGrid):
        grades.tick_distance(3.1, 3.0)


def test_aplus_and_a_are_zero_ticks():
    assert grades.tick_distance(grades.letter_to_numeric("A+"),
                                grades.letter_to_numeric("A")) == 0


def test_snap_to_grid():
    assert grades.snap_to_grid(2.7) == 2.67
    assert grades.snap_to_grid(5.0) == 4.0
    assert grades.snap_to_grid(-1.0) == 0.0
