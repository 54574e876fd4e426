import math
from fractions import Fraction

import pytest

from laakso.core import (
    Cell,
    ConfigurationError,
    JSequence,
    all_fibers,
    canonicalize,
    cell_count,
    cells_at_level,
    contract,
    d_of,
    fiber_orbit,
    fresh_level,
    half_faces_of,
    hausdorff_dimension,
    shift,
    shift_and_contract,
    transpose,
    wormhole_levels,
)


# -- construction data -------------------------------------------------------

def test_jsequence_validation():
    with pytest.raises(ConfigurationError):
        JSequence(j=1)
    with pytest.raises(ConfigurationError):
        JSequence(j=2, mode="periodic", pattern=(2, 4))  # 4 not in {2, 3}
    with pytest.raises(ConfigurationError):
        JSequence(j=2, mode="explicit")
    with pytest.raises(ConfigurationError):
        JSequence(j=2, identification="bogus")


def test_d_of_examples():
    assert d_of(JSequence(j=2, k=1), 3) == 8
    assert d_of(JSequence(j=2, mode="periodic", pattern=(2, 3)), 2) == 6
    assert d_of(JSequence(j=3, k=2), 0) == 1


def test_explicit_length_guard():
    seq = JSequence(j=2, mode="explicit", values=(2, 3))
    assert d_of(seq, 2) == 6
    with pytest.raises(ConfigurationError):
        d_of(seq, 5)


def test_wormhole_levels_examples(S21):
    ws = wormhole_levels(S21, 2)
    assert ws.levels[1] == frozenset({Fraction(1, 2)})
    assert ws.fresh[1] == frozenset({Fraction(1, 2)})
    assert ws.levels[2] == frozenset({Fraction(1, 4), Fraction(1, 2), Fraction(3, 4)})
    assert ws.fresh[2] == frozenset({Fraction(1, 4), Fraction(3, 4)})


@pytest.mark.parametrize("jval,N", [(2, 5), (3, 4)])
def test_wormhole_counts_and_nesting(jval, N):
    seq = JSequence(j=jval, k=1)
    ws = wormhole_levels(seq, N)
    for n in range(1, N + 1):
        assert len(ws.levels[n]) == d_of(seq, n) - 1
        assert ws.levels[n - 1] <= ws.levels[n]
    fresh_all = [f for n in range(1, N + 1) for f in ws.fresh[n]]
    assert len(fresh_all) == len(set(fresh_all))  # pairwise disjoint


def test_fresh_level(S21):
    # positions i/8 at N=3: 4/8 = 1/2 is level 1, 2/8 = 1/4 level 2, odd level 3
    assert fresh_level(S21, 3, 4) == 1
    assert fresh_level(S21, 3, 2) == 2
    assert fresh_level(S21, 3, 3) == 3
    assert fresh_level(S21, 3, 0) is None
    assert fresh_level(S21, 3, 8) is None


# -- word operations ---------------------------------------------------------

def test_transpose_examples():
    assert transpose(("0110",), 1) == ("1110",)
    w = ("0110", "1010")
    assert transpose(transpose(w, 2), 2) == w  # involution
    # diagonal action flips every copy at once
    assert transpose(("01", "10"), 1) == ("11", "00")
    with pytest.raises(IndexError):
        transpose(("01",), 3)


def test_shift_contract():
    assert shift(contract(("100",), ("0",)), 1) == ("100",)
    assert contract(("1100",), ("01",)) == ("011100",)
    assert shift_and_contract(("1100",), ("01",)) == ("0100",)
    k = shift_and_contract
    w = ("110101",)
    a = ("01",)
    assert k(k(w, a), a) == k(w, a)  # idempotent
    with pytest.raises(IndexError):
        shift_and_contract(("10",), ("011",))


def test_fiber_orbit_sizes():
    diag = JSequence(j=2, k=2, identification="diagonal")
    per = JSequence(j=2, k=2, identification="per-coordinate")
    fiber = ("01", "10")
    assert len(fiber_orbit(diag, fiber, 1)) == 2
    assert len(fiber_orbit(per, fiber, 1)) == 4  # 2^k


# -- canonicalization --------------------------------------------------------

def test_canonicalize_examples(S21):
    # at 1/2 the level-1 flip identifies 1... with 0...
    p = canonicalize(S21, 1, 1, ("1",))
    assert p.fiber == ("0",)
    # endpoints untouched
    q = canonicalize(S21, 2, 0, ("11",))
    assert q.fiber == ("11",)


def test_canonicalize_idempotent_and_class_constant(S21):
    for i in range(0, 9):
        for fiber in all_fibers(S21, 3):
            p = canonicalize(S21, 3, i, fiber)
            again = canonicalize(S21, 3, p.position, p.fiber)
            assert p == again
            m = fresh_level(S21, 3, i)
            if m is not None:
                flipped = canonicalize(S21, 3, i, transpose(fiber, m))
                assert flipped == p


def test_class_sizes_by_mode():
    per = JSequence(j=2, k=3, identification="per-coordinate")
    diag = JSequence(j=2, k=3, identification="diagonal")
    fiber = ("10", "01", "11")
    assert len(fiber_orbit(diag, fiber, 2)) == 2
    assert len(fiber_orbit(per, fiber, 2)) == 2 ** 3


# -- cells and half-faces ----------------------------------------------------

def test_cell_counts(S21):
    assert len(cells_at_level(S21, 1)) == 4  # d_1 * 2^1
    assert cell_count(S21, 1) == 4
    assert len(cells_at_level(S21, 0)) == 1  # whole space
    salt = JSequence(j=2, mode="periodic", pattern=(2, 3))
    for n in range(4):
        assert len(cells_at_level(salt, n)) == d_of(salt, n) * 2 ** n


def test_cell_measures_sum_to_one(S21):
    for n in (1, 2, 3):
        cells = cells_at_level(S21, n)
        total = sum((1.0 / d_of(S21, n)) * 2.0 ** (-n * S21.k) for _ in cells)
        assert abs(total - 1.0) < 1e-12


def test_half_faces(S21):
    inner = Cell(level=2, interval=1, word=("01",))
    faces = half_faces_of(S21, inner)
    assert {f.side for f in faces} == {"lo", "hi"}
    assert {f.position for f in faces} == {Fraction(1, 4), Fraction(1, 2)}
    first = Cell(level=2, interval=0, word=("00",))
    faces = half_faces_of(S21, first)
    assert len(faces) == 1 and faces[0].side == "hi"  # 0 is not a wormhole


# -- dimension ---------------------------------------------------------------

def test_hausdorff_dimension_values(S21, S31):
    assert abs(hausdorff_dimension(S21) - 2.0) < 1e-12
    assert abs(hausdorff_dimension(S31) - (1 + math.log(2) / math.log(3))) < 1e-12
    assert hausdorff_dimension(JSequence(j=2, k=0)) == 1.0
    # constant-j formula and the limit evaluation agree
    for jval, k in ((2, 2), (3, 3)):
        seq = JSequence(j=jval, k=k)
        assert abs(hausdorff_dimension(seq) - (1 + k * math.log(2) / math.log(jval))) < 1e-12


def test_hausdorff_dimension_periodic():
    seq = JSequence(j=2, k=1, mode="periodic", pattern=(2, 3))
    expect = 1 + math.log(2) / ((math.log(2) + math.log(3)) / 2)
    assert abs(hausdorff_dimension(seq) - expect) < 1e-12


def test_hausdorff_dimension_explicit_warns():
    seq = JSequence(j=2, k=1, mode="explicit", values=(2, 3, 2))
    with pytest.warns(UserWarning):
        val = hausdorff_dimension(seq)
    assert 1.0 < val < 2.5
