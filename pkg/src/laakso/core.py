"""Combinatorics of the Laakso construction.

A Laakso space is the quotient of I x K^k (unit interval times a product of
binary Cantor sets) under "wormhole" identifications: at each point of
L_n \\ L_{n-1} (the fresh level-n wormhole locations i/d_n) two fiber points
whose n'th digit differs are glued.  Everything here works at a finite
resolution N: Cantor points are binary words of length N, interval points are
multiples of 1/d_N, and the identifications up to level N are realized by a
canonicalization map.

This module owns the construction data (the subdivision sequence j_i and the
fiber count k), the wormhole schedule, word operations (digit transposition,
shift, contraction), point canonicalization, cells, half-faces, and the
Hausdorff dimension formula.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import product

__all__ = [
    "JSequence",
    "WormholeSchedule",
    "LaaksoPointN",
    "Cell",
    "HalfFace",
    "ConfigurationError",
    "d_of",
    "wormhole_levels",
    "fresh_level",
    "transpose",
    "shift",
    "contract",
    "shift_and_contract",
    "fiber_orbit",
    "canonicalize",
    "all_fibers",
    "cells_at_level",
    "cell_count",
    "half_faces_of",
    "hausdorff_dimension",
]

IDENTIFICATION_MODES = ("diagonal", "per-coordinate")


class ConfigurationError(ValueError):
    """Invalid construction data (bad j sequence, level out of range, ...)."""


@dataclass(frozen=True)
class JSequence:
    """Construction data of a Laakso space.

    j is the base subdivision factor; every subdivision count j_i must lie in
    {j, j+1}.  mode selects how the sequence is generated:

      constant        j_i = j for all i
      periodic        j_i cycles through `pattern`
      explicit        j_i read from `values` (finite; levels beyond its
                      length are a configuration error)

    k is the number of Cantor-set fiber coordinates (k = 0 degenerates to the
    unit interval).  `identification` picks how the digit transposition acts
    on K^k at a wormhole: "diagonal" flips the digit in every coordinate at
    once (classes of size 2), "per-coordinate" flips any subset of
    coordinates (classes of size 2^k).  Both quotients coincide for k = 1.
    """

    j: int
    k: int = 1
    mode: str = "constant"
    pattern: tuple[int, ...] = ()
    values: tuple[int, ...] = ()
    identification: str = "diagonal"

    def __post_init__(self):
        if self.j < 2:
            raise ConfigurationError(f"base j must be >= 2, got {self.j}")
        if self.k < 0:
            raise ConfigurationError(f"fiber count k must be >= 0, got {self.k}")
        if self.mode not in ("constant", "periodic", "explicit"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.identification not in IDENTIFICATION_MODES:
            raise ConfigurationError(
                f"identification must be one of {IDENTIFICATION_MODES}, "
                f"got {self.identification!r}"
            )
        if self.mode == "periodic" and not self.pattern:
            raise ConfigurationError("periodic mode requires a nonempty pattern")
        if self.mode == "explicit" and not self.values:
            raise ConfigurationError("explicit mode requires a values list")
        allowed = {self.j, self.j + 1}
        entries = self.pattern if self.mode == "periodic" else self.values
        for ji in entries:
            if ji not in allowed:
                raise ConfigurationError(
                    f"sequence entry {ji} outside {{j, j+1}} = {sorted(allowed)}"
                )

    def term(self, i: int) -> int:
        """Subdivision count j_i at step i >= 1."""
        if i < 1:
            raise ConfigurationError(f"sequence index must be >= 1, got {i}")
        if self.mode == "constant":
            return self.j
        if self.mode == "periodic":
            return self.pattern[(i - 1) % len(self.pattern)]
        if i > len(self.values):
            raise ConfigurationError(
                f"explicit j sequence has {len(self.values)} entries, "
                f"level {i} requested"
            )
        return self.values[i - 1]


@lru_cache(maxsize=None)
def d_of(seq: JSequence, N: int) -> int:
    """Product d_N of the first N subdivision counts; d_0 = 1."""
    if N < 0:
        raise ConfigurationError(f"level must be >= 0, got {N}")
    if N == 0:
        return 1
    return d_of(seq, N - 1) * seq.term(N)


@dataclass(frozen=True)
class WormholeSchedule:
    """Wormhole locations per level up to N.

    levels[n] is L_n = {i/d_n : 1 <= i <= d_n - 1} as exact fractions, and
    fresh[n] = L_n \\ L_{n-1} holds the locations introduced at level n.
    The nesting L_{n-1} subset L_n follows from d_{n-1} | d_n.
    """

    N: int
    levels: tuple[frozenset, ...]
    fresh: tuple[frozenset, ...]


def wormhole_levels(seq: JSequence, N: int) -> WormholeSchedule:
    """Enumerate L_n and the fresh sets for all n <= N."""
    levels = [frozenset()]
    fresh = [frozenset()]
    for n in range(1, N + 1):
        dn = d_of(seq, n)
        ln = frozenset(Fraction(i, dn) for i in range(1, dn))
        levels.append(ln)
        fresh.append(ln - levels[n - 1])
    return WormholeSchedule(N=N, levels=tuple(levels), fresh=tuple(fresh))


def fresh_level(seq: JSequence, N: int, i: int) -> int | None:
    """Level at which the point i/d_N becomes a wormhole, or None for 0 and 1.

    i/d_N lies in L_n exactly when (d_N / d_n) divides i, so the fresh level
    is the smallest such n.
    """
    dN = d_of(seq, N)
    if i <= 0 or i >= dN:
        return None
    for n in range(1, N + 1):
        if i % (dN // d_of(seq, n)) == 0:
            return n
    raise AssertionError("unreachable: every interior grid point lies in L_N")


# ---------------------------------------------------------------------------
# word operations on fibers (tuples of k binary words of equal depth)
# ---------------------------------------------------------------------------

def _flip(word: str, n: int) -> str:
    return word[: n - 1] + ("1" if word[n - 1] == "0" else "0") + word[n:]


def transpose(fiber: tuple[str, ...], n: int, coords=None) -> tuple[str, ...]:
    """Transpose the n'th digit (1-based) of the fiber words.

    With coords=None this is the simultaneous flip in every coordinate (the
    diagonal action); passing an iterable of coordinate indices flips only
    those copies of K, the building block of the per-coordinate action.
    """
    if fiber and not 1 <= n <= len(fiber[0]):
        raise IndexError(f"digit index {n} out of range for depth {len(fiber[0])}")
    which = range(len(fiber)) if coords is None else set(coords)
    return tuple(_flip(w, n) if c in which else w for c, w in enumerate(fiber))


def shift(fiber: tuple[str, ...], n: int = 1) -> tuple[str, ...]:
    """Shift map sigma^n: drop the n leading digits of every coordinate."""
    if fiber and n > len(fiber[0]):
        raise IndexError(f"cannot shift {n} digits at depth {len(fiber[0])}")
    return tuple(w[n:] for w in fiber)


def contract(fiber: tuple[str, ...], a: tuple[str, ...]) -> tuple[str, ...]:
    """Contraction psi_a: prepend the word a_c to coordinate c."""
    if len(a) != len(fiber):
        raise ValueError(f"word has {len(a)} coordinates, fiber has {len(fiber)}")
    return tuple(ac + w for ac, w in zip(a, fiber))


def shift_and_contract(fiber: tuple[str, ...], a: tuple[str, ...]) -> tuple[str, ...]:
    """psi_a o sigma^n with n = |a|: drop n leading digits, prepend a.

    This is the fiber part of the folding map onto a cell with word a; depth
    is preserved.  Applying it twice with the same a is idempotent.
    """
    n = len(a[0]) if a else 0
    if fiber and n > len(fiber[0]):
        raise IndexError(f"word length {n} exceeds fiber depth {len(fiber[0])}")
    return contract(shift(fiber, n), a)


def fiber_orbit(seq: JSequence, fiber: tuple[str, ...], n: int) -> tuple:
    """Identification class of a fiber at a fresh level-n wormhole.

    Diagonal mode gives {w, T_n w}; per-coordinate mode gives all subset
    flips of digit n, a class of size 2^k.
    """
    if not fiber:
        return (fiber,)
    if seq.identification == "diagonal":
        return tuple(sorted({fiber, transpose(fiber, n)}))
    k = len(fiber)
    orbit = {
        transpose(fiber, n, coords=[c for c in range(k) if mask & (1 << c)])
        for mask in range(1 << k)
    }
    return tuple(sorted(orbit))


@dataclass(frozen=True)
class LaaksoPointN:
    """Canonical representative of a level-N point.

    position is the interval index i (the point sits at i/d_N) and fiber
    holds k binary words of depth N.  Instances built through `canonicalize`
    carry the lexicographically minimal fiber of their identification class,
    so equality of canonical points is plain field equality.
    """

    level: int
    position: int
    fiber: tuple[str, ...]
    canonical: bool = field(default=False, compare=False)

    def x(self, seq: JSequence) -> Fraction:
        """Interval coordinate i/d_N as an exact fraction."""
        return Fraction(self.position, d_of(seq, self.level))


def canonicalize(seq: JSequence, N: int, i: int, fiber: tuple[str, ...]) -> LaaksoPointN:
    """Wormhole map: send a raw point (i/d_N, fiber) to its canonical form.

    If i/d_N is a fresh level-n wormhole the fiber is replaced by the minimal
    element of its class under the level-n transposition action; endpoints
    and non-wormhole data pass through unchanged.  Idempotent.
    """
    dN = d_of(seq, N)
    if not 0 <= i <= dN:
        raise ValueError(f"position index {i} outside [0, {dN}]")
    if fiber and any(len(w) != N for w in fiber):
        raise ValueError(f"fiber words must have depth {N}")
    if len(fiber) != seq.k:
        raise ValueError(f"expected {seq.k} fiber words, got {len(fiber)}")
    n = fresh_level(seq, N, i)
    if n is not None:
        fiber = fiber_orbit(seq, fiber, n)[0]
    return LaaksoPointN(level=N, position=i, fiber=fiber, canonical=True)


def all_fibers(seq: JSequence, N: int) -> list[tuple[str, ...]]:
    """All 2^(Nk) depth-N fibers, in lexicographic order."""
    words = ["".join(bits) for bits in product("01", repeat=N)]
    return [tuple(ws) for ws in product(words, repeat=seq.k)]


# ---------------------------------------------------------------------------
# cells and half-faces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    """Level-n cell: the image of [q/d_n, (q+1)/d_n] x K_word in L."""

    level: int
    interval: int  # q, with 0 <= q < d_n
    word: tuple[str, ...]  # k binary words of length n

    def x_lo(self, seq: JSequence) -> Fraction:
        return Fraction(self.interval, d_of(seq, self.level))

    def x_hi(self, seq: JSequence) -> Fraction:
        return Fraction(self.interval + 1, d_of(seq, self.level))


def cell_count(seq: JSequence, n: int) -> int:
    """Number of level-n cells, d_n * 2^(nk)."""
    return d_of(seq, n) * (1 << (n * seq.k))


def cells_at_level(seq: JSequence, n: int) -> list[Cell]:
    """All level-n cells in deterministic (interval, word) order."""
    if n < 0:
        raise ConfigurationError(f"cell level must be >= 0, got {n}")
    dn = d_of(seq, n)
    words = ["".join(bits) for bits in product("01", repeat=n)]
    fibers = [tuple(ws) for ws in product(words, repeat=seq.k)]
    return [Cell(level=n, interval=q, word=w) for q in range(dn) for w in fibers]


@dataclass(frozen=True)
class HalfFace:
    """Wormhole-side face of a cell: the glued fiber points over one endpoint.

    Identified by (wormhole location, cell word, side); at level n the
    location is interval/d_n or (interval+1)/d_n of the owning cell.  Once an
    approximation level N >= n is fixed this is a finite vertex set (see
    ApproxGraph.halfface_vertices).
    """

    level: int
    position: Fraction  # wormhole location in (0, 1)
    word: tuple[str, ...]
    side: str  # "lo" | "hi" relative to the owning cell


def half_faces_of(seq: JSequence, cell: Cell) -> list[HalfFace]:
    """The wormhole-side faces of a cell (endpoints 0 and 1 carry none)."""
    dn = d_of(seq, cell.level)
    faces = []
    for side, idx in (("lo", cell.interval), ("hi", cell.interval + 1)):
        if 0 < idx < dn:
            faces.append(
                HalfFace(
                    level=cell.level,
                    position=Fraction(idx, dn),
                    word=cell.word,
                    side=side,
                )
            )
    return faces


# ---------------------------------------------------------------------------
# dimension
# ---------------------------------------------------------------------------

def hausdorff_dimension(seq: JSequence) -> float:
    """Hausdorff dimension Q = lim_l log(2^(lk) d_l) / log(d_l).

    For constant sequences this is 1 + k log2/log j exactly; periodic
    sequences use the geometric mean of the pattern.  Explicit finite
    sequences return the finite-l value with a warning since the limit need
    not exist.
    """
    if seq.mode == "constant":
        return 1.0 + seq.k * math.log(2.0) / math.log(seq.j)
    if seq.mode == "periodic":
        mean_log = sum(math.log(ji) for ji in seq.pattern) / len(seq.pattern)
        return 1.0 + seq.k * math.log(2.0) / mean_log
    l = len(seq.values)
    dl = d_of(seq, l)
    warnings.warn(
        "explicit j sequence: dimension limit may not exist, "
        f"returning the finite-l value at l={l}",
        stacklevel=2,
    )
    return math.log((1 << (l * seq.k)) * dl) / math.log(dl)
