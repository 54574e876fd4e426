"""Folding maps, restriction/unfolding operators, and cell symmetries.

The folding map onto a level-n cell S = [x_q, x_{q+1}] x K_a retracts the
whole space onto S: the interval coordinate is folded by the even-periodic
tent map of period 2/d_n (identity on the cell interval), and the fiber is
mapped by "drop n leading digits, prepend a".  Folding a level-N vertex
always lands on a level-N vertex because cell boundaries lie on the level-N
grid, so on a graph the map is a plain vertex-index array.

On top of the folds sit the restriction R_S f = f|_S, the unfolding
U_S g = g o phi_S, the averaging projection Theta = (1/m_n) sum_S U_S R_S,
and the enumeration of validated isometries between same-level cells (the
generators used by the invariant-form machinery).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.sparse as sp

from .core import Cell, canonicalize, cells_at_level, d_of, shift_and_contract
from .graph import ApproxGraph

__all__ = [
    "fold_index",
    "phi_point",
    "phi_map",
    "cell_vertices",
    "restrict",
    "unfold",
    "unfold_restrict",
    "theta",
    "theta_matrix",
    "CellIsometry",
    "cell_isometries",
]


def fold_index(i: int, q: int, g: int) -> int:
    """Tent-fold a level-N position index onto the cell gap [q*g, (q+1)*g].

    Even-periodic triangle wave with period 2g, identity on the target
    window; exact integer arithmetic.
    """
    u = (i - q * g) % (2 * g)
    return q * g + (u if u <= g else 2 * g - u)


def phi_point(G: ApproxGraph, cell: Cell, i: int, fiber: tuple[str, ...]):
    """Fold one raw level-N point into the cell; returns a canonical point."""
    g = G.d_N // d_of(G.seq, cell.level)
    i2 = fold_index(i, cell.interval, g)
    fiber2 = shift_and_contract(fiber, cell.word)
    return canonicalize(G.seq, G.N, i2, fiber2)


def phi_map(G: ApproxGraph, cell: Cell) -> np.ndarray:
    """Vertex-index array of the folding map onto `cell` (cached).

    Well-defined on identification classes: applying the fold to any
    representative of a class yields the same canonical image.
    """
    cache = G._caches.setdefault("phi_maps", {})
    if cell not in cache:
        out = np.empty(G.n_vertices, dtype=int)
        for vid, (i, fiber) in enumerate(G.verts):
            p = phi_point(G, cell, i, fiber)
            out[vid] = G.index[(p.position, p.fiber)]
        cache[cell] = out
    return cache[cell]


def cell_vertices(G: ApproxGraph, cell: Cell) -> np.ndarray:
    return G.cell_vertices(cell)


def restrict(G: ApproxGraph, cell: Cell, f: np.ndarray) -> np.ndarray:
    """R_S f: values of f on the cell's vertices (aligned with cell_vertices)."""
    return np.asarray(f)[G.cell_vertices(cell)]


def unfold(G: ApproxGraph, cell: Cell, g_cell: np.ndarray) -> np.ndarray:
    """U_S g = g o phi_S for g given on the cell's vertices."""
    cv = G.cell_vertices(cell)
    lookup = np.full(G.n_vertices, -1, dtype=int)
    lookup[cv] = np.arange(cv.size)
    pm = phi_map(G, cell)
    pos = lookup[pm]
    if (pos < 0).any():
        raise ValueError("folding map image escapes the cell vertex set")
    return np.asarray(g_cell)[pos]


def unfold_restrict(G: ApproxGraph, cell: Cell, f: np.ndarray) -> np.ndarray:
    """U_S R_S f = f o phi_S in one step."""
    return np.asarray(f)[phi_map(G, cell)]


def _level_maps(G: ApproxGraph, n: int) -> np.ndarray:
    cache = G._caches.setdefault("theta_maps", {})
    if n not in cache:
        cells = cells_at_level(G.seq, n)
        cache[n] = np.stack([phi_map(G, S) for S in cells])
    return cache[n]


def theta(G: ApproxGraph, n: int, f: np.ndarray) -> np.ndarray:
    """Averaging projection at level n: mean of f o phi_S over all cells.

    A self-adjoint projection on L^2(mu): Theta^2 = Theta, Theta 1 = 1,
    and |Theta f|_inf <= |f|_inf.
    """
    if n < 0 or n > G.N:
        raise ValueError(f"level n must lie in [0, {G.N}]")
    maps = _level_maps(G, n)
    return np.asarray(f)[maps].mean(axis=0)


def theta_matrix(G: ApproxGraph, n: int) -> sp.csr_matrix:
    """Theta as a sparse matrix acting on vertex functions."""
    maps = _level_maps(G, n)
    m, V = maps.shape
    rows = np.repeat(np.arange(V)[None, :], m, axis=0).ravel()
    cols = maps.ravel()
    vals = np.full(rows.size, 1.0 / m)
    return sp.coo_matrix((vals, (rows, cols)), shape=(V, V)).tocsr()


# ---------------------------------------------------------------------------
# isometries between same-level cells
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CellIsometry:
    """Validated isometry between two same-level cells.

    The interval part is a translation or a reflection between the two cell
    windows; the fiber part substitutes the source word prefix by the target
    one.  vertex_map sends source cell vertices (sorted order) to target
    vertex ids; tube_map sends source edge ids to target edge ids.  Validity
    means: well-defined on identification classes, bijective onto the target
    cell, and preserving ambient graph distances between all vertex pairs.
    """

    source: Cell
    target: Cell
    kind: str  # "translation" | "reflection"
    vertex_map: tuple
    tube_map: tuple


def _candidate_vertex_image(G, S1, S2, kind, i, fiber):
    n = S1.level
    g = G.d_N // d_of(G.seq, n)
    t = i - S1.interval * g
    i2 = S2.interval * g + (t if kind == "translation" else g - t)
    fiber2 = tuple(a2 + w[n:] for a2, w in zip(S2.word, fiber))
    p = canonicalize(G.seq, G.N, i2, fiber2)
    return G.index[(p.position, p.fiber)]


def _candidate_maps(G: ApproxGraph, S1: Cell, S2: Cell, kind: str):
    """Build the vertex and tube maps of one candidate isometry.

    Returns None (with a reason) if the map is not well-defined on
    identification classes, since images of the representatives must agree.
    """
    n = S1.level
    g = G.d_N // d_of(G.seq, n)
    src = G.cell_vertices(S1)
    images = np.empty(src.size, dtype=int)
    words = ["".join(b) for b in product("01", repeat=G.N - n)]
    tails = [tuple(ws) for ws in product(words, repeat=G.seq.k)]
    img_of = {}
    for i in range(S1.interval * g, (S1.interval + 1) * g + 1):
        for tail in tails:
            fiber = tuple(a + t for a, t in zip(S1.word, tail))
            vid = G.vertex_id(i, fiber)
            img = _candidate_vertex_image(G, S1, S2, kind, i, fiber)
            if vid in img_of and img_of[vid] != img:
                return None, f"not class-consistent at vertex {vid}"
            img_of[vid] = img
    for pos, vid in enumerate(src):
        images[pos] = img_of[vid]

    tubes1 = G.cell_tubes(S1)
    tube_index = {}
    tubes2 = G.cell_tubes(S2)
    for e in tubes2:
        tube_index[(int(G.tube_gap[e]), G.tube_word[e])] = int(e)
    tmap = np.empty(tubes1.size, dtype=int)
    for pos, e in enumerate(tubes1):
        gap = int(G.tube_gap[e])
        o = gap - S1.interval * g
        gap2 = S2.interval * g + (o if kind == "translation" else g - 1 - o)
        word2 = tuple(a2 + w[n:] for a2, w in zip(S2.word, G.tube_word[e]))
        tmap[pos] = tube_index[(gap2, word2)]
    return (images, tmap), None


def cell_isometries(G: ApproxGraph, S1: Cell, S2: Cell,
                    diagnostics: list | None = None) -> list[CellIsometry]:
    """Validated isometries from S1 onto S2 (same level required).

    Candidates are the translation-type and the reflection-type map combined
    with the word substitution S1.word -> S2.word; each is kept only if it is
    a bijection onto S2's vertices preserving all ambient graph distances.
    Failures are reported through `diagnostics` rather than raised.
    """
    if S1.level != S2.level:
        raise ValueError("cells must have the same level")
    src = G.cell_vertices(S1)
    tgt = G.cell_vertices(S2)
    out = []
    for kind in ("translation", "reflection"):
        built, reason = _candidate_maps(G, S1, S2, kind)
        if built is None:
            if diagnostics is not None:
                diagnostics.append((S1, S2, kind, reason))
            continue
        images, tmap = built
        if not np.array_equal(np.sort(images), tgt) or len(set(images)) != len(images):
            if diagnostics is not None:
                diagnostics.append((S1, S2, kind, "not a bijection onto target"))
            continue
        if G.n_vertices <= 4000:
            Dfull = G.distance_matrix()
            D = Dfull[np.ix_(src, src)]
            D2 = Dfull[np.ix_(images, images)]
        else:
            D = G.distances_from(src)[:, src]
            D2 = G.distances_from(images)[:, images]
        if not np.allclose(D, D2, atol=1e-12):
            if diagnostics is not None:
                diagnostics.append((S1, S2, kind, "ambient distances not preserved"))
            continue
        out.append(
            CellIsometry(
                source=S1,
                target=S2,
                kind=kind,
                vertex_map=tuple(int(x) for x in images),
                tube_map=tuple(int(x) for x in tmap),
            )
        )
    return out
