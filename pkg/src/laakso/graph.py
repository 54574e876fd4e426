"""Level-N metric-graph approximation of a Laakso space.

Vertices are the canonical points (i/d_N, fiber) for 0 <= i <= d_N; each of
the d_N * 2^(Nk) "tubes" [i, i+1]/d_N x {fiber word} contributes one edge of
length 1/d_N and measure (1/d_N) * 2^(-Nk).  Parallel edges are kept: for
j_i = 3 two adjacent columns can both be fresh wormholes of the same level,
in which case a pair of tubes joins the same two canonical vertices.

The vertex measure is the half-sum of incident edge measures (total mass 1,
matching Lebesgue x Bernoulli on I x K^k), and the default conductance
d_N * 2^(-Nk) per edge makes the discrete Dirichlet energy of the interval
coordinate function exactly 1 at every level.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import shortest_path

from .core import (
    Cell,
    HalfFace,
    JSequence,
    all_fibers,
    canonicalize,
    d_of,
    fiber_orbit,
    fresh_level,
)


def _tails(k: int, depth: int):
    """All k-tuples of binary words of the given depth."""
    words = ["".join(bits) for bits in product("01", repeat=depth)]
    return [tuple(ws) for ws in product(words, repeat=k)]

__all__ = [
    "ApproxGraph",
    "QuadraticForm",
    "build_graph",
    "default_form",
    "geodesic_distance",
    "ball",
    "measure_of",
    "energy",
    "mgug_of",
    "laplacian_apply",
    "conductance_laplacian",
    "dirichlet_solve",
    "effective_resistance",
    "mean_exit_times",
    "export_csv",
]

DEFAULT_VERTEX_CAP = 500_000
_DENSE_SOLVE_LIMIT = 40_000  # unknowns above this use preconditioned CG


class GraphSizeError(MemoryError):
    """Vertex count above the configured cap."""


@dataclass
class ApproxGraph:
    """Immutable level-N graph with measure, distances and fold caches."""

    seq: JSequence
    N: int
    d_N: int
    verts: list  # canonical (position, fiber) pairs, sorted
    index: dict  # (position, fiber) -> vertex id
    positions: np.ndarray  # (V,) interval index per vertex
    edges_u: np.ndarray  # (E,)
    edges_v: np.ndarray  # (E,)
    tube_gap: np.ndarray  # (E,) interval gap index of the tube
    tube_word: list  # (E,) fiber word of the tube
    mu: np.ndarray  # (V,) vertex measure
    edge_length: float
    edge_measure: float
    _caches: dict = field(default_factory=dict, repr=False)

    # -- basic counts ------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.verts)

    @property
    def n_edges(self) -> int:
        return len(self.edges_u)

    def vertex_id(self, i: int, fiber: tuple[str, ...]) -> int:
        """Vertex id of the canonical class of (i/d_N, fiber)."""
        p = canonicalize(self.seq, self.N, i, fiber)
        return self.index[(p.position, p.fiber)]

    def point(self, v: int):
        i, fiber = self.verts[v]
        return canonicalize(self.seq, self.N, i, fiber)

    def x_coord(self, v=None) -> np.ndarray:
        """Interval coordinate of every vertex (or of one vertex)."""
        if v is None:
            return self.positions / self.d_N
        return self.positions[v] / self.d_N

    # -- adjacency ---------------------------------------------------------
    def adjacency(self) -> sp.csr_matrix:
        """Unweighted adjacency (parallel edges collapse; fine for distances)."""
        if "adj" not in self._caches:
            V = self.n_vertices
            ones = np.ones(self.n_edges)
            a = sp.coo_matrix(
                (np.r_[ones, ones], (np.r_[self.edges_u, self.edges_v],
                                     np.r_[self.edges_v, self.edges_u])),
                shape=(V, V),
            ).tocsr()
            a.data[:] = 1.0
            self._caches["adj"] = a
        return self._caches["adj"]

    def distances_from(self, sources) -> np.ndarray:
        """Geodesic distances from source vertices, one row per source."""
        sources = np.atleast_1d(np.asarray(sources, dtype=int))
        rows = self._caches.setdefault("dist_rows", {})
        missing = [int(s) for s in sources if int(s) not in rows]
        if missing:
            hops = shortest_path(self.adjacency(), method="D", unweighted=True,
                                 indices=missing)
            hops = np.atleast_2d(hops)
            for s, row in zip(missing, hops):
                rows[s] = row * self.edge_length
        return np.stack([rows[int(s)] for s in sources])

    def distance_matrix(self) -> np.ndarray:
        """Full all-pairs distance matrix (desk-scale graphs only)."""
        if "dist_matrix" not in self._caches:
            if self.n_vertices > 4000:
                raise GraphSizeError(
                    f"all-pairs distances on {self.n_vertices} vertices; "
                    "use distances_from for large graphs"
                )
            hops = shortest_path(self.adjacency(), method="D", unweighted=True)
            self._caches["dist_matrix"] = hops * self.edge_length
        return self._caches["dist_matrix"]

    def diameter(self) -> float:
        return float(self.distance_matrix().max())

    # -- cells -------------------------------------------------------------
    def cell_vertices(self, cell: Cell) -> np.ndarray:
        """Sorted vertex ids whose identification class meets the cell."""
        key = ("cellverts", cell)
        if key not in self._caches:
            g = self.d_N // d_of(self.seq, cell.level)
            tails = _tails(self.seq.k, self.N - cell.level)
            ids = set()
            for i in range(cell.interval * g, (cell.interval + 1) * g + 1):
                for tail in tails:
                    fiber = tuple(a + t for a, t in zip(cell.word, tail))
                    ids.add(self.vertex_id(i, fiber))
            self._caches[key] = np.array(sorted(ids), dtype=int)
        return self._caches[key]

    def cell_tubes(self, cell: Cell) -> np.ndarray:
        """Edge ids of the tubes lying inside the cell (each edge lies in
        exactly one cell per level, so cells partition the edge set)."""
        key = ("celltubes", cell)
        if key not in self._caches:
            g = self.d_N // d_of(self.seq, cell.level)
            lo, hi = cell.interval * g, (cell.interval + 1) * g
            sel = (self.tube_gap >= lo) & (self.tube_gap < hi)
            if cell.word:
                n = cell.level
                pre = np.array(
                    [all(w[:n] == a for w, a in zip(word, cell.word))
                     for word in self.tube_word]
                )
                sel &= pre
            self._caches[key] = np.nonzero(sel)[0]
        return self._caches[key]

    def halfface_vertices(self, hf: HalfFace) -> np.ndarray:
        """Vertex ids of a half-face at this approximation level."""
        i = int(hf.position * self.d_N)
        if hf.position * self.d_N != i:
            raise ValueError(f"half-face position {hf.position} not resolved at N={self.N}")
        ids = set()
        for tail in _tails(self.seq.k, self.N - hf.level):
            fiber = tuple(a + t for a, t in zip(hf.word, tail))
            ids.add(self.vertex_id(i, fiber))
        return np.array(sorted(ids), dtype=int)


def build_graph(seq: JSequence, N: int, vertex_cap: int = DEFAULT_VERTEX_CAP) -> ApproxGraph:
    """Build the level-N approximation graph.

    Vertices are canonicalized (i, fiber) pairs in sorted order; edges join
    consecutive positions with the same fiber word.  Refuses to build when
    the raw enumeration would exceed vertex_cap.
    """
    if N < 1:
        raise ValueError(f"approximation level must be >= 1, got {N}")
    dN = d_of(seq, N)
    raw = (dN + 1) * (1 << (N * seq.k))
    if raw > vertex_cap:
        raise GraphSizeError(
            f"level {N} would enumerate {raw} raw vertices "
            f"(cap {vertex_cap}); raise vertex_cap to force"
        )
    fibers = all_fibers(seq, N)
    seen = set()
    for i in range(dN + 1):
        n = fresh_level(seq, N, i)
        for fiber in fibers:
            canon = fiber if n is None else fiber_orbit(seq, fiber, n)[0]
            seen.add((i, canon))
    verts = sorted(seen)
    index = {vk: vid for vid, vk in enumerate(verts)}
    positions = np.array([i for i, _ in verts], dtype=int)

    E = dN * len(fibers)
    edges_u = np.empty(E, dtype=int)
    edges_v = np.empty(E, dtype=int)
    tube_gap = np.empty(E, dtype=int)
    tube_word = []
    e = 0
    for gap in range(dN):
        nu = fresh_level(seq, N, gap)
        nv = fresh_level(seq, N, gap + 1)
        for fiber in fibers:
            cu = fiber if nu is None else fiber_orbit(seq, fiber, nu)[0]
            cv = fiber if nv is None else fiber_orbit(seq, fiber, nv)[0]
            edges_u[e] = index[(gap, cu)]
            edges_v[e] = index[(gap + 1, cv)]
            tube_gap[e] = gap
            tube_word.append(fiber)
            e += 1

    edge_measure = (1.0 / dN) * 2.0 ** (-N * seq.k)
    mu = np.zeros(len(verts))
    np.add.at(mu, edges_u, edge_measure / 2.0)
    np.add.at(mu, edges_v, edge_measure / 2.0)

    return ApproxGraph(
        seq=seq,
        N=N,
        d_N=dN,
        verts=verts,
        index=index,
        positions=positions,
        edges_u=edges_u,
        edges_v=edges_v,
        tube_gap=tube_gap,
        tube_word=tube_word,
        mu=mu,
        edge_length=1.0 / dN,
        edge_measure=edge_measure,
    )


# ---------------------------------------------------------------------------
# quadratic forms, energy, Laplacian
# ---------------------------------------------------------------------------

@dataclass
class QuadraticForm:
    """Dirichlet form given by nonnegative edge conductances on G_N."""

    graph: ApproxGraph
    c: np.ndarray  # (E,) conductances

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        if self.c.shape != (self.graph.n_edges,):
            raise ValueError("conductance vector length must equal edge count")
        if (self.c < 0).any():
            raise ValueError("conductances must be nonnegative")

    def scaled(self, theta: float) -> "QuadraticForm":
        return QuadraticForm(self.graph, theta * self.c)


def default_form(G: ApproxGraph) -> QuadraticForm:
    """Canonical conductances d_N * 2^(-Nk): the discrete energy then equals
    the upper-gradient Dirichlet integral on piecewise-linear functions."""
    c0 = G.d_N * 2.0 ** (-G.N * G.seq.k)
    return QuadraticForm(G, np.full(G.n_edges, c0))


def energy(form: QuadraticForm, f: np.ndarray) -> float:
    """Dirichlet energy sum_e c_e (f(u) - f(v))^2."""
    G = form.graph
    d = f[G.edges_u] - f[G.edges_v]
    return float(np.dot(form.c, d * d))


def mgug_of(G: ApproxGraph, f: np.ndarray) -> np.ndarray:
    """Discrete minimal upper gradient |df/dx| per edge: |f(u)-f(v)| * d_N.

    With the default form, sum_e p_e^2 * edge_measure reproduces energy(f)
    exactly, the graph version of the upper-gradient energy identity.
    """
    return np.abs(f[G.edges_u] - f[G.edges_v]) * G.d_N


def conductance_laplacian(form: QuadraticForm) -> sp.csr_matrix:
    """Weighted Laplacian L_c with quadratic form f^T L_c f = energy(f)."""
    G = form.graph
    cache = G._caches.setdefault("lap_cache", {})
    tkey = form.c.tobytes()
    if tkey not in cache:
        V = G.n_vertices
        u, v, c = G.edges_u, G.edges_v, form.c
        rows = np.r_[u, v, u, v]
        cols = np.r_[v, u, u, v]
        vals = np.r_[-c, -c, c, c]
        cache[tkey] = sp.coo_matrix((vals, (rows, cols)), shape=(V, V)).tocsr()
    return cache[tkey]


def laplacian_apply(form: QuadraticForm, f: np.ndarray) -> np.ndarray:
    """Generator action (Lf)(v) = (1/mu(v)) sum_u c_uv (f(u) - f(v)).

    Self-adjoint in the mu inner product; energy(f) = -<Lf, f>_mu.
    """
    return -(conductance_laplacian(form) @ f) / form.graph.mu


# ---------------------------------------------------------------------------
# distances, balls
# ---------------------------------------------------------------------------

def geodesic_distance(G: ApproxGraph, p: int, q: int) -> float:
    """Shortest-path distance between two vertices (edge length 1/d_N)."""
    return float(G.distances_from([p])[0][q])


def ball(G: ApproxGraph, x: int, r: float) -> np.ndarray:
    """Vertex ids of the closed metric ball B(x, r)."""
    if r < 0:
        raise ValueError("radius must be >= 0")
    d = G.distances_from([x])[0]
    return np.nonzero(d <= r + 1e-12)[0]


def measure_of(G: ApproxGraph, vertex_set) -> float:
    return float(G.mu[np.asarray(vertex_set, dtype=int)].sum())


# ---------------------------------------------------------------------------
# Dirichlet problems, exit times, effective resistance
# ---------------------------------------------------------------------------

def dirichlet_solve(form: QuadraticForm, boundary: np.ndarray,
                    values: np.ndarray, rhs: np.ndarray | None = None) -> np.ndarray:
    """Solve L_c f = rhs on the complement of `boundary` with f fixed there.

    rhs defaults to zero (discrete-harmonic extension).  Direct sparse solve
    below a size threshold, Jacobi-preconditioned CG above it (relative
    residual 1e-10).  The harmonic solution obeys the maximum principle.
    """
    G = form.graph
    V = G.n_vertices
    boundary = np.asarray(boundary, dtype=int)
    values = np.asarray(values, dtype=float)
    if boundary.size == 0:
        raise ValueError("boundary set must be nonempty")
    f = np.zeros(V)
    f[boundary] = values
    interior = np.setdiff1d(np.arange(V), boundary)
    if interior.size == 0:
        return f
    L = conductance_laplacian(form).tocsr()
    A = L[interior][:, interior]
    b = -L[interior][:, boundary] @ values
    if rhs is not None:
        b = b + np.asarray(rhs, dtype=float)[interior]
    if interior.size <= _DENSE_SOLVE_LIMIT:
        f[interior] = spla.spsolve(A.tocsc(), b)
    else:
        M = sp.diags(1.0 / A.diagonal())
        sol, info = spla.cg(A, b, rtol=1e-10, M=M, maxiter=20_000)
        if info != 0:
            raise RuntimeError(f"CG failed to converge (info={info})")
        f[interior] = sol
    return f


def effective_resistance(form: QuadraticForm, A, B) -> float:
    """Effective resistance between disjoint vertex sets.

    1/R is the minimal energy over potentials with f=0 on A and f=1 on B,
    attained by the discrete-harmonic solution.
    """
    A = np.asarray(A, dtype=int)
    B = np.asarray(B, dtype=int)
    if A.size == 0 or B.size == 0:
        raise ValueError("effective resistance needs nonempty sets")
    if np.intersect1d(A, B).size:
        raise ValueError("sets must be disjoint")
    boundary = np.r_[A, B]
    values = np.r_[np.zeros(A.size), np.ones(B.size)]
    f = dirichlet_solve(form, boundary, values)
    e = energy(form, f)
    if e <= 0:
        raise RuntimeError("degenerate Dirichlet problem: zero energy")
    return 1.0 / e


def mean_exit_times(form: QuadraticForm, domain: np.ndarray) -> np.ndarray:
    """Exact expected exit times E^v[tau] of the CTMC from a vertex set.

    Solves L u = -1 on the domain with u = 0 outside; used as the
    closed-form oracle for the Monte Carlo exit-time estimator.
    """
    G = form.graph
    domain = np.asarray(domain, dtype=int)
    outside = np.setdiff1d(np.arange(G.n_vertices), domain)
    if outside.size == 0:
        raise ValueError("domain must be a proper subset")
    u = dirichlet_solve(form, outside, np.zeros(outside.size), rhs=G.mu)
    return u


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def export_csv(G: ApproxGraph, form: QuadraticForm, out_dir, header_lines=()):
    """Dump vertex and edge tables as CSV for external inspection."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    vpath = os.path.join(out_dir, "vertices.csv")
    epath = os.path.join(out_dir, "edges.csv")
    head = "".join(f"# {line}\n" for line in header_lines)
    with open(vpath, "w") as fh:
        fh.write(head)
        fh.write("vertex,position_index,x,fiber,measure\n")
        for vid, (i, fiber) in enumerate(G.verts):
            fh.write(f"{vid},{i},{i / G.d_N:.12g},{'|'.join(fiber)},{G.mu[vid]:.12g}\n")
    with open(epath, "w") as fh:
        fh.write(head)
        fh.write("edge,u,v,gap,word,length,conductance,measure\n")
        for e in range(G.n_edges):
            fh.write(
                f"{e},{G.edges_u[e]},{G.edges_v[e]},{G.tube_gap[e]},"
                f"{'|'.join(G.tube_word[e])},{G.edge_length:.12g},"
                f"{form.c[e]:.12g},{G.edge_measure:.12g}\n"
            )
    return vpath, epath
