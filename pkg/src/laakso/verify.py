"""Quantitative checks: volume doubling, Harnack constants, resistance
scaling, the invariant-form space, the Hilbert projective metric, and the
commutation of the averaging projection with the generator.

Each check returns a CheckReport whose verdict is a pure function of the
measured constants and the configured thresholds.  Thresholds live in the
packaged defaults file (thresholds.json) and can be overridden per run; the
constants themselves depend on the space, so the defaults encode desk-scale
expectations for the standard configurations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla

from .core import Cell, JSequence, cells_at_level, d_of, hausdorff_dimension
from .folding import cell_isometries, theta_matrix
from .graph import (
    ApproxGraph,
    QuadraticForm,
    ball,
    conductance_laplacian,
    default_form,
    effective_resistance,
    measure_of,
)
from .spectral import TimeScaling

__all__ = [
    "CheckReport",
    "InvariantFormSpace",
    "load_thresholds",
    "check_vd",
    "check_ehi",
    "check_res",
    "invariant_form_dimension",
    "invariant_form",
    "hilbert_distance",
    "theta_commutation",
    "box_counting_dimension",
    "net_covering_dimension",
    "stability_factor",
    "anchor_vertices",
    "run_all",
]


def load_thresholds(path=None) -> dict:
    """Packaged default thresholds, optionally merged with a JSON override."""
    with resources.files("laakso").joinpath("thresholds.json").open() as fh:
        out = json.load(fh)
    if path is not None:
        with open(path) as fh:
            out.update(json.load(fh))
    return out


@dataclass
class CheckReport:
    name: str
    config: dict
    constants: dict
    passed: bool
    thresholds: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    notes: str = ""

    def to_dict(self):
        return {
            "name": self.name,
            "config": self.config,
            "constants": _jsonable(self.constants),
            "passed": bool(self.passed),
            "thresholds": _jsonable(self.thresholds),
            "artifacts": list(self.artifacts),
            "notes": self.notes,
        }


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, (np.floating, np.integer)):
            v = v.item()
        elif isinstance(v, np.ndarray):
            v = v.tolist()
        out[k] = v
    return out


def stability_factor(values) -> float:
    """max/min of a family of positive measured constants."""
    v = np.asarray(list(values), dtype=float)
    if (v <= 0).any():
        raise ValueError("stability factor needs positive values")
    return float(v.max() / v.min())


def anchor_vertices(G: ApproxGraph, anchors=None) -> list[int]:
    """Deterministic sample of centers tied to geometric locations, so the
    same anchors resolve to comparable points at every level."""
    if anchors is None:
        anchors = ((0.3, "0"), (0.45, "1"), (0.55, "1"), (0.7, "0"))
    out = []
    for frac, pref in anchors:
        i = round(frac * G.d_N)
        fiber = tuple((pref + "0" * G.N)[: G.N] for _ in range(G.seq.k))
        out.append(G.vertex_id(i, fiber))
    return out


# ---------------------------------------------------------------------------
# volume doubling
# ---------------------------------------------------------------------------

def check_vd(G: ApproxGraph, radii=None, centers=None, thresholds=None) -> CheckReport:
    """Max ratio mu(B(x, 2R)) / mu(B(x, R)) over a sampled grid."""
    th = thresholds or load_thresholds()
    if radii is None:
        radii = [r for r in (1 / 16, 1 / 8, 3 / 16, 1 / 4)
                 if r >= 2.0 / G.d_N - 1e-12]
    centers = centers if centers is not None else anchor_vertices(G)
    ratios = []
    for x in centers:
        d = G.distances_from([x])[0]
        for r in radii:
            inner = G.mu[d <= r + 1e-12].sum()
            outer = G.mu[d <= 2 * r + 1e-12].sum()
            ratios.append(outer / inner)
    c1 = float(np.max(ratios))
    return CheckReport(
        name="volume_doubling",
        config={"N": G.N, "radii": list(radii), "n_centers": len(centers)},
        constants={"max_ratio": c1, "min_ratio": float(np.min(ratios))},
        passed=c1 <= th["vd_max_ratio"],
        thresholds={"vd_max_ratio": th["vd_max_ratio"]},
    )


# ---------------------------------------------------------------------------
# elliptic Harnack inequality
# ---------------------------------------------------------------------------

def _ball_interior_boundary(G, form, B):
    in_b = np.zeros(G.n_vertices, dtype=bool)
    in_b[B] = True
    has_out = np.zeros(G.n_vertices, dtype=bool)
    eu, ev = G.edges_u, G.edges_v
    has_out[eu[in_b[eu] & ~in_b[ev]]] = True
    has_out[ev[in_b[ev] & ~in_b[eu]]] = True
    interior = B[~has_out[B]]
    boundary = B[has_out[B]]
    return interior, boundary


def harmonic_measure_ratio(G, form, z, r, rng=None, n_random=0):
    """Worst sup/inf ratio on B(z, r/2) over harmonic-measure spike data.

    Spikes dominate every nonnegative boundary datum by the mediant
    inequality, so this is the measured Harnack constant of the ball.
    Optionally cross-checks n_random random nonnegative data against the
    spike bound.
    """
    d = G.distances_from([z])[0]
    B = np.nonzero(d <= r + 1e-12)[0]
    inner = np.nonzero(d <= r / 2 + 1e-12)[0]
    interior, boundary = _ball_interior_boundary(G, form, B)
    if interior.size == 0 or boundary.size == 0 or inner.size < 2:
        return None
    if not np.isin(inner, interior).all():
        return None  # inner half-ball touches the boundary at this resolution
    Lc = conductance_laplacian(form).tocsr()
    A = Lc[interior][:, interior].tocsc()
    rhs = -Lc[interior][:, boundary].toarray()
    U = spla.spsolve(A, rhs)
    U = np.atleast_2d(U)
    if U.shape[0] != interior.size:
        U = U.T
    pos = np.searchsorted(interior, inner)
    vals = U[pos]  # (inner, spikes) harmonic measures on the half-ball
    sup = vals.max(axis=0)
    inf = vals.min(axis=0)
    keep = inf > 1e-300
    ratio = float((sup[keep] / inf[keep]).max())
    if rng is not None and n_random:
        worst = 0.0
        for _ in range(n_random):
            g = rng.random(boundary.size)
            h = vals @ g
            worst = max(worst, h.max() / h.min())
        assert worst <= ratio * (1 + 1e-9), "random data exceeded spike bound"
    return ratio


def check_ehi(G: ApproxGraph, form=None, radii=None, centers=None,
              thresholds=None, n_random=0, seed=0) -> CheckReport:
    """Measured Harnack constant over sampled balls (spike data)."""
    th = thresholds or load_thresholds()
    form = form or default_form(G)
    if radii is None:
        radii = [3 / 16, 1 / 4]
    centers = centers if centers is not None else anchor_vertices(G)
    rng = np.random.default_rng(seed) if n_random else None
    consts, skipped = [], 0
    for z in centers:
        for r in radii:
            c = harmonic_measure_ratio(G, form, z, r, rng=rng, n_random=n_random)
            if c is None:
                skipped += 1
            else:
                consts.append(c)
    if not consts:
        raise RuntimeError("all EHI samples skipped; radii below resolution")
    cmax = float(np.max(consts))
    return CheckReport(
        name="elliptic_harnack",
        config={"N": G.N, "radii": list(radii), "n_centers": len(centers)},
        constants={"harnack_constant": cmax, "per_ball": consts,
                   "skipped": skipped},
        passed=cmax <= th["ehi_max_constant"],
        thresholds={"ehi_max_constant": th["ehi_max_constant"]},
        notes="stability across levels is asserted by the caller",
    )


# ---------------------------------------------------------------------------
# resistance scaling
# ---------------------------------------------------------------------------

def check_res(G: ApproxGraph, form=None, H: TimeScaling | None = None,
              radii=None, centers=None, thresholds=None) -> CheckReport:
    """Spread of R_eff(B(x,R), B(x,2R)^c) * mu(B(x,R)) / H(R) over a grid."""
    th = thresholds or load_thresholds()
    form = form or default_form(G)
    H = H or TimeScaling()
    if radii is None:
        radii = [r for r in (1 / 16, 1 / 8, 1 / 4)
                 if 2.0 / G.d_N - 1e-12 <= r <= 1 / 3]
    centers = centers if centers is not None else anchor_vertices(G)
    vals, skipped = [], 0
    for x in centers:
        d = G.distances_from([x])[0]
        for R in radii:
            A = np.nonzero(d <= R + 1e-12)[0]
            Bc = np.nonzero(d > 2 * R + 1e-12)[0]
            if Bc.size == 0 or A.size == G.n_vertices:
                skipped += 1
                continue
            Reff = effective_resistance(form, A, Bc)
            vals.append(Reff * G.mu[A].sum() / float(H(R)))
    if not vals:
        raise RuntimeError("all RES samples skipped")
    spread = float(np.max(vals) / np.min(vals))
    return CheckReport(
        name="resistance_scaling",
        config={"N": G.N, "radii": list(radii), "n_centers": len(centers)},
        constants={"c1": float(np.min(vals)), "c2": float(np.max(vals)),
                   "spread": spread, "skipped": skipped},
        passed=spread <= th["res_max_spread"],
        thresholds={"res_max_spread": th["res_max_spread"]},
    )


# ---------------------------------------------------------------------------
# invariant forms and the Hilbert projective metric
# ---------------------------------------------------------------------------

@dataclass
class InvariantFormSpace:
    """Edge-orbit decomposition under the validated cell isometries.

    The space of conductance vectors invariant under every generator is
    spanned by the orbit indicators, so its dimension is the orbit count.
    """

    N: int
    levels: tuple
    n_generators: int
    orbit_labels: np.ndarray  # (E,) component id per edge
    dimension: int
    rejected: list = field(default_factory=list)


def invariant_form_dimension(G: ApproxGraph, levels=None,
                             generators: str = "full") -> InvariantFormSpace:
    """Orbits of the edge set under validated cell isometries.

    For every level n <= N a spanning family of isometries (base cell to
    every cell, plus the base cell's self-maps) is validated and its tube
    bijections are merged by union-find.  `generators="identity"` restricts
    the symmetry group to the identity (negative control: one orbit per
    edge).  Validation failures are collected, not silently dropped.
    """
    E = G.n_edges
    parent = np.arange(E)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb

    if levels is None:
        levels = tuple(range(G.N + 1))
    rejected = []
    n_gen = 0
    if generators == "full":
        for n in levels:
            cells = cells_at_level(G.seq, n)
            base = cells[0]
            for S in cells:
                diag = []
                for iso in cell_isometries(G, base, S, diagnostics=diag):
                    n_gen += 1
                    base_tubes = G.cell_tubes(base)
                    for src, dst in zip(base_tubes, iso.tube_map):
                        union(int(src), int(dst))
                rejected.extend(diag)
    elif generators != "identity":
        raise ValueError("generators must be 'full' or 'identity'")
    labels = np.array([find(e) for e in range(E)])
    _, labels = np.unique(labels, return_inverse=True)
    dim = int(labels.max()) + 1
    return InvariantFormSpace(
        N=G.N,
        levels=tuple(levels),
        n_generators=n_gen,
        orbit_labels=labels,
        dimension=dim,
        rejected=rejected,
    )


def invariant_form(G: ApproxGraph, space: InvariantFormSpace,
                   coeffs) -> QuadraticForm:
    """Conductance vector constant on each orbit (one coefficient per orbit)."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.size != space.dimension:
        raise ValueError(f"need {space.dimension} coefficients")
    return QuadraticForm(G, coeffs[space.orbit_labels])


def hilbert_distance(A: QuadraticForm, B: QuadraticForm) -> float:
    """Hilbert projective distance log(sup(B/A) / inf(B/A)) over nonconstants.

    Both forms must be positive semidefinite with kernel exactly the
    constants; the extreme ratios are the generalized eigenvalue range on
    the complement of the kernel.  h = 0 iff B is a positive multiple of A.
    """
    if A.graph is not B.graph:
        raise ValueError("forms must live on the same graph")
    G = A.graph
    V = G.n_vertices
    LA = conductance_laplacian(A).toarray()
    LB = conductance_laplacian(B).toarray()
    # orthonormal basis of the complement of the constants
    Q = la.null_space(np.ones((1, V)))
    Ar = Q.T @ LA @ Q
    Br = Q.T @ LB @ Q
    Ar = 0.5 * (Ar + Ar.T)
    Br = 0.5 * (Br + Br.T)
    amin = la.eigvalsh(Ar)[0]
    bmin = la.eigvalsh(Br)[0]
    scale = max(np.abs(Ar).max(), np.abs(Br).max())
    if amin < -1e-10 * scale or bmin < -1e-10 * scale:
        raise ValueError("forms must be positive semidefinite")
    if amin <= 1e-12 * scale or bmin <= 1e-12 * scale:
        raise ValueError("kernels differ: a form vanishes outside constants")
    w = la.eigvalsh(Br, Ar)
    return float(np.log(w[-1] / w[0]))


def theta_commutation(G: ApproxGraph, form: QuadraticForm, n: int,
                      thresholds=None) -> CheckReport:
    """Sup-norm of Theta L - L Theta for the generator of `form`."""
    th = thresholds or load_thresholds()
    Th = theta_matrix(G, n).toarray()
    Lgen = -(conductance_laplacian(form).toarray() / G.mu[:, None])
    norm = float(np.abs(Th @ Lgen - Lgen @ Th).max())
    return CheckReport(
        name="theta_commutation",
        config={"N": G.N, "n": n},
        constants={"norm": norm},
        passed=norm <= th["theta_commutation_norm"],
        thresholds={"theta_commutation_norm": th["theta_commutation_norm"]},
    )


# ---------------------------------------------------------------------------
# box-counting dimension estimate
# ---------------------------------------------------------------------------

def box_counting_dimension(G: ApproxGraph, levels=None) -> dict:
    """Box-counting estimate from the vertex cloud.

    The natural boxes of the quotient-of-product geometry at scale 1/d_g are
    the construction boxes [i/d_g, (i+1)/d_g] x K_w with |w| = g; a box is
    counted when it contains a vertex.  The dimension is the regression
    slope of log(count) against log(d_g).  Levels are capped at N-2 so that
    every box holds interior columns (occupancy is then measured, not
    assumed).
    """
    if levels is None:
        levels = list(range(1, G.N - 1))
    if not levels or max(levels) > G.N - 2:
        raise ValueError("box levels must lie in [1, N-2]")
    seq = G.seq
    counts, scales = [], []
    for g in levels:
        dg = d_of(seq, g)
        h = G.d_N // dg
        occupied = set()
        for (i, fiber) in G.verts:
            b = min(i // h, dg - 1)
            prefix = tuple(w[:g] for w in fiber)
            occupied.add((b, prefix))
        counts.append(len(occupied))
        scales.append(dg)
    slope = np.polyfit(np.log(scales), np.log(counts), 1)[0]
    return {"levels": list(levels), "counts": counts,
            "box_scales": [1.0 / s for s in scales], "dimension": float(slope)}


def net_covering_dimension(G: ApproxGraph, scales=None, trials: int = 4,
                           seed: int = 0) -> dict:
    """Metric covering-number estimate (diagnostic).

    Grows maximal eps-separated nets greedily (best of several random vertex
    orders) and regresses log N(eps) on log(1/eps).  At desk-scale windows
    Laakso geometry is still pre-asymptotic: the local volume prefactor
    drifts over the first few wormhole generations, so this estimator reads
    systematically below the Hausdorff dimension.
    """
    from collections import deque

    if scales is None:
        scales = [2.0 ** (-i) for i in range(2, 6)]
    adj = G.adjacency()
    indptr, indices = adj.indptr, adj.indices
    rng = np.random.default_rng(seed)

    def net_count(eps, order):
        hops = int(round(eps * G.d_N))
        if hops < 1:
            raise ValueError(f"scale {eps} below resolution")
        covered = np.zeros(G.n_vertices, dtype=bool)
        n_net = 0
        for v in order:
            if covered[v]:
                continue
            n_net += 1
            depth = {v: 0}
            dq = deque([int(v)])
            covered[v] = True
            while dq:
                u = dq.popleft()
                if depth[u] == hops:
                    continue
                for w in indices[indptr[u]:indptr[u + 1]]:
                    if w not in depth:
                        depth[w] = depth[u] + 1
                        covered[w] = True
                        dq.append(w)
        return n_net

    counts = [
        min(net_count(eps, rng.permutation(G.n_vertices)) for _ in range(trials))
        for eps in scales
    ]
    slope = np.polyfit(np.log(1.0 / np.asarray(scales)), np.log(counts), 1)[0]
    return {"scales": list(scales), "counts": counts, "dimension": float(slope)}


# ---------------------------------------------------------------------------
# suite driver
# ---------------------------------------------------------------------------

def run_all(G: ApproxGraph, checks=None, form=None, thresholds=None,
            seed: int = 0) -> list[CheckReport]:
    """Run the configured subset of checks, isolating individual crashes."""
    th = thresholds or load_thresholds()
    form = form or default_form(G)
    if checks is None:
        checks = ["vd", "ehi", "res", "theta", "dimension", "hilbert"]
    reports = []
    for name in checks:
        try:
            if name == "vd":
                reports.append(check_vd(G, thresholds=th))
            elif name == "ehi":
                reports.append(check_ehi(G, form, thresholds=th, seed=seed))
            elif name == "res":
                reports.append(check_res(G, form, thresholds=th))
            elif name == "theta":
                reports.append(theta_commutation(G, form, n=1, thresholds=th))
            elif name == "dimension":
                space = invariant_form_dimension(G)
                reports.append(CheckReport(
                    name="invariant_form_dimension",
                    config={"N": G.N, "levels": list(space.levels)},
                    constants={"dimension": space.dimension,
                               "n_generators": space.n_generators,
                               "n_rejected": len(space.rejected)},
                    passed=space.dimension == 1,
                    thresholds={"expected_dimension": 1},
                ))
            elif name == "hilbert":
                space = invariant_form_dimension(G, levels=(G.N,))
                A = invariant_form(G, space, np.full(space.dimension, 1.0))
                B = invariant_form(G, space, np.full(space.dimension, 2.5))
                h = hilbert_distance(A, B)
                reports.append(CheckReport(
                    name="hilbert_projective",
                    config={"N": G.N},
                    constants={"h_invariant_pair": h},
                    passed=h <= 1e-10,
                    thresholds={"zero_tol": 1e-10},
                ))
            else:
                raise ValueError(f"unknown check {name!r}")
        except Exception as exc:  # isolate per-check crashes
            reports.append(CheckReport(
                name=name,
                config={"N": G.N},
                constants={},
                passed=False,
                notes=f"check crashed: {type(exc).__name__}: {exc}",
            ))
    return reports
