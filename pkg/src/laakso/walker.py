"""Continuous-time random walk engine matched to the graph generator.

The walk holds at a vertex v for an exponential time with rate
sum_u c_uv / mu(v) and then jumps along an incident edge with probability
proportional to its conductance, so Monte Carlo results and spectral results
share one time unit.  Walkers are simulated in vectorized batches; all
randomness flows through counter-based Philox streams keyed by
(master seed, purpose, stream id), making every result a deterministic
function of the configuration.

Besides plain paths and exit times, this module implements the folded-walk
constructions: reflected paths Z = phi_S(X), half-face hitting experiments,
and the synchronized-driver coupling of two walkers whose folded images
agree (one walker drives, the other is lifted with independent uniform
branch choices wherever the lift is ambiguous; the coupling time is declared
at the first jump event on which both occupy the same vertex).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Cell, HalfFace, d_of, fiber_orbit, fresh_level
from .folding import phi_map
from .graph import ApproxGraph, QuadraticForm, ball

__all__ = [
    "WalkConfig",
    "WalkPath",
    "CouplingResult",
    "ExitTimeResult",
    "HitResult",
    "stream",
    "kinetics",
    "step_walk",
    "walk_to_time",
    "exit_time",
    "exit_time_sweep",
    "reflected_path",
    "hit_halfface",
    "couple",
    "couple_sweep",
    "hit_before_exit",
    "kappa_from_depths",
]

_PURPOSES = {
    "walk": 1,
    "exit": 2,
    "halfface": 3,
    "couple_driver": 4,
    "couple_lift": 5,
    "reflect": 6,
    "kernel": 7,
    "occupation": 8,
    "hit": 9,
}


def stream(seed: int, purpose: str, *ids: int) -> np.random.Generator:
    """Independent deterministic stream keyed by (seed, purpose, ids)."""
    key = (int(seed), _PURPOSES[purpose], *map(int, ids))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


@dataclass
class WalkConfig:
    """Reproducible walk setup: identical configs give identical output."""

    form: QuadraticForm
    seed: int = 0
    n_walkers: int = 1000
    time_cap: float = 100.0
    max_steps: int = 200_000

    @property
    def graph(self) -> ApproxGraph:
        return self.form.graph


@dataclass
class Kinetics:
    """Padded per-vertex jump tables (neighbors, tubes, conductances)."""

    nbrs: np.ndarray  # (V, maxdeg), padded -1
    tubes: np.ndarray  # (V, maxdeg), padded -1
    weights: np.ndarray  # (V, maxdeg) conductances, padded 0
    cum: np.ndarray  # (V, maxdeg) cumulative jump fractions, padded inf
    rate: np.ndarray  # (V,) holding rates
    degree: np.ndarray  # (V,)


def kinetics(form: QuadraticForm) -> Kinetics:
    G = form.graph
    cache = G._caches.setdefault("kinetics", {})
    key = form.c.tobytes()
    if key in cache:
        return cache[key]
    V = G.n_vertices
    inc = [[] for _ in range(V)]
    for e in range(G.n_edges):
        u, v, c = int(G.edges_u[e]), int(G.edges_v[e]), form.c[e]
        inc[u].append((v, e, c))
        inc[v].append((u, e, c))
    maxdeg = max(len(lst) for lst in inc)
    nbrs = np.full((V, maxdeg), -1, dtype=int)
    tubes = np.full((V, maxdeg), -1, dtype=int)
    weights = np.zeros((V, maxdeg))
    cum = np.full((V, maxdeg), np.inf)
    degc = np.zeros(V)
    for v, lst in enumerate(inc):
        cs = np.array([c for _, _, c in lst])
        degc[v] = cs.sum()
        nbrs[v, : len(lst)] = [u for u, _, _ in lst]
        tubes[v, : len(lst)] = [e for _, e, _ in lst]
        weights[v, : len(lst)] = cs
        cc = np.cumsum(cs) / degc[v]
        cc[-1] = 1.0
        cum[v, : len(lst)] = cc
    kin = Kinetics(
        nbrs=nbrs,
        tubes=tubes,
        weights=weights,
        cum=cum,
        rate=degc / G.mu,
        degree=np.array([len(lst) for lst in inc]),
    )
    cache[key] = kin
    return kin


def _jump(kin: Kinetics, v: np.ndarray, rng: np.random.Generator):
    """One synchronous jump for a batch of walkers; returns (next, tube)."""
    r = rng.random(v.size)
    col = (r[:, None] >= kin.cum[v]).sum(axis=1)
    return kin.nbrs[v, col], kin.tubes[v, col]


# ---------------------------------------------------------------------------
# paths
# ---------------------------------------------------------------------------

@dataclass
class WalkPath:
    vertices: np.ndarray
    holds: np.ndarray  # holding time at vertices[i] before the i'th jump
    total_time: float
    truncated: bool = False


def step_walk(config: WalkConfig, start: int, walker_id: int = 0) -> WalkPath:
    """Simulate a single trajectory until the time cap (or max_steps)."""
    kin = kinetics(config.form)
    rng = stream(config.seed, "walk", walker_id)
    verts = [int(start)]
    holds = []
    t = 0.0
    truncated = True
    for _ in range(config.max_steps):
        v = verts[-1]
        h = rng.exponential(1.0 / kin.rate[v])
        if t + h > config.time_cap:
            holds.append(config.time_cap - t)
            t = config.time_cap
            truncated = False
            break
        holds.append(h)
        t += h
        nxt, _ = _jump(kin, np.array([v]), rng)
        verts.append(int(nxt[0]))
    return WalkPath(
        vertices=np.array(verts),
        holds=np.array(holds),
        total_time=t,
        truncated=truncated and t < config.time_cap,
    )


def reflected_path(path: WalkPath, G: ApproxGraph, cell: Cell) -> WalkPath:
    """Pointwise image under the folding map, identical event times."""
    pm = phi_map(G, cell)
    return WalkPath(
        vertices=pm[path.vertices],
        holds=path.holds.copy(),
        total_time=path.total_time,
        truncated=path.truncated,
    )


def walk_to_time(config: WalkConfig, starts, t_end: float,
                 purpose: str = "walk", stream_id: int = 0) -> np.ndarray:
    """Vectorized batch: state of each walker at fixed time t_end."""
    kin = kinetics(config.form)
    rng = stream(config.seed, purpose, stream_id)
    states = np.asarray(starts, dtype=int).copy()
    t = np.zeros(states.size)
    active = np.ones(states.size, dtype=bool)
    for _ in range(config.max_steps):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        v = states[idx]
        h = rng.exponential(1.0, idx.size) / kin.rate[v]
        over = t[idx] + h > t_end
        active[idx[over]] = False
        go = idx[~over]
        if go.size:
            t[go] += h[~over]
            states[go], _ = _jump(kin, states[go], rng)
    if active.any():
        raise RuntimeError("max_steps exhausted before reaching t_end")
    return states


# ---------------------------------------------------------------------------
# exit times
# ---------------------------------------------------------------------------

@dataclass
class ExitTimeResult:
    mean: float
    ci: tuple  # 95% confidence interval for the mean
    radius: float
    n_completed: int
    n_truncated: int
    wide_ci: bool  # too few completed exits

    @property
    def stderr(self):
        return (self.ci[1] - self.ci[0]) / (2 * 1.96)


def exit_time(config: WalkConfig, x: int, r: float) -> ExitTimeResult:
    """Monte Carlo mean exit time of B(x, r) started at x."""
    G = config.graph
    kin = kinetics(config.form)
    dist = G.distances_from([x])[0]
    if (dist <= r + 1e-12).all():
        raise ValueError("ball must be a proper subset of the vertex set")
    rng = stream(config.seed, "exit")
    n = config.n_walkers
    states = np.full(n, int(x))
    t = np.zeros(n)
    taus = np.full(n, np.nan)
    active = np.ones(n, dtype=bool)
    for _ in range(config.max_steps):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        v = states[idx]
        t[idx] += rng.exponential(1.0, idx.size) / kin.rate[v]
        nxt, _ = _jump(kin, v, rng)
        states[idx] = nxt
        out = dist[nxt] > r + 1e-12
        done = idx[out]
        taus[done] = t[done]
        active[done] = False
        capped = idx[~out][t[idx[~out]] > config.time_cap]
        active[capped] = False
    good = ~np.isnan(taus)
    n_completed = int(good.sum())
    if n_completed == 0:
        raise RuntimeError("no walker exited within the caps")
    m = float(taus[good].mean())
    se = float(taus[good].std(ddof=1) / np.sqrt(n_completed)) if n_completed > 1 else np.inf
    return ExitTimeResult(
        mean=m,
        ci=(m - 1.96 * se, m + 1.96 * se),
        radius=r,
        n_completed=n_completed,
        n_truncated=int(n - n_completed),
        wide_ci=n_completed < config.n_walkers // 2,
    )


def exit_time_sweep(config: WalkConfig, x: int, radii) -> list[ExitTimeResult]:
    """Exit times over a radius grid plus the log-log regression slope."""
    out = []
    for i, r in enumerate(radii):
        cfg = WalkConfig(
            form=config.form,
            seed=config.seed + 1000 * i,  # fresh stream per radius
            n_walkers=config.n_walkers,
            time_cap=config.time_cap,
            max_steps=config.max_steps,
        )
        out.append(exit_time(cfg, x, r))
    return out


def exit_slope(results: list[ExitTimeResult]) -> float:
    logr = np.log([r.radius for r in results])
    logt = np.log([r.mean for r in results])
    return float(np.polyfit(logr, logt, 1)[0])


# ---------------------------------------------------------------------------
# half-face hitting
# ---------------------------------------------------------------------------

@dataclass
class HitResult:
    probability: float
    ci: tuple
    n_hit: int
    n_total: int
    extra: dict = field(default_factory=dict)


def _binom_ci(hits: int, n: int) -> tuple:
    p = hits / n
    se = np.sqrt(max(p * (1 - p), 1e-12) / n)
    return (p - 1.96 * se, p + 1.96 * se)


def _run_hit(config, start_states, success, failure, purpose, stream_id=0):
    """Generic first-passage race: success set vs failure (exit) set."""
    kin = kinetics(config.form)
    rng = stream(config.seed, purpose, stream_id)
    states = np.asarray(start_states, dtype=int).copy()
    n = states.size
    hit = np.zeros(n, dtype=bool)
    active = ~(success[states])  # already on the target counts as a hit
    hit[~active] = True
    for _ in range(config.max_steps):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        nxt, _ = _jump(kin, states[idx], rng)
        states[idx] = nxt
        won = success[nxt]
        lost = failure[nxt] & ~won
        hit[idx[won]] = True
        active[idx[won | lost]] = False
    n_hit = int(hit.sum())
    return HitResult(
        probability=n_hit / n,
        ci=_binom_ci(n_hit, n),
        n_hit=n_hit,
        n_total=n,
    )


def halfface_scenario(G: ApproxGraph, cell: Cell, side: str = "hi") -> dict:
    """Materialize the half-face hitting experiment for one cell face.

    Returns the face vertex set A0, the union S_* of the same-level cells
    sharing A0 (the word orbit at the face's wormhole level, on both sides
    of the wormhole), and the level-(n+1) neighboring faces at the two
    adjacent wormhole columns, keyed by (side, word).  The face's wormhole
    must be interior and the adjacent columns must be resolved (N >= n+1).
    """
    from fractions import Fraction

    seq, n = G.seq, cell.level
    dn = d_of(seq, n)
    p = cell.interval + (0 if side == "lo" else 1)
    if not 0 < p < dn:
        raise ValueError("face sits on the space boundary; no wormhole there")
    if G.N < n + 1:
        raise ValueError("need approximation level >= cell level + 1")
    m = fresh_level(seq, n, p)
    words = fiber_orbit(seq, cell.word, m) if cell.word else (cell.word,)
    a0 = G.halfface_vertices(
        HalfFace(level=n, position=Fraction(p, dn), word=cell.word, side=side)
    )
    star = set()
    for w in words:
        for q in (p - 1, p):
            star.update(G.cell_vertices(Cell(level=n, interval=q, word=w)).tolist())
    neighbors = {}
    step = Fraction(1, d_of(seq, n + 1))
    for s, z in (("-", Fraction(p, dn) - step), ("+", Fraction(p, dn) + step)):
        for w in words:
            hf = HalfFace(level=n, position=z, word=w, side=s)
            neighbors[(s, w)] = G.halfface_vertices(hf)
    return {
        "a0": a0,
        "sstar": np.array(sorted(star), dtype=int),
        "neighbors": neighbors,
        "designated": neighbors[("+", cell.word)],
        "wormhole_level": m,
    }


def hit_halfface(config: WalkConfig, x: int, sstar_vertices, a1_vertices) -> HitResult:
    """Probability of hitting the designated half-face before leaving S_*.

    S_* is the union of the same-level cells sharing the start half-face;
    the walk starts at a vertex of that face.
    """
    G = config.graph
    in_star = np.zeros(G.n_vertices, dtype=bool)
    in_star[np.asarray(sstar_vertices, dtype=int)] = True
    in_a1 = np.zeros(G.n_vertices, dtype=bool)
    in_a1[np.asarray(a1_vertices, dtype=int)] = True
    starts = np.full(config.n_walkers, int(x))
    return _run_hit(config, starts, success=in_a1, failure=~in_star,
                    purpose="halfface")


def hit_before_exit(config: WalkConfig, y: int, x: int, delta: float,
                    r: float) -> HitResult:
    """P^y(hit B(x, delta*r) before exiting B(x, r)), with the depth-gap
    exponent kappa implied by the two radii attached to the result."""
    G = config.graph
    if not 0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")
    target = np.zeros(G.n_vertices, dtype=bool)
    target[ball(G, x, delta * r)] = True
    domain = np.zeros(G.n_vertices, dtype=bool)
    domain[ball(G, x, r)] = True
    starts = np.full(config.n_walkers, int(y))
    res = _run_hit(config, starts, success=target, failure=~domain, purpose="hit")
    res.extra["kappa"] = kappa_from_depths(G.seq, r, delta * r)
    return res


def kappa_from_depths(seq, r: float, rho: float) -> int:
    """Depth-gap exponent: with r in (1/d_{m+1}, 1/d_m] and rho in
    (1/d_{m+g+1}, 1/d_{m+g}], kappa = g - 1 (a gap of 4 levels gives 3)."""
    from .core import d_of

    def depth(s):
        m = 0
        while 1.0 / d_of(seq, m + 1) >= s - 1e-12:
            m += 1
        return m

    return max(depth(rho) - depth(r) - 1, 1)


# ---------------------------------------------------------------------------
# coupling
# ---------------------------------------------------------------------------

@dataclass
class CouplingResult:
    coupling_time: float  # inf if not coupled within caps
    coupling_step: int
    tau1: float
    tau2: float
    coupled_before_exit: bool
    path1: WalkPath | None = None
    path2: WalkPath | None = None


def _check_coupling_pre(G, cell, x1, x2):
    pm = phi_map(G, cell)
    if pm[x1] != pm[x2]:
        raise ValueError(
            "coupling precondition violated: folded images of the two "
            "starting points differ"
        )
    return pm


def _lift_step(kin, states2, z_new, pm, rng):
    """Advance the lifted walker: choose among incident edges whose endpoint
    folds onto the driver's new state, proportionally to conductance."""
    nb = kin.nbrs[states2]  # (n, maxdeg)
    img = np.where(nb >= 0, pm[np.maximum(nb, 0)], -1)
    okay = img == z_new[:, None]
    w = np.where(okay, kin.weights[states2], 0.0)
    tot = w.sum(axis=1)
    if (tot <= 0).any():
        raise RuntimeError(
            "lift has no consistent branch; the form is not fold-invariant"
        )
    cum = np.cumsum(w, axis=1)
    rr = rng.random(states2.size) * tot
    col = (rr[:, None] >= cum).sum(axis=1)
    col = np.minimum(col, kin.nbrs.shape[1] - 1)
    return nb[np.arange(states2.size), col]


def couple(config: WalkConfig, x1: int, x2: int, cell: Cell, r: float,
           keep_paths: bool = True) -> CouplingResult:
    """Couple two walkers through a common folded driver (single pair).

    The driver is the folded image of the first walker; the second walker is
    lifted from the driver with independent branch choices.  Both walkers
    share jump times (their holding rates agree by fold symmetry).  The
    coupling time is the first jump event at which both occupy the same
    vertex; afterwards they run identically.
    """
    G = config.graph
    kin = kinetics(config.form)
    pm = _check_coupling_pre(G, cell, x1, x2)
    if not np.allclose(kin.rate, kin.rate[0]):
        raise RuntimeError("coupling requires fold-invariant holding rates")
    d1 = G.distances_from([x1])[0]
    d2 = G.distances_from([x2])[0]
    rng1 = stream(config.seed, "couple_driver")
    rng2 = stream(config.seed, "couple_lift")
    v1, v2 = int(x1), int(x2)
    t = 0.0
    tc = np.inf
    tc_step = -1
    tau1 = tau2 = np.inf
    verts1, verts2, holds = [v1], [v2], []
    if v1 == v2:
        tc, tc_step = 0.0, 0
    for step in range(1, config.max_steps + 1):
        if tc < np.inf or (tau1 < np.inf or tau2 < np.inf) or t > config.time_cap:
            break
        h = rng1.exponential(1.0 / kin.rate[v1])
        t += h
        holds.append(h)
        nxt1, _ = _jump(kin, np.array([v1]), rng1)
        v1 = int(nxt1[0])
        z_new = pm[np.array([v1])]
        nxt2 = _lift_step(kin, np.array([v2]), z_new, pm, rng2)
        v2 = int(nxt2[0])
        assert pm[v2] == z_new[0]
        verts1.append(v1)
        verts2.append(v2)
        if d1[v1] > r + 1e-12 and tau1 == np.inf:
            tau1 = t
        if d2[v2] > r + 1e-12 and tau2 == np.inf:
            tau2 = t
        if v1 == v2 and tc == np.inf:
            tc, tc_step = t, step
    coupled_before = tc < min(tau1, tau2)
    paths = None, None
    if keep_paths:
        ha = np.array(holds) if holds else np.zeros(0)
        paths = (
            WalkPath(np.array(verts1), ha, t),
            WalkPath(np.array(verts2), ha.copy(), t),
        )
    return CouplingResult(
        coupling_time=tc,
        coupling_step=tc_step,
        tau1=tau1,
        tau2=tau2,
        coupled_before_exit=bool(coupled_before),
        path1=paths[0],
        path2=paths[1],
    )


def couple_sweep(config: WalkConfig, x1: int, x2: int, cell: Cell,
                 r: float) -> HitResult:
    """Empirical P(T_C < tau_1 ^ tau_2) over n_walkers independent pairs.

    Vectorized version of `couple` tracking only the race between coupling
    and the first ball exit (event order suffices; holding times drop out).
    """
    G = config.graph
    kin = kinetics(config.form)
    pm = _check_coupling_pre(G, cell, x1, x2)
    if not np.allclose(kin.rate, kin.rate[0]):
        raise RuntimeError("coupling requires fold-invariant holding rates")
    in1 = np.zeros(G.n_vertices, dtype=bool)
    in1[ball(G, x1, r)] = True
    in2 = np.zeros(G.n_vertices, dtype=bool)
    in2[ball(G, x2, r)] = True
    n = config.n_walkers
    rng1 = stream(config.seed, "couple_driver")
    rng2 = stream(config.seed, "couple_lift")
    s1 = np.full(n, int(x1))
    s2 = np.full(n, int(x2))
    coupled = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)
    if x1 == x2:
        coupled[:] = True
        active[:] = False
    for _ in range(config.max_steps):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        nxt1, _ = _jump(kin, s1[idx], rng1)
        z_new = pm[nxt1]
        nxt2 = _lift_step(kin, s2[idx], z_new, pm, rng2)
        s1[idx] = nxt1
        s2[idx] = nxt2
        exited = ~in1[nxt1] | ~in2[nxt2]
        met = (nxt1 == nxt2) & ~exited
        coupled[idx[met]] = True
        active[idx[met | exited]] = False
    n_hit = int(coupled.sum())
    return HitResult(
        probability=n_hit / n,
        ci=_binom_ci(n_hit, n),
        n_hit=n_hit,
        n_total=n,
        extra={"unresolved": int(active.sum())},
    )
