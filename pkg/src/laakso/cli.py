"""Configuration parsing and command dispatch.

Configs are plain-text ``key = value`` files ('#' comments allowed) with a
documented key set; unknown keys are rejected.  Command-line ``--set``
overrides take precedence over the file.  Every artifact (CSV curves, JSON
verdicts) embeds the tool version and a hash of the normalized
configuration, and identical configs with identical seeds produce
bit-identical outputs.

Commands: build, spectrum, heatkernel, walk, couple, verify, report.
Exit codes: 0 success, 1 check failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .core import JSequence, cells_at_level, ConfigurationError
from .graph import GraphSizeError, build_graph, default_form, export_csv
from .spectral import SpectralData, eigendecompose, fit_hk_bounds, heat_kernel_rows, \
    ondiag_slope, TimeScaling
from .verify import load_thresholds, run_all
from .walker import WalkConfig, couple_sweep, exit_slope, exit_time_sweep, \
    halfface_scenario, hit_halfface

__all__ = ["RunConfig", "ConfigError", "parse_config", "serialize", "dispatch", "main"]

COMMANDS = ("build", "spectrum", "heatkernel", "walk", "couple", "verify", "report")


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass
class RunConfig:
    """Flat, fully serializable run configuration."""

    j: int = 2
    j_mode: str = "constant"
    j_pattern: tuple = ()
    j_list: tuple = ()
    k: int = 1
    identification: str = "diagonal"
    level: int = 3
    seed: int = 0
    walkers: int = 1000
    time_cap: float = 100.0
    max_steps: int = 200000
    radii: tuple = ()
    times: tuple = ()
    checks: tuple = ("vd", "ehi", "res", "theta", "dimension", "hilbert")
    out_dir: str = ""
    thresholds: str = ""
    threads: int = 0
    vertex_cap: int = 500000

    def sequence(self) -> JSequence:
        try:
            return JSequence(
                j=self.j,
                k=self.k,
                mode=self.j_mode,
                pattern=tuple(self.j_pattern),
                values=tuple(self.j_list),
                identification=self.identification,
            )
        except ConfigurationError as exc:
            raise ConfigError(str(exc)) from exc

    def resolved_out_dir(self) -> str:
        return self.out_dir or os.environ.get("LAAKSO_OUT", "laakso_out")


_INT_KEYS = {"j", "k", "level", "seed", "walkers", "max_steps", "threads", "vertex_cap"}
_FLOAT_KEYS = {"time_cap"}
_STR_KEYS = {"j_mode", "identification", "out_dir", "thresholds"}
_INT_LIST_KEYS = {"j_pattern", "j_list"}
_FLOAT_LIST_KEYS = {"radii", "times"}
_STR_LIST_KEYS = {"checks"}
_ALL_KEYS = (_INT_KEYS | _FLOAT_KEYS | _STR_KEYS | _INT_LIST_KEYS
             | _FLOAT_LIST_KEYS | _STR_LIST_KEYS)


def _coerce(key: str, raw: str, lineno=None):
    where = f" (line {lineno})" if lineno is not None else ""
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _STR_KEYS:
            return raw
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if key in _INT_LIST_KEYS:
            return tuple(int(s) for s in items)
        if key in _FLOAT_LIST_KEYS:
            return tuple(float(s) for s in items)
        return tuple(items)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}{where}: {raw!r}") from exc


def parse_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Read a key-value config file and apply overrides; validate everything."""
    data = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"line {lineno}: expected 'key = value'")
                key, raw = (s.strip() for s in line.split("=", 1))
                if key not in _ALL_KEYS:
                    raise ConfigError(f"line {lineno}: unknown key {key!r}")
                data[key] = _coerce(key, raw, lineno)
    for key, raw in (overrides or {}).items():
        if key not in _ALL_KEYS:
            raise ConfigError(f"unknown key {key!r}")
        data[key] = _coerce(key, raw) if isinstance(raw, str) else raw
    cfg = RunConfig(**data)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if cfg.level < 1:
        raise ConfigError(f"level must be >= 1, got {cfg.level}")
    if cfg.j_mode == "explicit" and len(cfg.j_list) < cfg.level:
        raise ConfigError(
            f"explicit j list has {len(cfg.j_list)} entries but level={cfg.level}"
        )
    for name in cfg.checks:
        if name not in ("vd", "ehi", "res", "theta", "dimension", "hilbert"):
            raise ConfigError(f"unknown check {name!r}")
    if cfg.seed < 0:
        raise ConfigError("seed must be >= 0")
    cfg.sequence()  # raises ConfigError on bad construction data


def serialize(cfg: RunConfig) -> str:
    """Canonical text form; parse(serialize(x)) == x."""
    lines = []
    for key, val in sorted(asdict(cfg).items()):
        if isinstance(val, tuple):
            val = ",".join(str(v) for v in val)
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(serialize(cfg).encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# command implementations
# ---------------------------------------------------------------------------

def _header(cfg):
    return (f"laakso {__version__}", f"config_hash={config_hash(cfg)}")


def _outdir(cfg):
    out = cfg.resolved_out_dir()
    os.makedirs(out, exist_ok=True)
    return out


def _cmd_build(cfg: RunConfig) -> int:
    G = build_graph(cfg.sequence(), cfg.level, vertex_cap=cfg.vertex_cap)
    out = _outdir(cfg)
    vp, ep = export_csv(G, default_form(G), out, header_lines=_header(cfg))
    print(f"build: N={cfg.level} vertices={G.n_vertices} edges={G.n_edges} "
          f"-> {vp}, {ep}")
    return 0


def _spectrum_cached(cfg: RunConfig):
    """Eigendecomposition, cached on disk keyed by the config hash."""
    out = _outdir(cfg)
    cachedir = os.path.join(out, "cache")
    os.makedirs(cachedir, exist_ok=True)
    path = os.path.join(cachedir, f"spectrum_{config_hash(cfg)}.npz")
    G = build_graph(cfg.sequence(), cfg.level, vertex_cap=cfg.vertex_cap)
    if os.path.exists(path):
        z = np.load(path)
        spec = SpectralData(eigenvalues=z["lam"], eigenvectors=z["phi"],
                            mu=z["mu"], partial=bool(z["partial"]))
        return G, spec, True
    spec = eigendecompose(default_form(G))
    np.savez(path, lam=spec.eigenvalues, phi=spec.eigenvectors, mu=spec.mu,
             partial=spec.partial)
    return G, spec, False


def _cmd_spectrum(cfg: RunConfig) -> int:
    G, spec, hit = _spectrum_cached(cfg)
    out = _outdir(cfg)
    path = os.path.join(out, "spectrum.csv")
    with open(path, "w") as fh:
        fh.write("".join(f"# {h}\n" for h in _header(cfg)))
        fh.write("mode,eigenvalue\n")
        for m, lam in enumerate(spec.eigenvalues):
            fh.write(f"{m},{lam:.15g}\n")
    print(f"spectrum: V={G.n_vertices} modes={spec.n_modes} "
          f"cache={'hit' if hit else 'miss'} -> {path}")
    return 0


def _cmd_heatkernel(cfg: RunConfig) -> int:
    G, spec, hit = _spectrum_cached(cfg)
    out = _outdir(cfg)
    fit = fit_hk_bounds(G, spec, floor_mult=1.0)
    slope = ondiag_slope(G, spec)
    rng = np.random.default_rng(cfg.seed)
    xs = np.sort(rng.choice(G.n_vertices, size=min(4, G.n_vertices), replace=False))
    ts = cfg.times or tuple(np.geomspace(*fit.window, 5))
    path = os.path.join(out, "heatkernel.csv")
    H = TimeScaling()
    with open(path, "w") as fh:
        fh.write("".join(f"# {h}\n" for h in _header(cfg)))
        fh.write("t,x,y,p,lower,upper\n")
        for t in ts:
            rows = heat_kernel_rows(spec, t, xs)
            h = float(H.inverse(t))
            for i, x in enumerate(xs):
                d = G.distances_from([x])[0]
                muB = G.mu[d <= h + 1e-12].sum()
                for y in xs:
                    a = d[y] ** 2 / t
                    lo = np.exp(-fit.c0 * a) / (fit.c0 * muB)
                    up = fit.c0 * np.exp(-a / fit.c0) / muB
                    fh.write(f"{t:.8g},{x},{y},{rows[i, y]:.10g},"
                             f"{lo:.6g},{up:.6g}\n")
    summary = {
        "config_hash": config_hash(cfg),
        "c0": fit.c0,
        "ondiag_slope": slope["slope_median"],
        "window": list(fit.window),
        "cache": "hit" if hit else "miss",
    }
    spath = os.path.join(out, "heatkernel.json")
    with open(spath, "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
    print(f"heatkernel: c0={fit.c0:.3f} ondiag_slope={slope['slope_median']:.3f} "
          f"cache={'hit' if hit else 'miss'} -> {path}")
    return 0


def _cmd_walk(cfg: RunConfig) -> int:
    G = build_graph(cfg.sequence(), cfg.level, vertex_cap=cfg.vertex_cap)
    form = default_form(G)
    radii = cfg.radii or tuple(
        r for r in (2**-5, 2**-4, 2**-3, 2**-2) if r > 2.0 / G.d_N
    )
    if not radii:
        raise ConfigError("no usable radii at this level; pass radii=...")
    x0 = G.vertex_id(G.d_N // 2 + 1, tuple("0" * G.N for _ in range(G.seq.k)))
    wc = WalkConfig(form=form, seed=cfg.seed, n_walkers=cfg.walkers,
                    time_cap=cfg.time_cap, max_steps=cfg.max_steps)
    results = exit_time_sweep(wc, x0, radii)
    slope = exit_slope(results)
    out = _outdir(cfg)
    path = os.path.join(out, "walk.csv")
    with open(path, "w") as fh:
        fh.write("".join(f"# {h}\n" for h in _header(cfg)))
        fh.write("radius,mean_exit,ci_lo,ci_hi,n_completed,n_truncated\n")
        for r in results:
            fh.write(f"{r.radius:.8g},{r.mean:.8g},{r.ci[0]:.8g},{r.ci[1]:.8g},"
                     f"{r.n_completed},{r.n_truncated}\n")
    with open(os.path.join(out, "walk.json"), "w") as fh:
        json.dump({"config_hash": config_hash(cfg), "slope": slope,
                   "seed": cfg.seed}, fh, sort_keys=True, indent=2)
    print(f"walk: exit-time slope={slope:.3f} over {len(radii)} radii -> {path}")
    return 0


def _cmd_couple(cfg: RunConfig) -> int:
    G = build_graph(cfg.sequence(), cfg.level, vertex_cap=cfg.vertex_cap)
    form = default_form(G)
    seq = cfg.sequence()
    wc = WalkConfig(form=form, seed=cfg.seed, n_walkers=cfg.walkers,
                    time_cap=cfg.time_cap, max_steps=cfg.max_steps)
    out = _outdir(cfg)
    rows = []
    max_m = min(4, cfg.level - 2) if cfg.level > 2 else 1
    for m in range(1, max_m + 1):
        x1, x2, cell = _mirror_pair(G, m)
        res = couple_sweep(wc, x1, x2, cell, r=1 / 3)
        rows.append((m, res))
    path = os.path.join(out, "couple.csv")
    with open(path, "w") as fh:
        fh.write("".join(f"# {h}\n" for h in _header(cfg)))
        fh.write("m,pairs,p_couple,ci_lo,ci_hi\n")
        for m, res in rows:
            fh.write(f"{m},{res.n_total},{res.probability:.6g},"
                     f"{res.ci[0]:.6g},{res.ci[1]:.6g}\n")
    # half-face hitting experiment at cell level 2
    hf_summary = {}
    if cfg.level >= 4:
        cell = [c for c in cells_at_level(seq, 2) if c.interval == 1][0]
        sc = halfface_scenario(G, cell, side="hi")
        start = int(sc["a0"][0])
        hf = hit_halfface(wc, start, sc["sstar"], sc["designated"])
        hf_summary = {"p_hit": hf.probability, "ci": list(hf.ci),
                      "n": hf.n_total}
    with open(os.path.join(out, "couple.json"), "w") as fh:
        json.dump({"config_hash": config_hash(cfg), "seed": cfg.seed,
                   "coupling": {str(m): r.probability for m, r in rows},
                   "halfface": hf_summary}, fh, sort_keys=True, indent=2)
    print(f"couple: P(couple)={', '.join(f'm={m}:{r.probability:.3f}' for m, r in rows)}"
          f" -> {path}")
    return 0


def _mirror_pair(G, m):
    """Start pair for the coupling run: a vertex adjacent to a fresh level-m
    wormhole and its digit-m mirror, inside the same level-m cell."""
    from .core import fresh_level, transpose

    seq = G.seq
    dm = [i for i in range(1, G.d_N) if fresh_level(seq, G.N, i) == m]
    wh = dm[len(dm) // 2]
    i = wh - 1
    fiber = tuple("0" * G.N for _ in range(seq.k))
    x1 = G.vertex_id(i, fiber)
    x2 = G.vertex_id(i, transpose(fiber, m))
    from .core import d_of as _d, Cell
    g = G.d_N // _d(seq, m)
    cell = Cell(level=m, interval=i // g, word=tuple(w[:m] for w in fiber))
    return x1, x2, cell


def _cmd_verify(cfg: RunConfig) -> int:
    G = build_graph(cfg.sequence(), cfg.level, vertex_cap=cfg.vertex_cap)
    th = load_thresholds(cfg.thresholds or None)
    reports = run_all(G, checks=list(cfg.checks), thresholds=th, seed=cfg.seed)
    out = _outdir(cfg)
    payload = {
        "tool": "laakso",
        "version": __version__,
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "checks": [r.to_dict() for r in reports],
        "all_passed": all(r.passed for r in reports),
    }
    path = os.path.join(out, "report.json")
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
    for r in reports:
        print(f"verify: {r.name}: {'PASS' if r.passed else 'FAIL'} {r.constants}")
    print(f"verify: report -> {path}")
    return 0 if payload["all_passed"] else 1


def _cmd_report(cfg: RunConfig) -> int:
    path = os.path.join(cfg.resolved_out_dir(), "report.json")
    if not os.path.exists(path):
        raise ConfigError(f"no report at {path}; run `laakso verify` first")
    with open(path) as fh:
        payload = json.load(fh)
    for r in payload["checks"]:
        print(f"{r['name']:30s} {'PASS' if r['passed'] else 'FAIL'}  {r['constants']}")
    print(f"overall: {'PASS' if payload['all_passed'] else 'FAIL'} "
          f"(config {payload['config_hash']})")
    return 0 if payload["all_passed"] else 1


def dispatch(command: str, cfg: RunConfig) -> int:
    handlers = {
        "build": _cmd_build,
        "spectrum": _cmd_spectrum,
        "heatkernel": _cmd_heatkernel,
        "walk": _cmd_walk,
        "couple": _cmd_couple,
        "verify": _cmd_verify,
        "report": _cmd_report,
    }
    if command not in handlers:
        raise ConfigError(f"unknown command {command!r}")
    return handlers[command](cfg)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="laakso",
        description="Graph approximations of Laakso spaces: build, spectra, "
                    "random walks, and quantitative verification checks.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key")
    parser.add_argument("--out", help="output directory (overrides out_dir)")
    args = parser.parse_args(argv)
    try:
        overrides = {}
        for item in args.overrides:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, val = item.split("=", 1)
            overrides[key.strip()] = val.strip()
        if args.out:
            overrides["out_dir"] = args.out
        cfg = parse_config(args.config, overrides)
        return dispatch(args.command, cfg)
    except (ConfigError, ConfigurationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except GraphSizeError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
