"""Spectral machinery: eigendecomposition, heat kernel, scaling-bound fits,
and Besov-type norms.

The generator of the walk is A = M^{-1} L_c with M = diag(mu); its spectral
resolution is computed through the symmetric matrix M^{-1/2} L_c M^{-1/2},
giving mu-orthonormal eigenfunctions.  The heat kernel is the spectral sum
p_t(x, y) = sum_m exp(-lambda_m t) phi_m(x) phi_m(y); it is symmetric,
conservative (sum_y p_t(x,y) mu(y) = 1) and its trace equals the partition
sum of the eigenvalues.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla

from .graph import ApproxGraph, QuadraticForm, conductance_laplacian

__all__ = [
    "SpectralData",
    "TimeScaling",
    "BesovReport",
    "HKFitResult",
    "TailBoundError",
    "eigendecompose",
    "heat_kernel",
    "heat_kernel_rows",
    "heat_trace",
    "hk_window",
    "fit_hk_bounds",
    "ondiag_slope",
    "besov_norm",
]

DENSE_EIG_LIMIT = 3000


class TailBoundError(RuntimeError):
    """Truncated spectrum cannot guarantee the requested kernel accuracy."""


@dataclass
class SpectralData:
    """Eigenvalues (ascending, lambda_0 = 0) and mu-orthonormal eigenvectors."""

    eigenvalues: np.ndarray  # (m,)
    eigenvectors: np.ndarray  # (V, m), columns phi_m
    mu: np.ndarray
    partial: bool = False

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size


def eigendecompose(form: QuadraticForm, n_modes: int | None = None) -> SpectralData:
    """Spectral resolution of the generator of `form`.

    Full dense decomposition below DENSE_EIG_LIMIT vertices, otherwise the
    lowest n_modes eigenpairs via Lanczos.  Eigenvectors are mu-orthonormal
    with residuals checked to 1e-8.
    """
    G = form.graph
    V = G.n_vertices
    mu = G.mu
    s = np.sqrt(mu)
    Lc = conductance_laplacian(form)
    if n_modes is None and V <= DENSE_EIG_LIMIT:
        H = (Lc.toarray() / s[:, None]) / s[None, :]
        H = 0.5 * (H + H.T)
        lam, psi = la.eigh(H)
        partial = False
    else:
        m = n_modes if n_modes is not None else min(V - 2, 200)
        H = sp_sym(Lc, s)
        lam, psi = spla.eigsh(H, k=m, which="SA")
        order = np.argsort(lam)
        lam, psi = lam[order], psi[:, order]
        partial = True
    lam = np.maximum(lam, 0.0)
    if lam[0] > 1e-8:
        raise RuntimeError(f"lowest eigenvalue {lam[0]:.3e} not zero")
    lam[0] = 0.0
    phi = psi / s[:, None]
    # deterministic sign: largest-magnitude entry positive
    idx = np.abs(phi).argmax(axis=0)
    signs = np.sign(phi[idx, np.arange(phi.shape[1])])
    signs[signs == 0] = 1.0
    phi = phi * signs
    gram = (phi * mu[:, None]).T @ phi
    if not np.allclose(gram, np.eye(phi.shape[1]), atol=1e-10):
        raise RuntimeError("eigenvectors not mu-orthonormal to 1e-10")
    resid = np.abs(Lc @ phi - (mu[:, None] * phi) * lam[None, :]).max()
    if resid > 1e-8 * max(1.0, lam.max()):
        raise RuntimeError(f"eigen residual {resid:.3e} too large")
    return SpectralData(eigenvalues=lam, eigenvectors=phi, mu=mu, partial=partial)


def sp_sym(Lc, s):
    import scipy.sparse as sp

    D = sp.diags(1.0 / s)
    return (D @ Lc @ D).tocsr()


def _tail_check(spec: SpectralData, t: float, estimate: float):
    if not spec.partial:
        return
    lam_cut = spec.eigenvalues[-1]
    mu_min = spec.mu.min()
    bound = np.exp(-lam_cut * t) / mu_min
    if bound > 1e-10 * max(abs(estimate), 1e-300):
        raise TailBoundError(
            f"spectral tail bound {bound:.3e} exceeds tolerance at t={t}; "
            "increase n_modes or use the dense decomposition"
        )


def heat_kernel(spec: SpectralData, t: float, x: int, y: int) -> float:
    """Heat kernel p_t(x, y) from the spectral sum (t > 0)."""
    if t <= 0:
        raise ValueError("time must be positive")
    w = np.exp(-spec.eigenvalues * t)
    p = float(np.sum(w * spec.eigenvectors[x] * spec.eigenvectors[y]))
    _tail_check(spec, t, p)
    return p


def heat_kernel_rows(spec: SpectralData, t: float, xs) -> np.ndarray:
    """Rows p_t(x, .) for several sources at once."""
    if t <= 0:
        raise ValueError("time must be positive")
    w = np.exp(-spec.eigenvalues * t)
    rows = (spec.eigenvectors[xs] * w[None, :]) @ spec.eigenvectors.T
    _tail_check(spec, t, float(np.abs(rows).max()))
    return rows


def heat_trace(spec: SpectralData, t: float) -> float:
    """sum_x p_t(x,x) mu(x) = sum_m exp(-lambda_m t)."""
    return float(np.exp(-spec.eigenvalues * t).sum())


# ---------------------------------------------------------------------------
# time scaling functions
# ---------------------------------------------------------------------------

@dataclass
class TimeScaling:
    """Scaling function H with doubling / fast-growth exponents (beta1, beta2).

    The default is the power form H(r) = scale * r^beta1 with
    beta1 = beta2 = 2 (diffusive scaling); a custom callable may be supplied
    for non-power scalings, in which case the inverse is found numerically.
    Slots for the measured comparison constants are kept in `constants`.
    """

    beta1: float = 2.0
    beta2: float = 2.0
    scale: float = 1.0
    fn: object = None
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.beta1 < 1.0:
            raise ValueError("beta1 must be >= 1")
        if self.fn is None and self.beta1 != self.beta2:
            raise ValueError("power form requires beta1 == beta2")

    def __call__(self, r):
        if self.fn is not None:
            return self.fn(r)
        return self.scale * np.asarray(r, dtype=float) ** self.beta1

    def inverse(self, t):
        """h(t) = H^{-1}(t); exact for the power form, bisection otherwise."""
        if self.fn is None:
            return (np.asarray(t, dtype=float) / self.scale) ** (1.0 / self.beta1)
        from scipy.optimize import brentq

        def inv_one(tv):
            return brentq(lambda r: self.fn(r) - tv, 1e-12, 2.0)

        t = np.asarray(t, dtype=float)
        return np.vectorize(inv_one)(t) if t.ndim else float(inv_one(float(t)))

    def validate(self, r_grid=None) -> dict:
        """Measure doubling and growth constants on a grid; checks that H is
        strictly increasing on (0, 2]."""
        r = np.asarray(r_grid if r_grid is not None else np.geomspace(1e-3, 2.0, 64))
        H = self(r)
        if not (np.diff(H) > 0).all():
            raise ValueError("H must be strictly increasing")
        half = r[r <= 1.0]
        C4 = float(np.max(self(2 * half) / self(half)))
        ratios = H[None, :] / H[:, None]
        rr = (r[None, :] / r[:, None]) ** self.beta1
        upper = np.triu_indices(r.size, 1)
        C5 = float(np.min(ratios[upper] / rr[upper]))
        out = {"C4": C4, "C5": C5, "beta2_from_C4": float(np.log2(C4))}
        self.constants.update(out)
        return out


# ---------------------------------------------------------------------------
# heat-kernel bound fitting
# ---------------------------------------------------------------------------

@dataclass
class HKFitResult:
    c0: float
    t_grid: np.ndarray
    n_pairs: int
    trimmed: bool
    window: tuple


def hk_window(G: ApproxGraph, spec: SpectralData, floor_mult: float = 16.0,
              mixing_frac: float = 0.25) -> tuple:
    """Valid time window [floor_mult/d_N^2, mixing_frac/lambda_1].

    Below the floor the graph discretization distorts the kernel; above the
    mixing scale the constant mode dominates.  floor_mult = 16 is safe for
    slope estimates; two-sided bound fits tolerate floor_mult = 1 (a single
    edge crossing).
    """
    lam1 = spec.eigenvalues[spec.eigenvalues > 1e-12][0]
    return (floor_mult / G.d_N**2, mixing_frac / lam1)


def fit_hk_bounds(G: ApproxGraph, spec: SpectralData, H: TimeScaling | None = None,
                  xs=None, n_t: int = 8, floor_mult: float = 1.0,
                  c_max: float = 1e6) -> HKFitResult:
    """Smallest c0 >= 1 with two-sided sub-Gaussian bounds on a (t, x, y) grid.

    For every grid point the kernel must satisfy

        exp(-c0 (H(d)/t)^(1/(b1-1))) / (c0 mu(B(x, h(t))))
            <= p_t(x,y) <=
        c0 exp(-(1/c0) (H(d)/t)^(1/(b2-1))) / mu(B(x, h(t)))

    with h = H^{-1}.  Both constraints relax monotonically in c0, so the
    optimum is found by bisection.  Times outside the resolved window are
    trimmed with a warning.
    """
    H = H or TimeScaling()
    t_lo, t_hi = hk_window(G, spec, floor_mult=floor_mult)
    if t_lo >= t_hi:
        raise ValueError(
            f"empty time window [{t_lo:.3e}, {t_hi:.3e}]; refine the graph"
        )
    t_grid = np.geomspace(t_lo, t_hi, n_t)
    if xs is None:
        rng = np.random.default_rng(7)
        xs = np.sort(rng.choice(G.n_vertices, size=min(12, G.n_vertices), replace=False))
    xs = np.asarray(xs, dtype=int)
    D = G.distances_from(xs)  # (n_x, V)

    e1 = 1.0 / (H.beta1 - 1.0)
    e2 = 1.0 / (H.beta2 - 1.0)
    rows_per_t = []
    for t in t_grid:
        P = heat_kernel_rows(spec, t, xs)
        h = float(H.inverse(t))
        muB = np.array([G.mu[D[i] <= h + 1e-12].sum() for i in range(xs.size)])
        rows_per_t.append((P, muB))
    # resolution floor of the spectral sum: cancellation noise scales like
    # eps / sqrt(mu(x) mu(y)); bounds below it are not decidable numerically
    noise = 1e-13 / np.sqrt(np.outer(G.mu[xs], G.mu))

    def feasible(c0):
        for (P, muB), t in zip(rows_per_t, t_grid):
            a = np.asarray(H(D)) / t
            lower = np.exp(-c0 * a**e1) / (c0 * muB[:, None])
            upper = c0 * np.exp(-(a**e2) / c0) / muB[:, None]
            if (P < lower - noise).any() or (P > upper + noise).any():
                return False
        return True

    lo, hi = 1.0, 1.0
    while not feasible(hi):
        hi *= 2.0
        if hi > c_max:
            raise RuntimeError("no feasible c0 below c_max; kernel violates shape")
    for _ in range(60):
        mid = np.sqrt(lo * hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return HKFitResult(c0=float(hi), t_grid=t_grid, n_pairs=xs.size * G.n_vertices,
                       trimmed=True, window=(t_lo, t_hi))


def ondiag_slope(G: ApproxGraph, spec: SpectralData, xs=None, n_t: int = 12,
                 floor_mult: float = 16.0) -> dict:
    """Log-log slope of t -> p_t(x, x) over the resolved window.

    Ahlfors regularity of exponent Q plus diffusive scaling forces the slope
    to sit near -Q/2; the median over sample points is reported.
    """
    t_lo, t_hi = hk_window(G, spec, floor_mult=floor_mult)
    if t_lo >= t_hi:
        raise ValueError(f"empty time window [{t_lo:.3e}, {t_hi:.3e}]")
    t_grid = np.geomspace(t_lo, t_hi, n_t)
    if xs is None:
        rng = np.random.default_rng(11)
        xs = np.sort(rng.choice(G.n_vertices, size=min(8, G.n_vertices), replace=False))
    xs = np.asarray(xs, dtype=int)
    logt = np.log(t_grid)
    slopes = []
    for x in xs:
        logp = np.log([heat_kernel(spec, t, x, x) for t in t_grid])
        slopes.append(np.polyfit(logt, logp, 1)[0])
    slopes = np.array(slopes)
    return {
        "slope_median": float(np.median(slopes)),
        "slopes": slopes,
        "t_grid": t_grid,
        "window": (t_lo, t_hi),
    }


# ---------------------------------------------------------------------------
# Besov-type norms
# ---------------------------------------------------------------------------

@dataclass
class BesovReport:
    radii: np.ndarray
    J: np.ndarray  # J_r(f)
    N_r: np.ndarray  # J_r / H(r)
    N_H: float  # sup over the grid
    energy: float
    ratio: float  # N_H / energy (inf for constants)


def besov_norm(G: ApproxGraph, f: np.ndarray, H: TimeScaling | None = None,
               radii=None, alpha: float | None = None, form=None) -> BesovReport:
    """Localized double-integral seminorms and their supremum.

    J_r(f) = r^(-alpha) sum_x sum_{y in B(x,r)} |f(x)-f(y)|^2 mu(y) mu(x)
    with alpha the volume-growth exponent Q of the space, N_H^r = J_r / H(r),
    and N_H the max over the radius grid.  Comparable to the Dirichlet
    energy with two-sided constants.
    """
    from .core import hausdorff_dimension
    from .graph import default_form, energy as _energy

    H = H or TimeScaling()
    if alpha is None:
        alpha = hausdorff_dimension(G.seq)
    if radii is None:
        radii = np.array([2.0 / G.d_N * 2**i for i in
                          range(int(np.log2(G.d_N / 2)) + 1)])
        radii = radii[radii <= 1.0 + 1e-12]
    radii = np.asarray(radii, dtype=float)
    if (radii < 2.0 / G.d_N - 1e-12).any() or (radii > 1.0 + 1e-12).any():
        raise ValueError("radii must lie in [2/d_N, 1]")
    f = np.asarray(f, dtype=float)
    D = G.distance_matrix()
    mu = G.mu
    fmu = f * mu
    f2mu = f * f * mu
    J = np.empty(radii.size)
    for idx, r in enumerate(radii):
        M = (D <= r + 1e-12).astype(float)
        # sum_{x,y} M |f(x)-f(y)|^2 mu mu expanded into three matvecs
        s = f2mu @ (M @ mu) + mu @ (M @ f2mu) - 2.0 * fmu @ (M @ fmu)
        J[idx] = r ** (-alpha) * s
    N_r = J / np.asarray(H(radii))
    N_H = float(N_r.max())
    fm = form if form is not None else default_form(G)
    en = _energy(fm, f)
    ratio = N_H / en if en > 0 else float("inf") if N_H > 0 else 0.0
    return BesovReport(radii=radii, J=J, N_r=N_r, N_H=N_H, energy=en, ratio=ratio)
