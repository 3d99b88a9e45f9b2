"""p-Wasserstein distances: exact discrete transport, 1-D quantile coupling,
the Gaussian closed form, the dyadic upper bound, and the nested distance."""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special
from scipy.spatial.distance import cdist

from .measures import DiscreteMeasure, GaussianMeasure, Law1D, MeasureError, get_law
from .rates.nonparametric import k_pd

# POT probes every installed tensor backend on import; we only need numpy.
for _key in ("PYTORCH", "TENSORFLOW", "JAX", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_key}", "1")
import ot  # noqa: E402


class TransportError(RuntimeError):
    """Raised when a transport solve fails or inputs are inconsistent."""


# ---------------------------------------------------------------------------
# Exact discrete transport


@dataclass(frozen=True, eq=False)
class CouplingPlan:
    row: DiscreteMeasure
    col: DiscreteMeasure
    plan: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.plan, dtype=float)
        if P.shape != (self.row.size, self.col.size) or np.any(P < -1e-15):
            raise TransportError("plan has the wrong shape or negative entries")
        if (np.max(np.abs(P.sum(axis=1) - self.row.weights)) > 1e-9
                or np.max(np.abs(P.sum(axis=0) - self.col.weights)) > 1e-9):
            raise TransportError("plan marginals do not match the measures")


def transport_lp(a: np.ndarray, b: np.ndarray, C: np.ndarray) -> tuple[float, np.ndarray]:
    """Minimal ⟨γ, C⟩ over couplings of (a, b) by network simplex."""
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    C = np.ascontiguousarray(C, dtype=float)
    if len(a) == 1 or len(b) == 1:
        G = np.outer(a, b)
        return float(np.sum(G * C)), G
    G, log = ot.emd(a, b, C, numItermax=10**7, log=True, check_marginals=False)
    if log["result_code"] != 1:
        raise TransportError(f"network simplex did not reach optimality: {log['warning']}")
    return float(np.sum(G * C)), G


def cost_matrix(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float) -> np.ndarray:
    if not mu.on_same_space(nu):
        raise TransportError("measures live on different spaces")
    if mu.space is not None:
        D = mu.space.metric[np.ix_(mu.points, nu.points)]
    else:
        D = cdist(mu.points, nu.points)
    return D**p


def wasserstein_exact(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float = 1.0
                      ) -> tuple[float, CouplingPlan]:
    """W_p(μ, ν) and an optimal plan."""
    if p < 1:
        raise TransportError("order p must be >= 1")
    if mu.size + nu.size > 10**4:
        raise TransportError("combined support above 10^4 atoms")
    cost, G = transport_lp(mu.weights, nu.weights, cost_matrix(mu, nu, p))
    return max(cost, 0.0) ** (1.0 / p), CouplingPlan(mu, nu, G)


# ---------------------------------------------------------------------------
# One dimension


def _prep_1d(x, w):
    x = np.asarray(x, dtype=float).reshape(-1)
    w = np.full(len(x), 1.0 / len(x)) if w is None else np.asarray(w, dtype=float)
    order = np.argsort(x, kind="stable")
    c = np.cumsum(w[order])
    c = c / c[-1]
    return x[order], c


def wasserstein_1d(xs, ys, p: float = 1.0, wx=None, wy=None) -> float:
    """W_p on the line via the quantile coupling (exact for discrete laws)."""
    x, cx = _prep_1d(xs, wx)
    y, cy = _prep_1d(ys, wy)
    u = np.union1d(cx, cy)
    du = np.diff(u, prepend=0.0)
    ix = np.minimum(np.searchsorted(cx, u, side="left"), len(x) - 1)
    iy = np.minimum(np.searchsorted(cy, u, side="left"), len(y) - 1)
    return float(np.sum(du * np.abs(x[ix] - y[iy]) ** p)) ** (1.0 / p)


def _law_cdf(law: Law1D, x: np.ndarray) -> np.ndarray:
    if law.name == "uniform":
        return np.clip(x, 0.0, 1.0)
    if law.name == "uniform_sym":
        return np.clip((x + 1.0) / 2.0, 0.0, 1.0)
    if law.name == "normal":
        return special.ndtr(x)
    if law.name == "exponential":
        return np.where(x > 0, -np.expm1(-np.maximum(x, 0.0)), 0.0)
    raise MeasureError(f"no cdf for {law.name}")


def wasserstein_to_law_1d(sample, law: Law1D | str, p: float = 1.0) -> float:
    """W_p between a registered continuous 1-D law and the empirical law of ``sample``.

    Exact for p in {1, 2} through the partial quantile integrals of the law;
    other orders split each quantile piece at F(x) and use 16-point
    Gauss-Legendre inside, adaptive quadrature on the two end pieces.
    """
    law = get_law(law) if isinstance(law, str) else law
    x = np.sort(np.asarray(sample, dtype=float).reshape(-1))
    if law.atoms is not None:
        ax = np.array([a[0] for a in law.atoms])
        aw = np.array([a[1] for a in law.atoms])
        return wasserstein_1d(x, ax, p, wy=aw)
    n = len(x)
    a = np.arange(n) / n
    b = np.arange(1, n + 1) / n
    if p == 1 and law.first is not None:
        c = np.clip(_law_cdf(law, x), a, b)
        G = law.first
        Ga, Gb, Gc = G(a), G(b), G(c)
        pieces = x * (c - a) - (Gc - Ga) + (Gb - Gc) - x * (b - c)
        return float(max(np.sum(pieces), 0.0))
    if p == 2 and law.second is not None:
        G, H = law.first, law.second
        pieces = (H(b) - H(a)) - 2 * x * (G(b) - G(a)) + x * x * (b - a)
        return float(max(np.sum(pieces), 0.0)) ** 0.5
    # split each piece where Q(u) = x so the integrand is smooth on both halves;
    # the two end pieces may carry an unbounded quantile and go to adaptive quad
    c = np.clip(_law_cdf(law, x), a, b)
    nodes, wts = np.polynomial.legendre.leggauss(16)
    val = 0.0
    for lo, hi in ((a[1:-1], c[1:-1]), (c[1:-1], b[1:-1])):
        u = lo[:, None] + (hi - lo)[:, None] * (nodes[None, :] + 1) / 2
        q = law.quantile(u)
        val += np.sum((hi - lo)[:, None] / 2 * wts[None, :] * np.abs(q - x[1:-1, None]) ** p)
    for i in {0, n - 1}:
        for lo, hi in ((a[i], c[i]), (c[i], b[i])):
            if hi > lo:
                # the quantile loses digits as u → 1; quad reports that as roundoff
                # although the integral is resolved well below the requested 1e-10
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", integrate.IntegrationWarning)
                    val += integrate.quad(lambda u: abs(float(law.quantile(u)) - x[i]) ** p, lo, hi,
                                          limit=200, epsabs=1e-13, epsrel=1e-10)[0]
    return float(val) ** (1.0 / p)


# ---------------------------------------------------------------------------
# Gaussian closed form


def _sym_sqrt(A: np.ndarray) -> np.ndarray:
    ev, U = np.linalg.eigh(A)
    return (U * np.sqrt(np.clip(ev, 0.0, None))[..., None, :]) @ np.swapaxes(U, -1, -2)


def _as_gaussian(g) -> GaussianMeasure:
    if isinstance(g, GaussianMeasure):
        return g
    if isinstance(g, DiscreteMeasure) and g.size == 1 and g.space is None:
        d = g.dim
        return GaussianMeasure(g.points[0], np.zeros((d, d)))
    raise TransportError("expected a Gaussian or a point mass on R^d")


def gaussian_w2_squared_batch(m0, V0, means, covs) -> np.ndarray:
    """W_2^2 between N(m0, V0) and each N(means[i], covs[i])."""
    m0 = np.asarray(m0, dtype=float)
    V0 = np.asarray(V0, dtype=float)
    S = _sym_sqrt(V0)
    M = S @ np.asarray(covs, dtype=float) @ S
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    ev = np.linalg.eigvalsh(M)
    cross = np.sum(np.sqrt(np.clip(ev, 0.0, None)), axis=-1)
    tr = np.trace(V0) + np.trace(covs, axis1=-2, axis2=-1)
    dm = np.sum((np.asarray(means) - m0) ** 2, axis=-1)
    return np.maximum(dm + tr - 2 * cross, 0.0)


def gaussian_w2(a, b) -> float:
    """Closed-form W_2 between Gaussians (point masses allowed)."""
    ga, gb = _as_gaussian(a), _as_gaussian(b)
    if ga.dim != gb.dim:
        raise TransportError("dimension mismatch")
    w2 = gaussian_w2_squared_batch(ga.mean, ga.cov, gb.mean[None], gb.cov[None])[0]
    return float(np.sqrt(w2))


# ---------------------------------------------------------------------------
# Dyadic upper bound

_MAX_LEVEL = 48


@dataclass(frozen=True)
class DyadicGrid:
    """Truncation levels of the dyadic bound and the moment used for the scale tail.

    ``moment`` bounds ∫|x|^β dμ + ∫|x|^β dν; when None it is computed from the
    measures themselves.
    """

    s_max: int
    l_max: int
    p: float
    beta: float
    moment: float | None = None

    def __post_init__(self):
        if self.s_max < 0 or self.l_max < 0:
            raise TransportError("grid levels must be nonnegative")
        if self.l_max > _MAX_LEVEL:
            raise TransportError(f"l_max above {_MAX_LEVEL} exceeds float resolution")
        if self.beta <= self.p:
            raise TransportError("moment order beta must exceed p")

    @classmethod
    def choose(cls, mu: DiscreteMeasure, nu: DiscreteMeasure, p: float,
               tol: float = 1e-8, delta: float = 1.0) -> "DyadicGrid":
        """Smallest levels whose discarded tails fall below ``tol``."""
        beta = 2 * p + delta
        pts = np.vstack([mu.points, nu.points])
        cover = int(np.max(annulus_index(pts)))
        moment = mu.abs_moment(beta) + nu.abs_moment(beta)
        s_max = 0
        while s_max < cover and k_pd(p, mu.dim) * _scale_tail(moment, p, beta, s_max) >= tol:
            s_max += 1
        l_max = 0
        while l_max < _MAX_LEVEL and 2 * 2.0 ** (-(l_max + 1) * p) / (1 - 2.0**-p) >= tol:
            l_max += 1
        return cls(s_max, l_max, p, beta, moment)


@dataclass(frozen=True)
class DyadicBound:
    value: float
    remainder: float
    grid: DyadicGrid

    @property
    def total(self) -> float:
        return self.value + self.remainder


def annulus_index(x: np.ndarray) -> np.ndarray:
    """Smallest s ≥ 0 with x ∈ (−2^s, 2^s]^d, computed exactly with frexp."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m, e = np.frexp(np.abs(x))
    pos = x > 0
    # x > 0 needs 2^s >= x; x < 0 needs 2^s > |x|
    s = np.where(pos & (m == 0.5), e - 1, e)
    s = np.where(x == 0, 0, s)
    return np.maximum(np.max(s, axis=1), 0)


def _scale_tail(moment: float, p: float, beta: float, s_max: int) -> float:
    """Markov bound on the contribution of all annuli beyond s_max."""
    if moment == 0:
        return 0.0
    q = 2.0 ** (-(beta - p))
    return (moment * 2.0**beta * q ** (s_max + 1)
            / ((1 - 2.0**-p) * (1 - q)))


def dyadic_upper_bound(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float,
                       grid: DyadicGrid | None = None) -> DyadicBound:
    """Dyadic-partition upper bound on W_p(μ, ν)^p.

    Returns the truncated double sum (with the exactly computable level tail
    folded in where atoms are already separated) and a remainder that bounds
    everything discarded.
    """
    if mu.space is not None or not mu.on_same_space(nu):
        raise TransportError("dyadic bound needs two measures on the same R^d")
    grid = grid or DyadicGrid.choose(mu, nu, p)
    if grid.p != p:
        raise TransportError("grid order differs from p")
    d = mu.dim
    K = k_pd(p, d)
    pts = np.vstack([mu.points, nu.points])
    sw = np.concatenate([mu.weights, -nu.weights])
    aw = np.concatenate([mu.weights, nu.weights])
    ux, inv = np.unique(pts, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    sw = np.bincount(inv, weights=sw, minlength=len(ux))
    aw = np.bincount(inv, weights=aw, minlength=len(ux))

    s = annulus_index(ux)
    inside = s <= grid.s_max
    ux, sw, aw, s = ux[inside], sw[inside], aw[inside], s[inside]
    moment = grid.moment
    if moment is None:
        moment = mu.abs_moment(grid.beta) + nu.abs_moment(grid.beta)
    if not np.isfinite(moment):
        raise TransportError("scale tail needs a finite moment")
    remainder = K * _scale_tail(moment, p, grid.beta, grid.s_max) if np.any(~inside) else 0.0

    L = grid.l_max
    y = np.ldexp(ux, -s[:, None])
    jL = np.ceil((y + 1.0) * 2.0 ** (L - 1)).astype(np.int64) - 1
    jL = np.clip(jL, 0, 2**L - 1)
    geo = 1.0 / (1.0 - 2.0**-p)
    value = 0.0
    for sc in np.unique(s):
        sel = s == sc
        w_s, j_s = sw[sel], jL[sel]
        scale = 2.0 ** (p * sc)
        total = 0.0
        last = 0.0
        for lev in range(L + 1):
            _, cell = np.unique(j_s >> (L - lev), axis=0, return_inverse=True)
            cell = cell.reshape(-1)
            last = float(np.sum(np.abs(np.bincount(cell, weights=w_s))))
            total += 2.0 ** (-lev * p) * last
            if lev == L:
                separated = cell.max() + 1 == len(w_s)
        tail = 2.0 ** (-(L + 1) * p) * geo
        if separated:
            total += tail * last
        else:
            remainder += K * scale * tail * float(np.sum(aw[sel]))
        value += K * scale * total
    return DyadicBound(value, remainder, grid)


# ---------------------------------------------------------------------------
# Nested distance


@dataclass(frozen=True, eq=False)
class MetaMeasure:
    """A finitely supported law over DiscreteMeasures on one shared space."""

    atoms: tuple
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        atoms = tuple(self.atoms)
        if len(atoms) != len(w) or len(w) == 0:
            raise TransportError("atoms and weights must be nonempty and aligned")
        if np.any(w < 0) or abs(w.sum() - 1) >= 1e-12:
            raise TransportError("meta-measure weights must sum to 1")
        if any(not atoms[0].on_same_space(a) for a in atoms[1:]):
            raise TransportError("inner measures must share one space")
        w.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)

    @classmethod
    def dirac(cls, mu: DiscreteMeasure) -> "MetaMeasure":
        return cls((mu,), np.ones(1))


def ground_matrix(A: MetaMeasure, B: MetaMeasure, p: float, workers: int = 1) -> np.ndarray:
    """Inner W_p between every pair of atoms, filled in a fixed layout."""
    pairs = [(i, j) for i in range(len(A.atoms)) for j in range(len(B.atoms))]

    def one(ij):
        return wasserstein_exact(A.atoms[ij[0]], B.atoms[ij[1]], p)[0]

    if workers > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            vals = list(ex.map(one, pairs))
    else:
        vals = [one(ij) for ij in pairs]
    return np.asarray(vals, dtype=float).reshape(len(A.atoms), len(B.atoms))


def nested_distance(A: MetaMeasure, B: MetaMeasure, p: float = 1.0, workers: int = 1) -> float:
    """Outer W_p between meta-measures with the inner W_p as ground metric."""
    if not A.atoms[0].on_same_space(B.atoms[0]):
        raise TransportError("meta-measures live over different spaces")
    D = ground_matrix(A, B, p, workers)
    cost, _ = transport_lp(A.weights, B.weights, D**p)
    return max(cost, 0.0) ** (1.0 / p)
