"""Exchangeable sequences and posterior distances.

Exact finite-space machinery (Dirichlet posteriors, Dirichlet-multinomial
and multinomial predictive laws, nested distances) for checking the
predictive inequality, and conjugate experiments for the Bayesian rates.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import integrate, special

from .measures import (
    DiscreteMeasure,
    FiniteSpace,
    GaussianMeasure,
    SampleTrajectory,
    derive_seed,
    make_rng,
    running_gaussian_mle,
    sample_iid,
)
from .rates.nonparametric import HypothesisError, yp_nonparametric
from .rates.gaussian import y2_gauss
from .rates.schedule import RateSchedule, evaluation_grid, rate_b, tail_window
from .transport import MetaMeasure, gaussian_w2_squared_batch, nested_distance, wasserstein_exact

MAX_COMPOSITIONS = 10_000
SIMPSON_TOL = 1e-12
QUAD3_TOL = 1e-9


class BayesError(ValueError):
    pass


# ---------------------------------------------------------------------------
# priors


@dataclass(frozen=True, eq=False)
class DirichletFiniteModel:
    space: FiniteSpace
    alpha: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        if a.shape != (self.space.k,) or np.any(~(a > 0)):
            raise BayesError("alpha must be a positive vector with one entry per point")
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)


@dataclass(frozen=True, eq=False)
class PointMassPrior:
    """δ_{p₀}: the observations are i.i.d. p₀."""

    p0: DiscreteMeasure | GaussianMeasure


@dataclass(frozen=True, eq=False)
class NIWPrior:
    """Normal-Inverse-Wishart: Ṽ ~ IW(ν, Ψ), m̃ | Ṽ ~ N(m₀, Ṽ/κ)."""

    mean: np.ndarray
    kappa: float
    scale: np.ndarray
    dof: float

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        P = np.atleast_2d(np.asarray(self.scale, dtype=float))
        d = len(m)
        if P.shape != (d, d) or not np.allclose(P, P.T) or np.linalg.eigvalsh(P)[0] <= 0:
            raise BayesError("scale must be a positive definite d x d matrix")
        if not self.kappa > 0 or not self.dof > d - 1:
            raise BayesError("need kappa > 0 and dof > d - 1")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "scale", P)

    @property
    def d(self) -> int:
        return len(self.mean)

    def check_moment(self):
        """E‖Ṽ‖_F < ∞ iff the inverse-Wishart mean exists, i.e. ν > d + 1."""
        if not self.dof > self.d + 1:
            raise HypothesisError("rho[||V||_F] < inf (requires dof > d + 1)")


@dataclass(frozen=True, eq=False)
class NormalLocationPrior:
    """θ̃ ~ N(mean, var); observations N(θ̃, noise_var)."""

    mean: float
    var: float
    noise_var: float = 1.0

    def __post_init__(self):
        if not (self.var > 0 and self.noise_var > 0):
            raise BayesError("variances must be positive")


def _wishart_bartlett(rng, dof: float, scale: np.ndarray) -> np.ndarray:
    """W ~ Wishart(dof, scale) via the Bartlett decomposition."""
    d = scale.shape[0]
    L = np.linalg.cholesky(scale)
    A = np.zeros((d, d))
    A[np.diag_indices(d)] = np.sqrt(rng.chisquare(dof - np.arange(d)))
    A[np.tril_indices(d, -1)] = rng.standard_normal(d * (d - 1) // 2)
    LA = L @ A
    return LA @ LA.T


def sample_niw(rng, mean, kappa, scale, dof) -> tuple[np.ndarray, np.ndarray]:
    W = _wishart_bartlett(rng, dof, np.linalg.inv(scale))
    V = np.linalg.inv(W)
    V = 0.5 * (V + V.T)
    m = mean + np.linalg.cholesky(V / kappa) @ rng.standard_normal(len(mean))
    return m, V


def sample_niw_batch(rng, mean, kappa, scale, dof, size: int) -> tuple[np.ndarray, np.ndarray]:
    """``size`` independent NIW draws, vectorized Bartlett construction."""
    d = len(mean)
    L = np.linalg.cholesky(np.linalg.inv(scale))
    A = np.zeros((size, d, d))
    A[:, np.arange(d), np.arange(d)] = np.sqrt(rng.chisquare(dof - np.arange(d), (size, d)))
    il = np.tril_indices(d, -1)
    A[:, il[0], il[1]] = rng.standard_normal((size, len(il[0])))
    LA = L @ A
    V = np.linalg.inv(LA @ np.swapaxes(LA, 1, 2))
    V = 0.5 * (V + np.swapaxes(V, 1, 2))
    z = rng.standard_normal((size, d))
    m = mean + np.einsum("sij,sj->si", np.linalg.cholesky(V / kappa), z)
    return m, V


def definetti_sample(prior, n: int, seed: int):
    """Draw p̃ ~ π, then ξ₁..ξ_n i.i.d. p̃. Returns (p̃, trajectory)."""
    rng = make_rng(derive_seed(seed, 0))
    traj_seed = derive_seed(seed, 1)
    if isinstance(prior, DirichletFiniteModel):
        w = rng.dirichlet(prior.alpha)
        keep = np.flatnonzero(w > 0)
        w = w[keep] / w[keep].sum()
        latent = DiscreteMeasure(keep, w, prior.space)
        return latent, sample_iid(latent, n, traj_seed, space=prior.space)
    if isinstance(prior, PointMassPrior):
        p0 = prior.p0
        space = p0.space if isinstance(p0, DiscreteMeasure) else None
        return p0, sample_iid(p0, n, traj_seed, space=space)
    if isinstance(prior, NIWPrior):
        m, V = sample_niw(rng, prior.mean, prior.kappa, prior.scale, prior.dof)
        latent = GaussianMeasure(m, V)
        return latent, sample_iid(latent, n, traj_seed)
    if isinstance(prior, NormalLocationPrior):
        th = prior.mean + math.sqrt(prior.var) * rng.standard_normal()
        latent = GaussianMeasure([th], [[prior.noise_var]])
        return latent, sample_iid(latent, n, traj_seed)
    raise BayesError(f"unregistered prior {type(prior).__name__}")


# ---------------------------------------------------------------------------
# finite-space posterior


@dataclass(frozen=True, eq=False)
class PosteriorState:
    model: DirichletFiniteModel | PointMassPrior
    counts: np.ndarray
    n: int

    @property
    def alpha(self) -> np.ndarray:
        if not isinstance(self.model, DirichletFiniteModel):
            raise BayesError("only Dirichlet posteriors have concentration parameters")
        return self.model.alpha + self.counts

    @property
    def space(self) -> FiniteSpace:
        if isinstance(self.model, DirichletFiniteModel):
            return self.model.space
        return self.model.p0.space


def _counts(space: FiniteSpace, traj, n: int) -> np.ndarray:
    x = traj.draws if isinstance(traj, SampleTrajectory) else np.asarray(traj)
    x = np.asarray(x).reshape(-1)[:n]
    if len(x) < n:
        raise BayesError(f"trajectory shorter than n={n}")
    if x.dtype.kind not in "iu":
        x = np.array([space.index(v) for v in x.tolist()], dtype=np.int64)
    if np.any(x < 0) or np.any(x >= space.k):
        raise BayesError("observation outside the finite space")
    return np.bincount(x, minlength=space.k).astype(float)


def posterior_update(model, traj, n: int) -> PosteriorState:
    """Dirichlet(α + counts of ξ₁..ξ_n); the point-mass prior is left unchanged."""
    if n < 0:
        raise BayesError("n must be >= 0")
    if isinstance(model, DirichletFiniteModel):
        space = model.space
    elif isinstance(model, PointMassPrior) and isinstance(model.p0, DiscreteMeasure) and model.p0.space:
        space = model.p0.space
    else:
        raise BayesError("posterior_update needs a finite-space model")
    counts = _counts(space, traj, n) if n > 0 else np.zeros(space.k)
    return PosteriorState(model, counts, int(n))


def plugin_measure(post: PosteriorState, traj=None) -> DiscreteMeasure:
    """Empirical measure of the observations; uniform on the space when n = 0."""
    k = post.space.k
    w = post.counts / post.n if post.n > 0 else np.full(k, 1.0 / k)
    keep = np.flatnonzero(w > 0)
    return DiscreteMeasure(keep, w[keep] / w[keep].sum(), post.space)


# ---------------------------------------------------------------------------
# posterior-to-plug-in distance


def beta_abs_dev(a, b, q):
    """E|X − q| for X ~ Beta(a, b), via regularized incomplete beta functions."""
    a, b, q = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), np.asarray(q, float))
    mean = a / (a + b)
    F = special.betainc(a, b, q)
    G = special.betainc(a + 1, b, q)
    return q * (2 * F - 1) - mean * (2 * G - 1)


def _simpson(f, a: float, b: float, tol: float, min_depth: int = 4) -> float:
    """Adaptive Simpson quadrature with Richardson correction.

    The first ``min_depth`` levels always subdivide, which guards against a
    coarse estimate agreeing with its halves by accident.
    """

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6 * (fa + 4 * flm + fm)
        right = (b - m) / 6 * (fm + 4 * frm + fb)
        if depth <= 0 or (depth <= 50 - min_depth and abs(left + right - whole) <= 15 * tol):
            return left + right + (left + right - whole) / 15
        return (rec(a, m, fa, flm, fm, left, tol / 2, depth - 1)
                + rec(m, b, fm, frm, fb, right, tol / 2, depth - 1))

    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6 * (fa + 4 * fm + fb)
    return rec(a, b, fa, fm, fb, whole, tol, 50)


def _beta_abs_dev_simpson(a: float, b: float, q: float, tol: float = SIMPSON_TOL) -> float:
    """E|X − q| = ∫₀^q F + ∫_q^1 (1 − F), integrated piecewise between Beta quantiles."""
    probs = [1e-12, 1e-6, 1e-3, 0.02, 0.1, 0.3, 0.5, 0.7, 0.9, 0.98, 1 - 1e-3, 1 - 1e-6, 1 - 1e-12]
    cuts = set(special.betaincinv(a, b, probs).tolist()) | {0.0, 1.0, float(q)}
    cuts = sorted(c for c in cuts if 0.0 <= c <= 1.0)
    F = lambda x: special.betainc(a, b, x)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        if hi <= q:
            total += _simpson(F, lo, hi, tol)
        else:
            total += _simpson(lambda x: 1.0 - F(x), lo, hi, tol)
    return total


def _dual_vertices(C: np.ndarray) -> np.ndarray:
    """Vertices (u, v) of {u_i + v_j ≤ C_ij, u₀ = 0} for a square cost matrix,
    one per dual-feasible spanning tree of the bipartite graph."""
    k = C.shape[0]
    edges = [(i, j) for i in range(k) for j in range(k)]
    out = []
    for tree in itertools.combinations(edges, 2 * k - 1):
        A = np.zeros((2 * k, 2 * k))
        rhs = np.zeros(2 * k)
        for r, (i, j) in enumerate(tree):
            A[r, i] = 1
            A[r, k + j] = 1
            rhs[r] = C[i, j]
        A[-1, 0] = 1
        if abs(np.linalg.det(A)) < 0.5:  # incidence matrices are unimodular
            continue
        uv = np.linalg.solve(A, rhs)
        if np.all(uv[:k, None] + uv[None, k:] <= C + 1e-12):
            out.append(uv)
    return np.unique(np.round(np.asarray(out), 14), axis=0)


def _envelope_expectation(lines_A: np.ndarray, lines_B: np.ndarray, a2: float, a3: float) -> float:
    """E[max_j (A_j + B_j S)] for S ~ Beta(a2, a3), exact via breakpoints."""
    bps = {0.0, 1.0}
    for i in range(len(lines_A)):
        for j in range(i + 1, len(lines_A)):
            dB = lines_B[i] - lines_B[j]
            if dB != 0:
                s = (lines_A[j] - lines_A[i]) / dB
                if 0 < s < 1:
                    bps.add(float(s))
    bps = np.array(sorted(bps))
    mids = 0.5 * (bps[:-1] + bps[1:])
    best = np.argmax(lines_A[None, :] + lines_B[None, :] * mids[:, None], axis=1)
    F0 = special.betainc(a2, a3, bps)
    F1 = special.betainc(a2 + 1, a3, bps)
    m1 = a2 / (a2 + a3)
    return float(np.sum(lines_A[best] * np.diff(F0) + lines_B[best] * m1 * np.diff(F1)))


def _dirichlet3_expected_cost(alpha: np.ndarray, q: np.ndarray, C: np.ndarray) -> float:
    """E[W_p^p(P, q)] for P ~ Dir(α) on 3 points, W_p^p(·, q) written as a
    maximum of affine functions (dual vertices of the transport LP)."""
    V = _dual_vertices(C)
    u, v = V[:, :3], V[:, 3:]
    const = v @ q
    a1, a2, a3 = (float(x) for x in alpha)

    def inner(x):
        # P = (x, (1−x)s, (1−x)(1−s)), S ~ Beta(a2, a3) given x
        A = const + u[:, 0] * x + u[:, 2] * (1 - x)
        B = (u[:, 1] - u[:, 2]) * (1 - x)
        return _envelope_expectation(A, B, a2, a3)

    # the envelope is piecewise smooth in x, with kinks where a pairwise line
    # crossing enters or leaves s ∈ [0, 1]; integrate piece by piece
    kinks = {0.0, 1.0}
    A0, A1 = const + u[:, 2], u[:, 0] - u[:, 2]  # A = A0 + A1 x
    Bc = u[:, 1] - u[:, 2]  # B = Bc (1 − x)
    for i in range(len(V)):
        for j in range(i + 1, len(V)):
            # A_i + B_i s = A_j + B_j s at s ∈ {0, 1} is linear in x
            for sv in (0.0, 1.0):
                c0 = A0[i] - A0[j] + sv * (Bc[i] - Bc[j])
                c1 = A1[i] - A1[j] - sv * (Bc[i] - Bc[j])
                if c1 != 0 and 0 < -c0 / c1 < 1:
                    kinks.add(float(-c0 / c1))
    xs = sorted(kinks)
    b1 = a2 + a3
    val = err = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for lo, hi in zip(xs[:-1], xs[1:]):
            if hi - lo < 1e-15:
                continue
            # the Beta weight's endpoint singularities go to QUADPACK's algebraic weight
            wl = a1 - 1 if lo == 0.0 else 0.0
            wr = b1 - 1 if hi == 1.0 else 0.0
            f = lambda x, wl=wl, wr=wr: (inner(x) * (x ** (a1 - 1) if wl == 0 else 1.0)
                                         * ((1 - x) ** (b1 - 1) if wr == 0 else 1.0))
            if wl == 0 and wr == 0:
                v, e = integrate.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-11, limit=200)
            else:
                v, e = integrate.quad(f, lo, hi, weight="alg", wvar=(wl, wr), epsabs=1e-13, epsrel=1e-11,
                                      limit=200)
            val += v
            err += e
    norm = math.exp(special.betaln(a1, b1))
    if not err / norm <= QUAD3_TOL:
        raise BayesError(f"3-point posterior quadrature error {err / norm:.2e} above {QUAD3_TOL:.0e}")
    return val / norm


@dataclass(frozen=True)
class DistanceEstimate:
    value: float
    stderr: float = 0.0


def posterior_plugin_distance(post: PosteriorState, plugin: DiscreteMeasure, p: float = 1.0,
                              method: str = "auto", samples: int = 20_000, seed: int = 0,
                              tol: float | None = None) -> float:
    """(∫ W_p(P, p̂)^p π(dP))^{1/p} between the posterior and the plug-in point mass."""
    return posterior_plugin_distance_estimate(post, plugin, p, method, samples, seed, tol).value


def posterior_plugin_distance_estimate(post: PosteriorState, plugin: DiscreteMeasure, p: float = 1.0,
                                       method: str = "auto", samples: int = 20_000, seed: int = 0,
                                       tol: float | None = None) -> DistanceEstimate:
    if plugin.space is not post.space:
        raise BayesError("plug-in must live on the posterior's space")
    if isinstance(post.model, PointMassPrior):
        return DistanceEstimate(wasserstein_exact(post.model.p0, plugin, p)[0])
    k = post.space.k
    alpha = post.alpha
    q = plugin.dense_weights()
    C = post.space.metric**p
    if method == "auto":
        method = "quadrature" if k <= 3 else "mc"
    if method == "quadrature":
        if k == 1:
            return DistanceEstimate(0.0)
        if k == 2:
            e = _beta_abs_dev_simpson(alpha[0], alpha[1], q[0])
            return DistanceEstimate((C[0, 1] * e) ** (1 / p))
        if k == 3:
            return DistanceEstimate(max(_dirichlet3_expected_cost(alpha, q, C), 0.0) ** (1 / p))
        raise BayesError("quadrature is available for k <= 3 only")
    if method != "mc":
        raise BayesError(f"unknown method {method!r}")
    rng = make_rng(seed)
    P = rng.dirichlet(alpha, samples)
    vals = np.empty(samples)
    for i, w in enumerate(P):
        keep = np.flatnonzero(w > 0)
        mu = DiscreteMeasure(keep, w[keep] / w[keep].sum(), post.space)
        vals[i] = wasserstein_exact(mu, plugin, p)[0] ** p
    mean = float(vals.mean())
    se_p = float(vals.std(ddof=1) / math.sqrt(samples))
    value = mean ** (1 / p)
    se = se_p / (p * max(mean, 1e-300) ** (1 - 1 / p)) if mean > 0 else se_p
    if tol is not None and se > tol:
        raise BayesError(f"MC standard error {se:.3e} above tolerance {tol:.3e}")
    return DistanceEstimate(value, se)


# ---------------------------------------------------------------------------
# predictive laws


def compositions(m: int, k: int) -> np.ndarray:
    """All k-vectors of nonnegative integers summing to m, lexicographically."""
    count = math.comb(m + k - 1, k - 1)
    if count > MAX_COMPOSITIONS:
        raise BayesError(f"{count} compositions exceed the limit {MAX_COMPOSITIONS}")
    out = []
    for bars in itertools.combinations(range(m + k - 1), k - 1):
        b = (-1,) + bars + (m + k - 1,)
        out.append([b[i + 1] - b[i] - 1 for i in range(k)])
    return np.asarray(out[::-1], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class PredictiveLaw:
    """Law of the empirical measure ẽ_{n,m} of the next m observations."""

    m: int
    space: FiniteSpace
    comps: np.ndarray
    probs: np.ndarray
    measures: tuple = field(repr=False, default=())

    def __post_init__(self):
        if abs(self.probs.sum() - 1) >= 1e-12:
            raise BayesError("predictive probabilities must sum to 1")
        if not self.measures:
            ms = []
            for c in self.comps:
                keep = np.flatnonzero(c)
                ms.append(DiscreteMeasure(keep, c[keep] / self.m, self.space))
            object.__setattr__(self, "measures", tuple(ms))

    def meta(self) -> MetaMeasure:
        return MetaMeasure(self.measures, self.probs)


def _normalized(logp: np.ndarray) -> np.ndarray:
    p = np.exp(logp - logp.max())
    return p / p.sum()


def predictive_exact(post: PosteriorState, m: int) -> PredictiveLaw:
    """Dirichlet-multinomial law of the counts of the next m draws."""
    if m < 1:
        raise BayesError("m must be >= 1")
    if isinstance(post.model, PointMassPrior):
        return bootstrap_predictive(post.model.p0, m)
    a = post.alpha
    C = compositions(m, len(a))
    logp = (special.gammaln(m + 1) - special.gammaln(C + 1).sum(axis=1)
            + special.gammaln(a.sum()) - special.gammaln(a.sum() + m)
            + (special.gammaln(a + C) - special.gammaln(a)).sum(axis=1))
    return PredictiveLaw(m, post.space, C, _normalized(logp))


def bootstrap_predictive(plugin: DiscreteMeasure, m: int) -> PredictiveLaw:
    """Multinomial(m, plug-in) law of the counts of m i.i.d. draws."""
    if m < 1:
        raise BayesError("m must be >= 1")
    if plugin.space is None:
        raise BayesError("bootstrap_predictive needs a finite-space measure")
    w = plugin.dense_weights()
    C = compositions(m, len(w))
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    terms = np.where(C > 0, C * np.where(w > 0, logw, 0.0), 0.0)
    terms[np.any((C > 0) & (w == 0), axis=1)] = -np.inf
    logp = special.gammaln(m + 1) - special.gammaln(C + 1).sum(axis=1) + terms.sum(axis=1)
    return PredictiveLaw(m, plugin.space, C, _normalized(logp))


def mixture_predictive(zeta: Mapping | list, m: int) -> PredictiveLaw:
    """Law of ẽ_{n,m} under ρ[ζ] for ζ = Σ α_j δ_{p_j}: Σ α_j Multinomial(m, p_j)."""
    atoms, weights = zip(*zeta)
    laws = [bootstrap_predictive(a, m) for a in atoms]
    probs = sum(w * L.probs for w, L in zip(weights, laws))
    return PredictiveLaw(m, laws[0].space, laws[0].comps, probs / probs.sum(), laws[0].measures)


# ---------------------------------------------------------------------------
# checks


@dataclass(frozen=True)
class InequalityCheck:
    lhs: float
    rhs: float
    holds: bool
    slack: float = 0.0


def check_savare1(post: PosteriorState, plugin: DiscreteMeasure, m: int, p: float = 1.0,
                  tol: float = 1e-7) -> InequalityCheck:
    """d(q_m, p̂^∞∘ẽ⁻¹) ≤ d(π(ξ^(n)), δ_{p̂_n}), both sides computed exactly."""
    lhs = nested_distance(predictive_exact(post, m).meta(), bootstrap_predictive(plugin, m).meta(), p)
    est = posterior_plugin_distance_estimate(post, plugin, p)
    slack = tol + 3 * est.stderr
    return InequalityCheck(lhs, est.value, lhs <= est.value + slack, slack)


def check_birkhoff(zeta: list, p0: DiscreteMeasure, m: int, p: float = 1.0,
                   tol: float = 1e-7) -> InequalityCheck:
    """d(ρ[ζ]∘ẽ⁻¹, p₀^∞∘ẽ⁻¹) ≤ d(ζ, δ_{p₀}) for a finitely supported ζ."""
    lhs = nested_distance(mixture_predictive(zeta, m).meta(), bootstrap_predictive(p0, m).meta(), p)
    atoms, weights = zip(*zeta)
    rhs = nested_distance(MetaMeasure(atoms, np.asarray(weights, float)), MetaMeasure.dirac(p0), p)
    return InequalityCheck(lhs, rhs, lhs <= rhs + tol, tol)


def kr_functional_bound(post: PosteriorState, plugin: DiscreteMeasure,
                        g: Callable[[DiscreteMeasure], float], lip: float,
                        samples: int = 20_000, seed: int = 0, tol: float = 1e-7) -> InequalityCheck:
    """|E[g(P) | data] − g(p̂)| ≤ Lip(g) · d^{(1)}(π(ξ^(n)), δ_{p̂})."""
    space = post.space
    rhs_est = posterior_plugin_distance_estimate(post, plugin, 1.0)
    rhs = lip * rhs_est.value

    def g_of(w):
        keep = np.flatnonzero(w > 0)
        return g(DiscreteMeasure(keep, w[keep] / w[keep].sum(), space))

    se = 0.0
    if isinstance(post.model, PointMassPrior):
        Eg = g(post.model.p0)
    elif space.k == 2:
        a = post.alpha
        val, _ = integrate.quad(lambda x: g_of(np.array([x, 1 - x])), 0, 1, weight="alg",
                                wvar=(a[0] - 1, a[1] - 1), epsabs=1e-13, epsrel=1e-11, limit=200)
        Eg = val / math.exp(special.betaln(a[0], a[1]))
    else:
        P = make_rng(seed).dirichlet(post.alpha, samples)
        vals = np.array([g_of(w) for w in P])
        Eg = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(samples))
    lhs = abs(Eg - g(plugin))
    slack = tol + 3 * (se + lip * rhs_est.stderr)
    return InequalityCheck(lhs, rhs, lhs <= rhs + slack, slack)


# ---------------------------------------------------------------------------
# Bayesian rate experiments


@dataclass
class BayesReplica:
    replica: int
    rows: list  # (n, b_n, distance, bound)
    tail_max: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.tail_max <= self.bound


@dataclass
class BayesExperimentReport:
    model: str
    N: int
    replicas: list

    @property
    def fraction(self) -> float:
        return float(np.mean([r.holds for r in self.replicas]))

    def csv_rows(self):
        for r in self.replicas:
            for n, b, dist, bound in r.rows:
                yield r.replica, n, b, dist, bound


def _line_posterior_w1(alpha_post: np.ndarray, xs: np.ndarray, plugin_cdf: np.ndarray) -> float:
    """E_post W₁(P, p̂) on sorted points of the line: Σ Δx_i E|F_P(x_i) − F̂(x_i)|,
    where F_P(x_i) ~ Beta(A_i, A − A_i) with A_i the cumulative concentration."""
    A = np.cumsum(alpha_post)[:-1]
    tot = alpha_post.sum()
    return float(np.sum(np.diff(xs) * beta_abs_dev(A, tot - A, plugin_cdf[:-1])))


def _experiment_nonparametric(prior: DirichletFiniteModel, N, replicas, seed, delta):
    xs = np.asarray(prior.space.labels, dtype=float)
    if np.any(np.diff(xs) <= 0):
        raise BayesError("the nonparametric experiment needs sorted points on the line")
    grid = evaluation_grid(N)
    b = rate_b(grid, RateSchedule(1, "nonparametric"))
    tail = tail_window(grid, N)
    out = []
    for rep in range(replicas):
        latent, traj = definetti_sample(prior, N, derive_seed(seed, rep))
        x = np.asarray(traj.draws).reshape(-1)
        moment = float(latent.weights @ np.abs(xs[latent.points]) ** (2 + delta))
        Y = yp_nonparametric(1, 1, delta, moment).value
        onehot = np.zeros((N, prior.space.k))
        onehot[np.arange(N), x] = 1
        cum = np.cumsum(onehot, axis=0)
        rows = []
        for n, bn in zip(grid, b):
            c = cum[n - 1]
            d = _line_posterior_w1(prior.alpha + c, xs, np.cumsum(c) / n)
            rows.append((int(n), float(bn), d, Y))
        stat = max(r[1] * r[2] for r, t in zip(rows, tail) if t)
        out.append(BayesReplica(rep, rows, float(stat), Y))
    return out


def _niw_posterior(prior: NIWPrior, n, mean, cov):
    kn = prior.kappa + n
    mn = (prior.kappa * prior.mean + n * mean) / kn
    dm = mean - prior.mean
    Pn = prior.scale + n * cov + prior.kappa * n / kn * np.outer(dm, dm)
    return mn, kn, 0.5 * (Pn + Pn.T), prior.dof + n


def _experiment_gaussian(prior: NIWPrior, N, replicas, seed, draws_per_n):
    prior.check_moment()
    d = prior.d
    grid = evaluation_grid(N, start=d + 1)
    b = rate_b(grid, RateSchedule(1, "parametric"))
    tail = tail_window(grid, N)
    out = []
    for rep in range(replicas):
        rs = derive_seed(seed, rep)
        latent, traj = definetti_sample(prior, N, rs)
        Y = y2_gauss(latent.cov).value
        means, covs = running_gaussian_mle(traj.draws)
        rng = make_rng(derive_seed(rs, 2))
        rows = []
        for n, bn in zip(grid, b):
            mn, kn, Pn, nun = _niw_posterior(prior, n, means[n - 1], covs[n - 1])
            ms, Vs = sample_niw_batch(rng, mn, kn, Pn, nun, draws_per_n)
            w2 = gaussian_w2_squared_batch(means[n - 1], covs[n - 1], ms, Vs)
            rows.append((int(n), float(bn), float(math.sqrt(max(w2.mean(), 0.0))), Y))
        stat = max(r[1] * r[2] for r, t in zip(rows, tail) if t)
        out.append(BayesReplica(rep, rows, float(stat), Y))
    return out


def _experiment_expfam(prior: NormalLocationPrior, N, replicas, seed):
    from .expfam import gaussian_location, y2_expfam

    s2 = prior.noise_var
    fam = gaussian_location(s2)
    grid = evaluation_grid(N)
    b = rate_b(grid, RateSchedule(1, "parametric"))
    tail = tail_window(grid, N)
    out = []
    for rep in range(replicas):
        latent, traj = definetti_sample(prior, N, derive_seed(seed, rep))
        th = float(latent.mean[0])
        # W₂ between N(θ, s²) laws is |θ − θ'|; C_T = 2s² for the Gaussian location family
        Y = y2_expfam(fam, [th], 2 * s2).value
        x = np.asarray(traj.draws, dtype=float).reshape(-1)
        xbar = np.cumsum(x)[grid - 1] / grid
        prec = 1 / prior.var + grid / s2
        mpost = (prior.mean / prior.var + grid * xbar / s2) / prec
        dist = np.sqrt((mpost - xbar) ** 2 + 1 / prec)
        rows = [(int(n), float(bn), float(dd), Y) for n, bn, dd in zip(grid, b, dist)]
        stat = float(np.max((b * dist)[tail]))
        out.append(BayesReplica(rep, rows, stat, Y))
    return out


def bayes_rate_experiment(model, N: int, replicas: int, seed: int, delta: float = 1.0,
                          draws_per_n: int = 64) -> BayesExperimentReport:
    """Per replica: draw p̃, run the trajectory, and compare the tail maximum of
    b_n · d(π(ξ^(n)), δ_{p̂_n}) over [N/2, N] with Y(p̃)."""
    if isinstance(model, DirichletFiniteModel):
        reps, name = _experiment_nonparametric(model, N, replicas, seed, delta), "nonparametric"
    elif isinstance(model, NIWPrior):
        reps, name = _experiment_gaussian(model, N, replicas, seed, draws_per_n), "gaussian"
    elif isinstance(model, NormalLocationPrior):
        reps, name = _experiment_expfam(model, N, replicas, seed), "expfam"
    else:
        raise BayesError(f"unregistered prior {type(model).__name__}")
    return BayesExperimentReport(name, N, reps)


def prior_from_config(cfg: Mapping):
    """{"kind": "dirichlet", "points": [...], "alpha": [...]} | {"kind": "niw", ...} |
    {"kind": "normal_location", ...}."""
    kind = cfg.get("kind")
    if kind == "dirichlet":
        pts = cfg["points"]
        space = FiniteSpace.on_line(pts)
        alpha = cfg.get("alpha", [1.0] * len(pts))
        return DirichletFiniteModel(space, np.asarray(alpha, dtype=float))
    if kind == "niw":
        return NIWPrior(np.asarray(cfg["mean"], float), float(cfg["kappa"]),
                        np.asarray(cfg["scale"], float), float(cfg["dof"]))
    if kind == "normal_location":
        return NormalLocationPrior(float(cfg["mean"]), float(cfg["var"]), float(cfg.get("noise_var", 1.0)))
    raise BayesError(f"unknown prior kind {kind!r}")
