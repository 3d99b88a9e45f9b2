"""Probability measures on R^d and on finite metric spaces, plus seeded sampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np
from scipy import special, stats

MERGE_TOL = 1e-12
WEIGHT_TOL = 1e-12


class MeasureError(ValueError):
    """Raised for malformed measures or descriptors."""


# ---------------------------------------------------------------------------
# Seeds


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def derive_seed(master: int, index: int) -> int:
    """Per-replica seed as a hash of (master, index)."""
    ss = np.random.SeedSequence([int(master) & (2**64 - 1), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# Spaces and measures


@dataclass(frozen=True, eq=False)
class FiniteSpace:
    """A finite metric space: labelled points and a distance matrix."""

    labels: tuple
    metric: np.ndarray

    def __post_init__(self):
        D = np.asarray(self.metric, dtype=float)
        k = len(self.labels)
        if D.shape != (k, k):
            raise MeasureError(f"metric must be {k}x{k}, got {D.shape}")
        if np.any(D < 0) or np.any(np.diag(D) != 0):
            raise MeasureError("metric must be nonnegative with zero diagonal")
        if not np.array_equal(D, D.T):
            raise MeasureError("metric must be symmetric")
        # triangle inequality: D[i,j] <= D[i,l] + D[l,j]
        viol = D[:, None, :] - (D[:, :, None] + D[None, :, :])
        if np.max(viol) > 1e-12 * max(1.0, D.max()):
            raise MeasureError("metric violates the triangle inequality")
        D.setflags(write=False)
        object.__setattr__(self, "metric", D)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def k(self) -> int:
        return len(self.labels)

    def index(self, label) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise MeasureError(f"{label!r} is not a point of the space") from None

    @classmethod
    def discrete(cls, k: int) -> "FiniteSpace":
        """k points at mutual distance 1."""
        return cls(tuple(range(k)), 1.0 - np.eye(k))

    @classmethod
    def on_line(cls, xs) -> "FiniteSpace":
        xs = np.asarray(xs, dtype=float)
        return cls(tuple(xs.tolist()), np.abs(xs[:, None] - xs[None, :]))


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finitely supported probability measure.

    On R^d the points are an (n, d) float array. On a FiniteSpace they are an
    (n,) array of point indices into the space.
    """

    points: np.ndarray
    weights: np.ndarray
    space: FiniteSpace | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if self.space is None:
            x = np.asarray(self.points, dtype=float)
            if x.ndim == 1:
                x = x[:, None]
        else:
            x = np.asarray(self.points, dtype=np.int64)
            if x.ndim != 1 or np.any(x < 0) or np.any(x >= self.space.k):
                raise MeasureError("finite-space atoms must be valid point indices")
        if w.ndim != 1 or len(w) != len(x) or len(w) == 0:
            raise MeasureError("points and weights must be nonempty and aligned")
        if np.any(w < 0) or abs(w.sum() - 1.0) >= WEIGHT_TOL:
            raise MeasureError(f"weights must be >= 0 and sum to 1 (sum={w.sum()!r})")
        x.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", x)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_atoms(cls, points, weights=None, space: FiniteSpace | None = None,
                   normalize: bool = False) -> "DiscreteMeasure":
        """Build a measure, merging coincident atoms (sup-norm within 1e-12)."""
        if space is None:
            x = np.asarray(points, dtype=float)
            if x.ndim == 1:
                x = x[:, None]
        else:
            x = np.asarray(points, dtype=np.int64).reshape(-1)
        n = len(x)
        w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
        if normalize:
            w = w / w.sum()
        if space is not None:
            w_all = np.bincount(x, weights=w, minlength=space.k)
            keep = np.flatnonzero(np.bincount(x, minlength=space.k))
            return cls(keep, w_all[keep], space)
        ux, inv = np.unique(x, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        uw = np.bincount(inv, weights=w, minlength=len(ux))
        if len(ux) > 1:
            # merge lexicographic neighbours that agree to within MERGE_TOL
            close = np.max(np.abs(np.diff(ux, axis=0)), axis=1) < MERGE_TOL
            if close.any():
                group = np.concatenate([[0], np.cumsum(~close)])
                first = np.concatenate([[True], ~close])
                uw = np.bincount(group, weights=uw)
                ux = ux[first]
        return cls(ux, uw, None)

    @classmethod
    def dirac(cls, point, space: FiniteSpace | None = None) -> "DiscreteMeasure":
        if space is None:
            return cls(np.atleast_2d(np.asarray(point, dtype=float)), np.ones(1))
        return cls(np.array([int(point)]), np.ones(1), space)

    @property
    def dim(self) -> int:
        return 0 if self.space is not None else self.points.shape[1]

    @property
    def size(self) -> int:
        return len(self.weights)

    def on_same_space(self, other: "DiscreteMeasure") -> bool:
        if self.space is not None or other.space is not None:
            return self.space is other.space
        return self.dim == other.dim

    def dense_weights(self) -> np.ndarray:
        """Weights as a length-k vector (finite spaces only)."""
        if self.space is None:
            raise MeasureError("dense weights need a finite space")
        out = np.zeros(self.space.k)
        np.add.at(out, self.points, self.weights)
        return out

    def mean(self) -> np.ndarray:
        if self.space is not None:
            raise MeasureError("mean is defined on R^d only")
        return self.weights @ self.points

    def abs_moment(self, q: float) -> float:
        """∫ |x|^q dμ with the Euclidean norm."""
        r = np.linalg.norm(self.points, axis=1)
        return float(self.weights @ r**q)


@dataclass(frozen=True, eq=False)
class GaussianMeasure:
    """N(mean, cov). PSD covariances are allowed and flagged as degenerate."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        V = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if V.shape != (len(m), len(m)):
            raise MeasureError("covariance shape does not match the mean")
        if np.max(np.abs(V - V.T), initial=0.0) > 1e-10 * max(1.0, np.abs(V).max()):
            raise MeasureError("covariance is not symmetric")
        V = 0.5 * (V + V.T)
        ev = np.linalg.eigvalsh(V)
        if ev[0] < -1e-10 * max(1.0, ev[-1]):
            raise MeasureError("covariance is not positive semidefinite")
        m.setflags(write=False)
        V.setflags(write=False)
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", V)

    @property
    def dim(self) -> int:
        return len(self.mean)

    @property
    def degenerate(self) -> bool:
        ev = np.linalg.eigvalsh(self.cov)
        return bool(ev[0] <= 1e-14 * max(1.0, ev[-1]))


# ---------------------------------------------------------------------------
# Registered 1-D laws


@dataclass(frozen=True)
class Law1D:
    """A registered 1-D law with the closed forms the package needs.

    ``first(t)`` and ``second(t)`` are ∫_0^t Q(u) du and ∫_0^t Q(u)^2 du for
    the quantile function Q; they give exact W_1/W_2 against empirical laws.
    """

    name: str
    sampler: Callable[[np.random.Generator, int], np.ndarray]
    quantile: Callable[[np.ndarray], np.ndarray]
    first: Callable[[np.ndarray], np.ndarray] | None
    second: Callable[[np.ndarray], np.ndarray] | None
    mean: float
    variance: float
    abs_moment: Callable[[float], float]
    central_abs_moment: Callable[[float], float]
    atoms: tuple | None = None

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.sampler(rng, n)


def _unif(a: float, b: float, name: str) -> Law1D:
    w = b - a

    def absm(q):
        if a >= 0:
            return (b ** (q + 1) - a ** (q + 1)) / ((q + 1) * w)
        return (abs(a) ** (q + 1) + b ** (q + 1)) / ((q + 1) * w)

    return Law1D(
        name=name,
        sampler=lambda rng, n: a + w * rng.random(n),
        quantile=lambda u: a + w * np.asarray(u),
        first=lambda t: a * np.asarray(t) + 0.5 * w * np.asarray(t) ** 2,
        second=lambda t: ((a + w * np.asarray(t)) ** 3 - a**3) / (3 * w),
        mean=0.5 * (a + b),
        variance=w * w / 12.0,
        abs_moment=absm,
        central_abs_moment=lambda r: (0.5 * w) ** r / (r + 1),
    )


def _normal_first(t):
    z = special.ndtri(np.asarray(t, dtype=float))
    return -np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)


def _normal_second(t):
    t = np.asarray(t, dtype=float)
    z = special.ndtri(t)
    fin = np.isfinite(z)
    z = np.where(fin, z, 0.0)
    return t - np.where(fin, z * np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi), 0.0)


def _gauss_absm(q):
    return 2 ** (q / 2) * special.gamma((q + 1) / 2) / np.sqrt(np.pi)


def _exp_first(t):
    t = np.asarray(t, dtype=float)
    x = np.where(t < 1, -np.log1p(-np.where(t < 1, t, 0.0)), 0.0)
    return np.where(t < 1, t - (1 - t) * x, 1.0)


def _exp_second(t):
    t = np.asarray(t, dtype=float)
    x = np.where(t < 1, -np.log1p(-np.where(t < 1, t, 0.0)), 0.0)
    return np.where(t < 1, 2 * t - (1 - t) * (x * x + 2 * x), 2.0)


def _rademacher_quantile(u):
    return np.where(np.asarray(u) <= 0.5, -1.0, 1.0)


LAWS: dict[str, Law1D] = {
    "uniform": _unif(0.0, 1.0, "uniform"),
    "uniform_sym": _unif(-1.0, 1.0, "uniform_sym"),
    "normal": Law1D(
        name="normal",
        sampler=lambda rng, n: rng.standard_normal(n),
        quantile=special.ndtri,
        first=_normal_first,
        second=_normal_second,
        mean=0.0,
        variance=1.0,
        abs_moment=_gauss_absm,
        central_abs_moment=_gauss_absm,
    ),
    "exponential": Law1D(
        name="exponential",
        sampler=lambda rng, n: rng.standard_exponential(n),
        quantile=lambda u: -np.log1p(-np.asarray(u)),
        first=_exp_first,
        second=_exp_second,
        mean=1.0,
        variance=1.0,
        abs_moment=lambda q: float(special.gamma(q + 1)),
        central_abs_moment=lambda r: float(
            stats.expon.expect(lambda x: abs(x - 1.0) ** r, epsabs=1e-13, epsrel=1e-13)
        ),
    ),
    "rademacher": Law1D(
        name="rademacher",
        sampler=lambda rng, n: np.where(rng.random(n) < 0.5, -1.0, 1.0),
        quantile=_rademacher_quantile,
        first=None,
        second=None,
        mean=0.0,
        variance=1.0,
        abs_moment=lambda q: 1.0,
        central_abs_moment=lambda r: 1.0,
        atoms=((-1.0, 0.5), (1.0, 0.5)),
    ),
    "zero": Law1D(
        name="zero",
        sampler=lambda rng, n: np.zeros(n),
        quantile=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
        first=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        second=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        mean=0.0,
        variance=0.0,
        abs_moment=lambda q: 0.0,
        central_abs_moment=lambda r: 0.0,
        atoms=((0.0, 1.0),),
    ),
}


def get_law(name: str) -> Law1D:
    try:
        return LAWS[name]
    except KeyError:
        raise MeasureError(f"unregistered 1-D law {name!r}; known: {sorted(LAWS)}") from None


# ---------------------------------------------------------------------------
# Sources and trajectories


@dataclass(frozen=True, eq=False)
class Source:
    """A sampleable measure parsed from a JSON descriptor."""

    descriptor: Mapping[str, Any]
    dim: int
    draw: Callable[[np.random.Generator, int], np.ndarray] = field(repr=False)
    space: FiniteSpace | None = None


def parse_source(desc, space: FiniteSpace | None = None) -> Source:
    """Turn a measure descriptor into a Source.

    Accepted forms: {"kind": "gaussian", "mean": [...], "cov": [[...]]},
    {"kind": "discrete", "atoms": [[point, weight], ...]},
    {"kind": "density1d", "name": ...}; a DiscreteMeasure or GaussianMeasure
    is also accepted directly.
    """
    if isinstance(desc, GaussianMeasure):
        desc = {"kind": "gaussian", "mean": desc.mean.tolist(), "cov": desc.cov.tolist()}
    elif isinstance(desc, DiscreteMeasure):
        space = desc.space
        pts = desc.points.tolist()
        desc = {"kind": "discrete", "atoms": [[p, w] for p, w in zip(pts, desc.weights.tolist())]}
    if not isinstance(desc, Mapping) or "kind" not in desc:
        raise MeasureError(f"unknown source descriptor {desc!r}")
    kind = desc["kind"]
    if kind == "gaussian":
        m = np.atleast_1d(np.asarray(desc["mean"], dtype=float))
        V = np.atleast_2d(np.asarray(desc["cov"], dtype=float))
        if V.shape != (len(m), len(m)) or not np.allclose(V, V.T, atol=1e-10):
            raise MeasureError("gaussian covariance must be symmetric and match the mean")
        try:
            L = np.linalg.cholesky(V)
        except np.linalg.LinAlgError:
            raise MeasureError("gaussian covariance is not positive definite") from None
        d = len(m)

        def draw(rng, n):
            return m + rng.standard_normal((n, d)) @ L.T

        return Source(dict(desc), d, draw)
    if kind == "discrete":
        atoms = desc["atoms"]
        if not atoms:
            raise MeasureError("discrete source needs atoms")
        pts = [a[0] for a in atoms]
        w = np.asarray([a[1] for a in atoms], dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1) >= WEIGHT_TOL:
            raise MeasureError("discrete source weights must be a probability vector")
        cw = np.cumsum(w)
        cw[-1] = 1.0
        if space is not None:
            idx = np.asarray([space.index(p) if not isinstance(p, (int, np.integer)) else int(p)
                              for p in pts], dtype=np.int64)

            def draw(rng, n):
                return idx[np.searchsorted(cw, rng.random(n), side="right")]

            return Source(dict(desc), 0, draw, space)
        X = np.asarray(pts, dtype=float)
        if X.ndim == 1:
            X = X[:, None]

        def draw(rng, n):
            if len(w) == 1:
                return np.repeat(X, n, axis=0)
            return X[np.searchsorted(cw, rng.random(n), side="right")]

        return Source(dict(desc), X.shape[1], draw)
    if kind == "density1d":
        law = get_law(desc.get("name", ""))
        return Source(dict(desc), 1, lambda rng, n: law.sample(rng, n)[:, None])
    raise MeasureError(f"unknown source kind {kind!r}")


@dataclass(frozen=True, eq=False)
class SampleTrajectory:
    """Draws ξ_1..ξ_N with the seed and descriptor that generated them."""

    draws: np.ndarray
    seed: int
    source: Mapping[str, Any]
    space: FiniteSpace | None = None

    def __post_init__(self):
        x = np.asarray(self.draws)
        if len(x) < 1:
            raise MeasureError("a trajectory needs at least one draw")
        x.setflags(write=False)
        object.__setattr__(self, "draws", x)

    def __len__(self):
        return len(self.draws)

    def regenerate(self) -> "SampleTrajectory":
        return sample_iid(self.source, len(self), self.seed, space=self.space)


def sample_iid(source, n: int, seed: int, space: FiniteSpace | None = None) -> SampleTrajectory:
    """n i.i.d. draws from ``source`` using a generator keyed by ``seed``."""
    if n < 1:
        raise MeasureError("n must be >= 1")
    src = source if isinstance(source, Source) else parse_source(source, space)
    draws = src.draw(make_rng(seed), int(n))
    return SampleTrajectory(draws, int(seed), src.descriptor, src.space)


def empirical_measure(traj: SampleTrajectory, n: int) -> DiscreteMeasure:
    """Uniform measure on the first n draws."""
    if not 1 <= n <= len(traj):
        raise MeasureError(f"prefix length {n} outside 1..{len(traj)}")
    return DiscreteMeasure.from_atoms(traj.draws[:n], None, space=traj.space)


# ---------------------------------------------------------------------------
# Gaussian plug-in and divergence


def _as_matrix(traj_or_draws) -> np.ndarray:
    x = traj_or_draws.draws if isinstance(traj_or_draws, SampleTrajectory) else traj_or_draws
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def gaussian_mle(traj, n: int):
    """Plug-in (m̂_n, V̂_n) with divisor n; the point mass δ_{ξ_1} when n = 1."""
    x = _as_matrix(traj)
    if not 1 <= n <= len(x):
        raise MeasureError(f"prefix length {n} outside 1..{len(x)}")
    if n == 1:
        return DiscreteMeasure.dirac(x[0])
    xs = x[:n]
    m = xs.mean(axis=0)
    c = xs - m
    return GaussianMeasure(m, c.T @ c / n)


def running_gaussian_mle(draws) -> tuple[np.ndarray, np.ndarray]:
    """Plug-in means and covariances for every prefix n = 1..N at once."""
    x = _as_matrix(draws)
    n = np.arange(1, len(x) + 1, dtype=float)
    # shift by the first draw to limit cancellation in the running second moment
    y = x - x[0]
    s1 = np.cumsum(y, axis=0)
    s2 = np.cumsum(y[:, :, None] * y[:, None, :], axis=0)
    my = s1 / n[:, None]
    V = s2 / n[:, None, None] - my[:, :, None] * my[:, None, :]
    V = 0.5 * (V + np.swapaxes(V, 1, 2))
    return my + x[0], V


def gaussian_kl(q: GaussianMeasure, p: GaussianMeasure) -> float:
    """KL(q ‖ p) for non-degenerate Gaussians."""
    if q.dim != p.dim:
        raise MeasureError("dimension mismatch")
    if q.degenerate or p.degenerate:
        raise MeasureError("KL needs positive definite covariances")
    d = q.dim
    Lp = np.linalg.cholesky(p.cov)
    A = np.linalg.solve(Lp, q.cov)
    tr = np.trace(np.linalg.solve(Lp.T, A))
    dm = np.linalg.solve(Lp, q.mean - p.mean)
    logdet_p = 2 * np.sum(np.log(np.diag(Lp)))
    logdet_q = np.linalg.slogdet(q.cov)[1]
    return float(max(0.0, 0.5 * (tr - d + dm @ dm + logdet_p - logdet_q)))
