"""Exponential families in canonical form: log-partition M, mean map V = ∇M,
Legendre transforms, the curvature functional Φ, the plug-in MLE, and the
constants Y₂ and C₂ of the parametric uniform rate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import integrate, special

from .measures import GaussianMeasure
from .report import BoundReport, compose, formula, given
from .rates.schedule import RateSchedule, rate_b

NEWTON_MAX_ITER = 200
PHI_NODES = 64


class ExpFamError(ValueError):
    pass


class QuadratureError(ExpFamError):
    """Numerical integration failed; distinct from a genuinely infinite M."""


class NewtonError(ExpFamError):
    def __init__(self, msg, last, residual):
        super().__init__(f"{msg} (last iterate {last!r}, residual {residual:.3e})")
        self.last = last
        self.residual = residual


class MissingTailError(ExpFamError):
    pass


@dataclass(frozen=True, eq=False)
class ExpFamilySpec:
    """A canonical family μ_y(dx) = exp(y·t(x) − M(y)) μ(dx).

    ``M`` returns +∞ outside Λ; ``grad``/``hess`` are ∇M and Hess M (``hess``
    may be None, then central differences on ``grad`` are used).
    ``in_theta`` tests membership in the interior Θ of the convex hull of t.
    """

    name: str
    k: int
    t: Callable[[np.ndarray], np.ndarray]
    M: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray] | None
    in_theta: Callable[[np.ndarray], bool]
    sample: Callable[[np.ndarray, np.random.Generator, int], np.ndarray]
    y_start: np.ndarray
    params: Mapping = field(default_factory=dict)
    expect: Callable[[np.ndarray, Callable[[float], float]], float] | None = None

    def in_lambda(self, y) -> bool:
        return bool(np.isfinite(self.M(_vec(y, self.k))))


def _vec(y, k: int) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (k,):
        raise ExpFamError(f"expected a parameter of length {k}, got shape {y.shape}")
    return y


# ---------------------------------------------------------------------------
# registered families


def gaussian_location(variance: float = 1.0) -> ExpFamilySpec:
    """t(x) = x, μ = N(0, s²): M(y) = s²y²/2, Λ = Θ = R."""
    s2 = float(variance)
    if not s2 > 0:
        raise ExpFamError("variance must be positive")
    return ExpFamilySpec(
        "gaussian_location", 1,
        t=lambda x: np.asarray(x, dtype=float).reshape(-1, 1),
        M=lambda y: 0.5 * s2 * float(y[0]) ** 2,
        grad=lambda y: np.array([s2 * y[0]]),
        hess=lambda y: np.array([[s2]]),
        in_theta=lambda th: bool(np.all(np.isfinite(th))),
        sample=lambda y, rng, n: s2 * y[0] + math.sqrt(s2) * rng.standard_normal(n),
        y_start=np.zeros(1),
        params={"family": "gaussian_location", "variance": s2},
    )


def bernoulli() -> ExpFamilySpec:
    """t(x) = x, μ = counting measure on {0, 1}: M(y) = log(1 + e^y), Θ = (0, 1)."""

    def grad(y):
        return np.array([special.expit(y[0])])

    def hess(y):
        p = special.expit(y[0])
        return np.array([[p * (1 - p)]])

    return ExpFamilySpec(
        "bernoulli", 1,
        t=lambda x: np.asarray(x, dtype=float).reshape(-1, 1),
        M=lambda y: float(np.logaddexp(0.0, y[0])),
        grad=grad, hess=hess,
        in_theta=lambda th: bool(0 < th[0] < 1),
        sample=lambda y, rng, n: (rng.random(n) < special.expit(y[0])).astype(float),
        y_start=np.zeros(1),
        params={"family": "bernoulli"},
    )


def poisson() -> ExpFamilySpec:
    """t(x) = x, μ({x}) = 1/x! on N: M(y) = e^y, Θ = (0, ∞)."""
    return ExpFamilySpec(
        "poisson", 1,
        t=lambda x: np.asarray(x, dtype=float).reshape(-1, 1),
        M=lambda y: float(np.exp(y[0])),
        grad=lambda y: np.array([np.exp(y[0])]),
        hess=lambda y: np.array([[np.exp(y[0])]]),
        in_theta=lambda th: bool(th[0] > 0),
        sample=lambda y, rng, n: rng.poisson(np.exp(y[0]), n).astype(float),
        y_start=np.zeros(1),
        params={"family": "poisson"},
    )


def gamma(shape: float = 2.0) -> ExpFamilySpec:
    """t(x) = x, μ(dx) = x^{a−1} dx on (0, ∞): M(y) = log Γ(a) − a log(−y), Λ = (−∞, 0)."""
    a = float(shape)
    if not a > 0:
        raise ExpFamError("shape must be positive")

    def M(y):
        return math.inf if y[0] >= 0 else special.gammaln(a) - a * math.log(-y[0])

    return ExpFamilySpec(
        "gamma", 1,
        t=lambda x: np.asarray(x, dtype=float).reshape(-1, 1),
        M=M,
        grad=lambda y: np.array([-a / y[0]]),
        hess=lambda y: np.array([[a / y[0] ** 2]]),
        in_theta=lambda th: bool(th[0] > 0),
        sample=lambda y, rng, n: rng.gamma(a, -1.0 / y[0], n),
        y_start=-np.ones(1),
        params={"family": "gamma", "shape": a},
    )


def gaussian_full() -> ExpFamilySpec:
    """t(x) = (x, x²), μ = Lebesgue: M(y) = −y₁²/(4y₂) + ½ log(π/(−y₂)), y₂ < 0.

    Mean parameters θ = (m, m² + v); Θ = {θ₂ > θ₁²}.
    """

    def M(y):
        if y[1] >= 0:
            return math.inf
        return -y[0] ** 2 / (4 * y[1]) + 0.5 * math.log(math.pi / -y[1])

    def grad(y):
        m = -y[0] / (2 * y[1])
        v = -1 / (2 * y[1])
        return np.array([m, m * m + v])

    def hess(y):
        m = -y[0] / (2 * y[1])
        v = -1 / (2 * y[1])
        # covariance of (X, X²) under N(m, v)
        return np.array([[v, 2 * m * v], [2 * m * v, 4 * m * m * v + 2 * v * v]])

    def sample(y, rng, n):
        m = -y[0] / (2 * y[1])
        return m + math.sqrt(-1 / (2 * y[1])) * rng.standard_normal(n)

    return ExpFamilySpec(
        "gaussian_full", 2,
        t=lambda x: np.column_stack([np.asarray(x, float), np.asarray(x, float) ** 2]),
        M=M, grad=grad, hess=hess,
        in_theta=lambda th: bool(th[1] > th[0] ** 2),
        sample=sample,
        y_start=np.array([0.0, -0.5]),
        params={"family": "gaussian_full"},
    )


def quadrature_family(density: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                      name: str = "quadrature") -> ExpFamilySpec:
    """t(x) = x with a base density on the compact interval [a, b].

    M, ∇M come from adaptive quadrature; the Hessian uses central differences.
    Λ = R since the support is bounded.
    """
    a, b = float(a), float(b)
    if not a < b:
        raise ExpFamError("need a < b")
    mass, _ = integrate.quad(density, a, b)
    if not mass > 0:
        raise ExpFamError("base density has no mass")

    span = max(abs(a), abs(b), 1.0)

    def moments(y):
        c = b if y > 0 else a  # shift keeps the exponent nonpositive
        out = []
        for j in range(2):
            atol = 0.0 if j == 0 else 1e-13 * out[0] * span
            val, err = integrate.quad(lambda x: x**j * math.exp(y * (x - c)) * density(x), a, b,
                                      epsabs=atol, epsrel=1e-12, limit=200)
            ref = out[0] * span if j else val
            if not np.isfinite(val) or err > 1e-9 * max(ref, 1e-300):
                raise QuadratureError(f"quadrature did not converge at y={y!r}")
            out.append(val)
        return c, out

    def M(y):
        c, (z0, _) = moments(float(y[0]))
        return c * y[0] + math.log(z0)

    def grad(y):
        _, (z0, z1) = moments(float(y[0]))
        return np.array([z1 / z0])

    def expect(y, g):
        val, _ = integrate.quad(lambda x: g(x) * math.exp(y[0] * x - M(y)) * density(x), a, b, limit=200)
        return val

    grid = np.linspace(a, b, 4097)

    def sample(y, rng, n):
        w = density(grid) * np.exp(y[0] * (grid - (b if y[0] > 0 else a)))
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(grid))])
        return np.interp(rng.random(n) * cdf[-1], cdf, grid)

    return ExpFamilySpec(
        name, 1,
        t=lambda x: np.asarray(x, dtype=float).reshape(-1, 1),
        M=M, grad=grad, hess=None,
        in_theta=lambda th: bool(a < th[0] < b),
        sample=sample,
        y_start=np.zeros(1),
        params={"family": name, "a": a, "b": b},
        expect=expect,
    )


FAMILIES: dict[str, Callable[..., ExpFamilySpec]] = {
    "gaussian_location": gaussian_location,
    "bernoulli": bernoulli,
    "poisson": poisson,
    "gamma": gamma,
    "gaussian_full": gaussian_full,
}


def family_from_config(cfg: Mapping) -> ExpFamilySpec:
    """Build a registered family from {"family": tag, ...parameters}."""
    cfg = dict(cfg)
    tag = cfg.pop("family", None)
    if tag not in FAMILIES:
        raise ExpFamError(f"unknown family {tag!r}; registered: {sorted(FAMILIES)}")
    return FAMILIES[tag](**cfg)


# ---------------------------------------------------------------------------
# M, V, V⁻¹ and Legendre transforms


def log_partition(spec: ExpFamilySpec, y) -> float:
    return float(spec.M(_vec(y, spec.k)))


def mean_map(spec: ExpFamilySpec, y) -> np.ndarray:
    y = _vec(y, spec.k)
    if not spec.in_lambda(y):
        raise ExpFamError(f"y={y.tolist()} lies outside the natural domain")
    return np.asarray(spec.grad(y), dtype=float)


def hess_M(spec: ExpFamilySpec, y) -> np.ndarray:
    y = _vec(y, spec.k)
    if spec.hess is not None:
        return np.atleast_2d(np.asarray(spec.hess(y), dtype=float))
    H = np.empty((spec.k, spec.k))
    eps3 = np.finfo(float).eps ** (1 / 3)
    for j in range(spec.k):
        h = eps3 * max(1.0, abs(y[j]))
        e = np.zeros(spec.k)
        e[j] = h
        H[:, j] = (spec.grad(y + e) - spec.grad(y - e)) / (2 * h)
    return 0.5 * (H + H.T)


def mean_map_inverse(spec: ExpFamilySpec, theta, tol: float = 1e-12) -> np.ndarray:
    """V⁻¹(θ): damped Newton on y ↦ M(y) − θ·y with Armijo backtracking."""
    theta = _vec(theta, spec.k)
    if not spec.in_theta(theta):
        raise ExpFamError(f"θ={theta.tolist()} lies outside Θ")
    y = spec.y_start.astype(float).copy()
    F = spec.M(y) - theta @ y
    scale = 1.0 + np.linalg.norm(theta)
    res = math.inf
    for _ in range(NEWTON_MAX_ITER):
        g = spec.grad(y) - theta
        res = float(np.linalg.norm(g))
        if res <= tol * scale:
            return y
        step = np.linalg.solve(hess_M(spec, y), g)
        slope = float(g @ step)
        t = 1.0
        while True:
            y_new = y - t * step
            F_new = spec.M(y_new) - theta @ y_new
            if np.isfinite(F_new) and F_new <= F - 1e-4 * t * slope:
                break
            # near the root the objective decrease drowns in rounding; fall back
            # to the residual, which Newton still reduces
            if np.isfinite(F_new) and np.linalg.norm(spec.grad(y_new) - theta) < 0.5 * res:
                break
            t *= 0.5
            if t < 1e-14:
                raise NewtonError("line search stalled", y.tolist(), res)
        y, F = y_new, F_new
    g = spec.grad(y) - theta
    res = float(np.linalg.norm(g))
    if res <= 1e-9 * scale:
        return y
    raise NewtonError(f"no convergence after {NEWTON_MAX_ITER} iterations", y.tolist(), res)


def legendre_Imu(spec: ExpFamilySpec, theta) -> float:
    """I_μ(θ) = V⁻¹(θ)·θ − M(V⁻¹(θ))."""
    theta = _vec(theta, spec.k)
    y = mean_map_inverse(spec, theta)
    return float(y @ theta - spec.M(y))


def rate_function(spec: ExpFamilySpec, theta0, theta) -> float:
    """I_{θ₀}(θ) = sup_y [θ·y − Ψ(y)], Ψ(y) = M(y₀ + y) − M(y₀) the cumulant
    generating function of t under μ_{θ₀}; equals I_μ(θ) − θ·y₀ + M(y₀)."""
    theta0 = _vec(theta0, spec.k)
    theta = _vec(theta, spec.k)
    y0 = mean_map_inverse(spec, theta0)
    return float(legendre_Imu(spec, theta) - theta @ y0 + spec.M(y0))


def hess_Imu(spec: ExpFamilySpec, theta) -> np.ndarray:
    """Hess I_μ(θ) = (Hess M(V⁻¹(θ)))⁻¹."""
    return np.linalg.inv(hess_M(spec, mean_map_inverse(spec, theta)))


def phi(spec: ExpFamilySpec, theta0, eta, nodes: int = PHI_NODES) -> float:
    """Φ(η) = (∫₀¹ (1 − s) ‖Hess I_μ(θ₀ + s(η − θ₀))‖_F ds)^{1/2}."""
    theta0 = _vec(theta0, spec.k)
    eta = _vec(eta, spec.k)
    s, w = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * (s + 1)
    w = 0.5 * w
    acc = 0.0
    for si, wi in zip(s, w):
        pt = theta0 + si * (eta - theta0)
        if not spec.in_theta(pt):
            raise ExpFamError("the segment [θ₀, η] leaves Θ")
        acc += wi * (1 - si) * np.linalg.norm(hess_Imu(spec, pt))
    return math.sqrt(acc)


@dataclass(frozen=True)
class MLEEstimate:
    theta: np.ndarray
    in_theta: bool


def mle(spec: ExpFamilySpec, traj, n: int) -> MLEEstimate:
    """θ̂_n = (1/n) Σ t(ξ_i); membership in Θ is flagged, not enforced."""
    x = traj.draws if hasattr(traj, "draws") else np.asarray(traj)
    x = np.asarray(x, dtype=float).reshape(len(x), -1)[:, 0] if np.ndim(x) > 1 else np.asarray(x, float)
    if not 1 <= n <= len(x):
        raise ExpFamError(f"prefix length {n} outside 1..{len(x)}")
    th = spec.t(x[:n]).mean(axis=0)
    return MLEEstimate(th, spec.in_theta(th))


def running_mle(spec: ExpFamilySpec, x) -> np.ndarray:
    """θ̂_n for every prefix n = 1..N, shape (N, k)."""
    T = spec.t(np.asarray(x, dtype=float).ravel())
    return np.cumsum(T, axis=0) / np.arange(1, len(T) + 1)[:, None]


def plugin_measure(spec: ExpFamilySpec, theta) -> GaussianMeasure:
    """The Gaussian law μ_θ for the two Gaussian families."""
    theta = _vec(theta, spec.k)
    if spec.name == "gaussian_location":
        return GaussianMeasure(theta, np.array([[spec.params["variance"]]]))
    if spec.name == "gaussian_full":
        return GaussianMeasure(theta[:1], np.array([[theta[1] - theta[0] ** 2]]))
    raise ExpFamError(f"no Gaussian representation for family {spec.name!r}")


# ---------------------------------------------------------------------------
# Y₂


@formula("y2_expfam")
def _f_y2(inputs, subs):
    return math.sqrt(2 * subs["C_T"]) * subs["Phi"] * subs["sigma_max"]


def y2_expfam(spec: ExpFamilySpec, theta0, C_T: float) -> BoundReport:
    """Y₂ = √(2 C_T) Φ(θ₀) σ_max(θ₀), σ_max² the top eigenvalue of Hess M(V⁻¹(θ₀))."""
    if not C_T > 0:
        raise ExpFamError("C_T must be positive")
    theta0 = _vec(theta0, spec.k)
    H = hess_M(spec, mean_map_inverse(spec, theta0))
    smax = math.sqrt(max(np.linalg.eigvalsh(H)[-1], 0.0))
    subs = {
        "C_T": given(C_T, "Talagrand constant of the family at θ₀ (user input)"),
        "Phi": given(phi(spec, theta0, theta0), f"{PHI_NODES}-node Gauss-Legendre in s"),
        "sigma_max": given(smax, "sqrt of the top eigenvalue of Hess M"),
    }
    inp = {"family": dict(spec.params), "theta0": theta0.tolist()}
    return BoundReport("Y_2", compose("y2_expfam", inp, subs), inp | {"C_T": float(C_T)})


# ---------------------------------------------------------------------------
# cost condition


@dataclass
class TailParams:
    """Ingredients of the tail analysis around θ₀.

    rho, sigma, covering: t ↦ ρ(t), σ(t), and (ρ, σ) ↦ N_{Φ₂}(ρ, σ).
    phi1_inverse / phi2 override the default radial split of Φ.
    cauchy_radius / cauchy_max override r(θ₀), C(r(θ₀)).
    """

    delta: float
    tau: float
    rho: Callable[[float], float]
    sigma: Callable[[float], float]
    covering: Callable[[float, float], float] = lambda rho, sigma: 1.0
    phi1_inverse: Callable[[float], float] | None = None
    phi2: Callable[[np.ndarray], float] | None = None
    cauchy_radius: float | None = None
    cauchy_max: float | None = None
    radial_max: float | None = None

    def __post_init__(self):
        if not (self.delta > 0 and self.tau > 0):
            raise MissingTailError("delta and tau must be positive")
        for name in ("rho", "sigma", "covering"):
            if not callable(getattr(self, name)):
                raise MissingTailError(f"tail ingredient {name!r} must be callable")


def gaussian_location_tails(variance: float = 1.0, delta: float = 1.0, tau: float = 1.0) -> TailParams:
    """Textbook tails for the Gaussian location family.

    Hess I_μ ≡ 1/s², so Φ ≡ (2s²)^{−1/2} is constant: Φ₁ is that constant,
    Φ₂ ≡ 0, and with σ(t) = 2Φ, ρ(t) = t one gets m(t) = t/σ and h ≡ +∞.
    """
    c = 1 / math.sqrt(2 * variance)
    return TailParams(
        delta=delta, tau=tau,
        rho=lambda t: t, sigma=lambda t: 2 * c,
        phi1_inverse=lambda v: math.inf if v >= c else 0.0,
        phi2=lambda th: 0.0,
    )


@dataclass(frozen=True)
class IntegralValue:
    value: float
    remainder: float
    status: str  # "finite", "infinite", "undetermined"


@dataclass(frozen=True)
class CostConditionReport:
    integral1: IntegralValue
    integral2: IntegralValue
    verdict: str


def _directions(k: int, count: int = 64) -> np.ndarray:
    if k == 1:
        return np.array([[1.0], [-1.0]])
    ang = np.linspace(0, 2 * np.pi, count, endpoint=False)
    return np.column_stack([np.cos(ang), np.sin(ang)])


def _core_radius(spec, theta0, dirs, cap: float) -> float:
    """Largest u ≤ cap with θ₀ + u·d in Θ for all probed directions (shrunk by 10%)."""
    u = cap
    while u > 1e-12:
        if all(spec.in_theta(theta0 + u * d) for d in dirs):
            return 0.9 * u
        u *= 0.5
    raise ExpFamError("θ₀ sits on the boundary of Θ")


@dataclass(frozen=True)
class RadialSplit:
    """Φ₁(u) := sup_{|η−θ₀| ≤ u} Φ(η) tabulated on [0, u_max]."""

    radii: np.ndarray
    phi1: np.ndarray

    @property
    def u_max(self) -> float:
        return float(self.radii[-1])

    def inverse(self, v: float) -> float:
        """sup{u ≤ u_max : Φ₁(u) ≤ v}; capped at u_max, which only shrinks m(t)."""
        ok = self.phi1 <= v
        if not ok[0]:
            return 0.0
        if ok.all():
            return self.u_max
        return float(self.radii[np.argmin(ok) - 1])


def radial_split(spec, theta0, u_max: float | None = None, steps: int = 64) -> RadialSplit:
    theta0 = _vec(theta0, spec.k)
    dirs = _directions(spec.k)
    u_max = _core_radius(spec, theta0, dirs, 10.0 if u_max is None else float(u_max))
    radii = np.linspace(0, u_max, steps + 1)
    vals = np.array([max(phi(spec, theta0, theta0 + u * d, nodes=32) for d in dirs) for u in radii])
    return RadialSplit(radii, np.maximum.accumulate(vals))


def _m_function(tails: TailParams, split: RadialSplit | None):
    inv = tails.phi1_inverse if tails.phi1_inverse is not None else split.inverse

    def m(t):
        return min(tails.rho(t), t / tails.sigma(t), inv(tails.sigma(t) / 2))

    return m


def _h_lower(spec, theta0, tails: TailParams, split: RadialSplit | None):
    """Certified lower bound of inf{I_{θ₀}(θ) : Φ₂(θ) ≥ σ(t)/4, |θ − θ₀| ≤ ρ(t)}.

    I_{θ₀} is convex with minimum 0 at θ₀, so it is nondecreasing along rays;
    the infimum is bounded below by I_{θ₀} at the first radius (per
    direction) where the constraint set may begin.
    """
    dirs = _directions(spec.k, 32)
    cache: dict[float, float] = {}

    def ray_min(u: float) -> float:
        if u not in cache:
            vals = []
            for d in dirs:
                pt = theta0 + u * d
                vals.append(rate_function(spec, theta0, pt) if spec.in_theta(pt) else math.inf)
            cache[u] = min(vals)
        return cache[u]

    def h(t):
        rho, sig = tails.rho(t), tails.sigma(t)
        if tails.phi2 is None:
            # default split: Φ₂ = (Φ − Φ₁(|·|))₊ vanishes on the tabulated core
            if rho <= split.u_max:
                return math.inf
            return ray_min(split.u_max)
        radii = np.linspace(0, rho, 33)
        best = math.inf
        for d in dirs:
            prev = 0.0
            for u in radii:
                pt = theta0 + u * d
                if not spec.in_theta(pt):
                    break
                if tails.phi2(pt) >= sig / 4:
                    if prev > 0:
                        best = min(best, rate_function(spec, theta0, theta0 + prev * d))
                    else:
                        best = 0.0
                    break
                prev = u
        return best

    return h


def _certified_integral(f: Callable[[float], float], tau: float, probes: int = 40) -> IntegralValue:
    """∫_τ^∞ f with the tail beyond T bounded by T f(T) when t² f(t) is
    nonincreasing on geometric probes past T."""
    T = max(2 * tau, tau + 1)
    for _ in range(60):
        ft = f(T)
        if ft == 0 or T * ft < 1e-14:
            break
        T *= 2
    probes_t = T * np.geomspace(1, 1e6, probes)
    vals = np.array([f(t) for t in probes_t])
    w = probes_t**2 * vals
    head, err = integrate.quad(f, tau, T, limit=400, epsabs=1e-13, epsrel=1e-10)
    if np.all(vals == 0):
        return IntegralValue(head + err, 0.0, "finite")
    if np.all(np.diff(w) <= 1e-12 * np.maximum(w[:-1], 1e-300)):
        rem = T * f(T) + err
        return IntegralValue(head + rem, rem, "finite")
    if np.all(probes_t * vals >= 0.5 * probes_t[0] * vals[0]) and vals[0] > 0:
        return IntegralValue(math.inf, math.inf, "infinite")
    return IntegralValue(head, math.nan, "undetermined")


def cost_condition(spec: ExpFamilySpec, theta0, tails: TailParams) -> CostConditionReport:
    """The two integrability conditions over [τ, ∞):
    ∫ m(t)^{−2} e^{−m(t)} dt and ∫ N(t) h(t)^{−2} e^{−h(t)} dt."""
    theta0 = _vec(theta0, spec.k)
    split = None
    if tails.phi1_inverse is None or tails.phi2 is None:
        split = radial_split(spec, theta0, tails.radial_max)
    m = _m_function(tails, split)
    h = _h_lower(spec, theta0, tails, split)

    def f1(t):
        mt = m(t)
        return math.inf if mt <= 0 else mt**-2 * math.exp(-mt)

    def f2(t):
        ht = h(t)
        if ht == math.inf:
            return 0.0
        return math.inf if ht <= 0 else tails.covering(tails.rho(t), tails.sigma(t)) * ht**-2 * math.exp(-ht)

    i1 = _guarded(f1, tails.tau)
    i2 = _guarded(f2, tails.tau)
    statuses = {i1.status, i2.status}
    verdict = "infinite" if "infinite" in statuses else (
        "undetermined" if "undetermined" in statuses else "finite")
    return CostConditionReport(i1, i2, verdict)


def _guarded(f, tau) -> IntegralValue:
    if not np.isfinite(f(tau)):
        return IntegralValue(math.inf, math.inf, "infinite")
    return _certified_integral(f, tau)


# ---------------------------------------------------------------------------
# C₂


def _series_b(z: float) -> float:
    """Upper bound on Σ_{n≥1} b_n e^{−nz} with b_n = (n/Log₂ n)^{1/2}.

    Direct summation with a geometric tail (b_n ≤ √n); for tiny z the
    closed form Γ(3/2) z^{−3/2} + (2ez)^{−1/2} (integral plus peak of √x e^{−xz}).
    """
    if z <= 0:
        return math.inf
    closed = math.gamma(1.5) * z**-1.5 + (2 * math.e * z) ** -0.5
    if z < 1e-3:
        return closed
    N = int(min(max(64, 60 / z), 1e6))
    n = np.arange(1, N + 1, dtype=float)
    head = float(np.sum(rate_b(n, RateSchedule(1, "parametric")) * np.exp(-n * z)))
    ratio = math.sqrt((N + 2) / (N + 1)) * math.exp(-z)
    tail = math.sqrt(N + 1) * math.exp(-(N + 1) * z) / (1 - ratio) if ratio < 1 else math.inf
    return min(head + tail, closed)


def yurinskii_H(k: int, B2: float, cauchy_max: float, cauchy_radius: float) -> float:
    """Smallest H with k^{m/2} m! C r^{−m} ≤ (m!/2) B² H^{m−2} for every m ≥ 3."""
    m = np.arange(3, 400, dtype=float)
    logs = (math.log(2) + 0.5 * m * math.log(k) + math.log(cauchy_max)
            - m * math.log(cauchy_radius) - math.log(B2)) / (m - 2)
    return float(max(np.exp(logs).max(), math.sqrt(k) / cauchy_radius))


def _cauchy(spec, y0, theta0, radius: float | None):
    """r(θ₀) and C ≥ max_i E exp(r |t_i − θ₀_i|), bounded by the two one-sided MGFs."""
    if radius is None:
        radius = 1.0
        while radius > 1e-8:
            if all(spec.in_lambda(y0 + s * radius * e) for e in np.eye(spec.k) for s in (1, -1)):
                break
            radius *= 0.5
        radius *= 0.5
    M0 = spec.M(y0)
    C = 0.0
    for i, e in enumerate(np.eye(spec.k)):
        up = spec.M(y0 + radius * e) - M0 - radius * theta0[i]
        dn = spec.M(y0 - radius * e) - M0 + radius * theta0[i]
        C = max(C, math.exp(up) + math.exp(dn))
    if not np.isfinite(C):
        raise ExpFamError("Cauchy radius leaves the natural domain")
    return float(radius), float(C)


@formula("expfam_interior")
def _f_interior(inputs, subs):
    r = float(inputs["r"])
    total = 0.0
    for s, mr in zip(inputs["sigma"], inputs["abs_moment"]):
        if s > 0:
            total += s * (subs["alpha0"] + subs["alpha1"] * (mr / s**r) ** math.ceil(r)) ** (1 / r)
    return subs["phi_max"] * total


@formula("expfam_exterior")
def _f_exterior(inputs, subs):
    return subs["tau"] * subs["series_delta"] + subs["tail_integral"]


@formula("c2_expfam")
def _f_c2(inputs, subs):
    return subs["C_T"] * (subs["interior"] + subs["exterior"]) ** 2


def _abs_central_moment(spec, y0, theta0, r: float, j: int) -> float:
    """E|t_j − θ₀_j|^r under μ_{θ₀}, by closed form, exact summation or quadrature."""
    name = spec.name
    if name == "gaussian_location":
        s = math.sqrt(spec.params["variance"])
        return s**r * 2 ** (r / 2) * math.gamma((r + 1) / 2) / math.sqrt(math.pi)
    if name == "bernoulli":
        p = theta0[0]
        return p * (1 - p) ** r + (1 - p) * p**r
    if name == "poisson":
        lam = theta0[0]
        x = np.arange(0, int(lam + 40 * math.sqrt(lam) + 60))
        return float(np.sum(np.abs(x - lam) ** r * np.exp(x * math.log(lam) - lam - special.gammaln(x + 1))))
    if name == "gamma":
        a, sc = spec.params["shape"], -1 / y0[0]
        f = lambda x: abs(x - theta0[0]) ** r * math.exp((a - 1) * math.log(x) - x / sc - special.gammaln(a)) / sc**a
        v1, _ = integrate.quad(f, 0, theta0[0], limit=200)
        v2, _ = integrate.quad(f, theta0[0], math.inf, limit=200)
        return v1 + v2
    if name == "gaussian_full":
        m, v = -y0[0] / (2 * y0[1]), -1 / (2 * y0[1])
        dens = lambda x: math.exp(-(x - m) ** 2 / (2 * v)) / math.sqrt(2 * math.pi * v)
        g = (lambda x: abs(x - m) ** r) if j == 0 else (lambda x: abs(x * x - theta0[1]) ** r)
        val, _ = integrate.quad(lambda x: g(x) * dens(x), -math.inf, math.inf, limit=400)
        return val
    if spec.expect is not None and spec.k == 1:
        return spec.expect(y0, lambda x: abs(x - theta0[0]) ** r)
    raise ExpFamError(f"no moment routine for family {name!r}")


def c2_expfam(spec: ExpFamilySpec, theta0, tails: TailParams, C_T: float, r: float = 3.0) -> BoundReport:
    """C₂ for E[sup_n b_n² W₂²(μ_{θ₀}, μ_{θ̂_n})], assembled as
    C_T (interior + exterior)².

    interior: max_{|η−θ₀|≤δ} Φ(η) Σ_j σ_j [α₀ + α₁ (E|t_j−θ₀_j|^r/σ_j^r)^{⌈r⌉}]^{1/r};
    exterior: τ Σ_n b_n P(|θ̂_n−θ₀| > δ) + ∫_τ^∞ Σ_n b_n [3 P_Y(m(t)) + N(t) e^{−n h(t)}] dt
    with P_Y the Yurinskii exponential bound, all series summed numerically.
    """
    from .rates.teicher import teicher_constants

    if tails is None:
        raise MissingTailError("c2_expfam needs tail parameters")
    if not C_T > 0:
        raise ExpFamError("C_T must be positive")
    theta0 = _vec(theta0, spec.k)
    y0 = mean_map_inverse(spec, theta0)
    HM = hess_M(spec, y0)
    sig = np.sqrt(np.clip(np.diag(HM), 0, None))
    B2 = float(np.trace(HM))

    # interior: Φ maximized over a grid of the closed δ-ball
    dirs = _directions(spec.k, 32)
    radii = np.linspace(0, tails.delta, 41)
    pts = [theta0 + u * d for u in radii for d in dirs]
    if not all(spec.in_theta(p) for p in pts):
        raise ExpFamError("the δ-ball around θ₀ must lie inside Θ")
    phi_max = max(phi(spec, theta0, p) for p in pts)
    tc = teicher_constants(r)
    moments = [_abs_central_moment(spec, y0, theta0, r, j) for j in range(spec.k)]
    interior = compose("expfam_interior", {"r": float(r), "sigma": sig.tolist(), "abs_moment": moments},
                       {"phi_max": given(phi_max, "grid max of Φ over the δ-ball (41 radii)"),
                        "alpha0": tc.ledger["alpha0"], "alpha1": tc.ledger["alpha1"]})

    # exterior
    cr, cm = (_cauchy(spec, y0, theta0, tails.cauchy_radius) if tails.cauchy_max is None
              else (float(tails.cauchy_radius), float(tails.cauchy_max)))
    H = yurinskii_H(spec.k, B2, cm, cr)

    def z_of(a):
        return a * a / (B2 + 1.62 * a * H)

    split = None
    if tails.phi1_inverse is None or tails.phi2 is None:
        split = radial_split(spec, theta0, tails.radial_max)
    m = _m_function(tails, split)
    h = _h_lower(spec, theta0, tails, split)

    def f(t):
        mt = m(t)
        if mt <= 0:
            return math.inf
        val = 3 * _series_b(z_of(mt))
        ht = h(t)
        if ht < math.inf:
            val += tails.covering(tails.rho(t), tails.sigma(t)) * _series_b(ht)
        return val

    integral = _guarded(f, tails.tau)
    if integral.status != "finite":
        raise ExpFamError(f"exterior tail integral is {integral.status}")
    exterior = compose("expfam_exterior", {}, {
        "tau": given(tails.tau, "time threshold (user input)"),
        "series_delta": given(_series_b(z_of(tails.delta)), "Σ b_n exp(−n z(δ)) summed numerically",
                              B2=B2, H=H, cauchy_radius=cr, cauchy_max=cm),
        "tail_integral": given(integral.value, "adaptive quadrature with certified tail",
                               remainder=integral.remainder),
    })
    subs = {"C_T": given(C_T, "Talagrand constant (user input)"), "interior": interior, "exterior": exterior}
    inp = {"family": dict(spec.params), "theta0": theta0.tolist(), "r": float(r),
           "delta": tails.delta, "tau": tails.tau}
    return BoundReport("C_2", compose("c2_expfam", inp, subs), inp | {"C_T": float(C_T)},
                       verdict="conditional")
