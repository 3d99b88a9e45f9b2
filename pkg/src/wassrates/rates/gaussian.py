"""Constants of the Gaussian plug-in rate: C₂ (mean of the squared supremum)
and Y₂ (almost-sure limsup), with the eigenvalue lemma constant K(ε, d),
the moments ω_k(ρ), and the Wishart tail series H(ε, d)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..report import BoundReport, compose, formula, given
from .schedule import RateSchedule, rate_b


class EpsilonRangeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# eigenvalue lemma


def _g(x):
    """(x − 1 − log x)/(x − 1)², extended by 1/2 at x = 1."""
    x = np.asarray(x, dtype=float)
    t = x - 1.0
    small = np.abs(t) < 1e-4
    safe = np.where(small, 2.0, x)
    out = (safe - 1 - np.log(safe)) / (safe - 1) ** 2
    # series 1/2 − t/3 + t²/4 near x = 1
    return np.where(small, 0.5 - t / 3 + t * t / 4, out)


def _k_eps_parts(eps: float, d: int, delta):
    delta = np.asarray(delta, dtype=float)
    K1 = np.maximum(_g(1 - delta), _g(1 + delta))
    K2 = (1 + delta) ** 2 / delta**2
    p0 = eps / (1 + delta) ** d
    d2 = np.arange(1, d + 1, dtype=float)[:, None]
    c = np.max(p0 ** (-1 / d2) - (1 / d2) * p0 ** (-2 / d2) * np.log(p0), axis=0)
    return K1, K2, c


def _check_eps(eps: float, d: int):
    if not 0 < eps <= (2 * (d + 1)) ** (-d):
        raise EpsilonRangeError(f"eps must lie in (0, [2(d+1)]^-d] = (0, {(2 * (d + 1)) ** (-d)!r}]")


@formula("k_eps_d")
def _f_keps(inputs, subs):
    K1, K2, c = _k_eps_parts(float(inputs["eps"]), int(inputs["d"]), subs["delta"])
    return float(np.max(np.maximum(K1, c * K2)))


def k_eps_d_node(eps: float, d: int):
    """Ledger node for K(ε, d), minimized over the split radius δ ∈ (0, 1).

    Eigenvalues within [1−δ, 1+δ] are handled by K₁(δ) = sup (x−1−log x)/(x−1)²
    on that interval; the others use Π λ ≥ p₀ = ε/(1+δ)^d and
    K₂(δ) = sup_{x ∉ [1−δ,1+δ]} x²/(x−1)² = (1+δ)²/δ².
    """
    _check_eps(eps, d)
    deltas = np.linspace(1e-3, 1 - 1e-3, 999)
    K1, K2, c = _k_eps_parts(eps, d, deltas)
    vals = np.maximum(K1, c * K2)
    best = float(deltas[int(np.argmin(vals))])
    return compose("k_eps_d", {"eps": float(eps), "d": int(d)},
                   {"delta": given(best, "split radius minimizing the bound on a 999-point grid")})


def k_eps_d(eps: float, d: int) -> float:
    """K(ε, d) with Σ(λ_j − 1 − log λ_j) ≤ K ‖M − Id‖_F² whenever det M ≥ ε."""
    return k_eps_d_node(eps, d).value


# ---------------------------------------------------------------------------
# product moments of correlated normals


def omega_k(rho: float, k: int) -> float:
    """ω_k(ρ) = E[(XY − ρ)^k] for standard normals with correlation ρ.

    With Y = ρX + √(1−ρ²) W and Isserlis' theorem, E[(XY)²] = 1 + 2ρ²,
    E[(XY)³] = 9ρ + 6ρ³, E[(XY)⁴] = 9 + 72ρ² + 24ρ⁴; centering gives
    ω₂ = 1 + ρ² and ω₄ = 9 + 42ρ² + 9ρ⁴ (so ω₄ ≤ 60).
    """
    if abs(rho) > 1:
        raise ValueError("|rho| must be <= 1")
    r2 = rho * rho
    if k == 2:
        return 1 + r2
    if k == 4:
        return 9 + 42 * r2 + 9 * r2 * r2
    raise ValueError("k must be 2 or 4")


# ---------------------------------------------------------------------------
# Wishart tail series


@dataclass(frozen=True)
class WishartTail:
    H: float
    A: float
    eta: float
    n_terms: int
    remainder: float


def _tail_terms(n, A, eta, d):
    """Per-n bounds on ∫_0^∞ P(1{det<ε} Σ(λ−log λ−1) > z) dz (without b_n²)."""
    e = math.e
    k1 = (0.5 - math.log(2)) / 2
    t1 = A * d * np.exp(k1 * (n - d))
    c2 = eta * (e - 2) * A / (8 * e * (1 + eta))
    t2 = 8 * e * (1 + eta) / (eta * (e - 2) * (n - 1)) * np.exp(-c2 * (n - 1))
    c3 = A / (8 * d * (1 + eta))
    t3 = 8 * d * d * (1 + eta) / (n - d) * np.exp(-c3 * (n - d))
    return t1 + t2 + t3


def _tail_remainder(N, A, eta, d):
    """Geometric bound on Σ_{n>N} b_n² × (per-n terms), using b_n² ≤ n."""
    e = math.e
    q1 = math.exp((0.5 - math.log(2)) / 2)
    r1 = A * d * q1 ** (N + 1 - d) * ((N + 1) / (1 - q1) + q1 / (1 - q1) ** 2)
    c2 = eta * (e - 2) * A / (8 * e * (1 + eta))
    r2 = (N + 1) / N * 8 * e * (1 + eta) / (eta * (e - 2)) * np.exp(-c2 * N) / (-np.expm1(-c2))
    c3 = A / (8 * d * (1 + eta))
    r3 = (N + 1) / (N + 1 - d) * 8 * d * d * (1 + eta) * np.exp(-c3 * (N + 1 - d)) / (-np.expm1(-c3))
    return r1 + r2 + r3


def wishart_tail_H(eps: float, d: int, n_A: int = 64, n_eta: int = 32,
                   tol: float = 1e-9) -> WishartTail:
    """H(ε, d) = Σ_{n≥d+1} b_n² [A P(det < ε) + the two Chernoff tail integrals],
    minimized over a grid of (A, η) with η ≤ 1/(1+log(d+1)) and
    A ≥ max{4d(1+1/η), −2(1+η) log ε}."""
    _check_eps(eps, d)
    eta_max = 1 / (1 + math.log(d + 1))
    etas = np.geomspace(eta_max * 1e-3, eta_max, n_eta)[:, None]
    A_lb = np.maximum(4 * d * (1 + 1 / etas), -2 * (1 + etas) * math.log(eps))
    As = A_lb * np.geomspace(1.0, 1e3, n_A)[None, :]
    etas = np.broadcast_to(etas, As.shape)
    N = d + 64
    while np.max(_tail_remainder(N, As, etas, d)) >= tol:
        N *= 2
    n = np.arange(d + 1, N + 1, dtype=float)
    b2 = rate_b(n, RateSchedule(1, "parametric")) ** 2
    total = np.zeros(As.shape)
    for i in range(len(n)):
        total += b2[i] * _tail_terms(n[i], As, etas, d)
    rem = _tail_remainder(N, As, etas, d)
    total = total + rem
    i, j = np.unravel_index(int(np.argmin(total)), total.shape)
    return WishartTail(float(total[i, j]), float(As[i, j]), float(etas[i, j]), int(N), float(rem[i, j]))


# ---------------------------------------------------------------------------
# C₂ and Y₂


@formula("c_star_mean")
def _f_cstar(inputs, subs):
    r = float(inputs["r"])
    m = 2 ** (r / 2) * math.gamma((r + 1) / 2) / math.sqrt(math.pi)
    return (subs["alpha0"] + subs["alpha1"] * m ** math.ceil(r)) ** (2 / r)


@formula("c_ast_cov")
def _f_cast(inputs, subs):
    d = int(inputs["d"])
    a0, a1 = subs["alpha0"], subs["alpha1"]
    A = math.sqrt(a0 + 15.0**4 * a1)
    A_off = math.sqrt(a0 + omega_k(0.0, 4) ** 4 * a1)
    B = a0 + 3.0**4 * a1
    talagrand_over_frob = 2.0
    return talagrand_over_frob * (d * (4 * A + 2 * B) + d * (d - 1) * (2 * A_off + 2 * B))


@formula("rate_b_parametric")
def _f_bd(inputs, subs):
    return rate_b(int(inputs["n"]), RateSchedule(1, "parametric"))


@formula("trace")
def _f_tr(inputs, subs):
    return float(np.trace(np.asarray(inputs["V0"], dtype=float)))


@formula("frobenius")
def _f_fro(inputs, subs):
    return float(np.linalg.norm(np.asarray(inputs["V0"], dtype=float)))


@formula("sigma_max")
def _f_smax(inputs, subs):
    return float(math.sqrt(max(np.linalg.eigvalsh(np.asarray(inputs["V0"], dtype=float))[-1], 0.0)))


@formula("talagrand_gauss")
def _f_ct(inputs, subs):
    return 2.0 * subs["frobenius"]


@formula("c2_gauss")
def _f_c2(inputs, subs):
    d = int(inputs["d"])
    tr, fro = subs["trace"], subs["frobenius"]
    return ((subs["c_star"] + subs["b_d"] ** 2 * (d + 1)) * tr
            + subs["c_ast"] * subs["K_eps_d"] * fro
            + subs["C_T"] * subs["H"])


@formula("y2_gauss")
def _f_y2(inputs, subs):
    d = int(inputs["d"])
    return math.sqrt(2) * (subs["sigma_max"] + d * math.sqrt(subs["K_eps_d"]) * math.sqrt(subs["trace"]))


def _check_v0(V0) -> np.ndarray:
    V = np.atleast_2d(np.asarray(V0, dtype=float))
    if V.shape[0] != V.shape[1] or not np.allclose(V, V.T, atol=1e-10):
        raise ValueError("V0 must be a symmetric matrix")
    if np.linalg.eigvalsh(V)[0] <= 0:
        raise ValueError("V0 must be positive definite")
    return V


def default_eps(d: int) -> float:
    return (2 * (d + 1)) ** (-d)


def c2_gauss(V0, eps: float | None = None, r_mean: float = 4.0) -> BoundReport:
    """C₂ bounding E[sup_n b_n² W₂²(μ₀, μ_{θ̂_n})] for Gaussian data.

    C₂ = [c⋆ + b_d²(d+1)] tr V₀ + c∗ K(ε,d) ‖V₀‖_F + C_T H(ε,d), with
    C_T = 2‖V₀‖_F the Gaussian Talagrand constant.
    """
    from .teicher import teicher_constants

    V = _check_v0(V0)
    d = V.shape[0]
    eps = default_eps(d) if eps is None else float(eps)
    _check_eps(eps, d)
    tm = teicher_constants(r_mean)
    t4 = teicher_constants(4.0)
    wt = wishart_tail_H(eps, d)
    vin = {"V0": V.tolist()}
    fro = compose("frobenius", vin, {})
    subs = {
        "trace": compose("trace", vin, {}),
        "frobenius": fro,
        "c_star": compose("c_star_mean", {"r": float(r_mean)},
                          {"alpha0": tm.ledger["alpha0"], "alpha1": tm.ledger["alpha1"]}),
        "b_d": compose("rate_b_parametric", {"n": d}, {}),
        "c_ast": compose("c_ast_cov", {"d": d},
                         {"alpha0": t4.ledger["alpha0"], "alpha1": t4.ledger["alpha1"]}),
        "K_eps_d": k_eps_d_node(eps, d),
        "C_T": compose("talagrand_gauss", {}, {"frobenius": fro}),
        "H": given(wt.H, "Chernoff series minimized over the (A, eta) grid; remainder added",
                   A=wt.A, eta=wt.eta, n_terms=wt.n_terms, remainder=wt.remainder),
    }
    inp = {"d": d, "eps": eps, "r_mean": float(r_mean)}
    root = compose("c2_gauss", inp, subs)
    return BoundReport("C_2", root, inp | vin)


def y2_gauss(V0, eps: float | None = None) -> BoundReport:
    """Y₂ = √2 {σ_max(V₀) + d √K(ε,d) √tr V₀}, σ_max² the largest eigenvalue."""
    V = _check_v0(V0)
    d = V.shape[0]
    eps = default_eps(d) if eps is None else float(eps)
    vin = {"V0": V.tolist()}
    subs = {
        "sigma_max": compose("sigma_max", vin, {}),
        "trace": compose("trace", vin, {}),
        "K_eps_d": k_eps_d_node(eps, d),
    }
    inp = {"d": d, "eps": eps}
    root = compose("y2_gauss", inp, subs)
    return BoundReport("Y_2", root, inp | vin)


def talagrand_constant_gauss(V0) -> float:
    """C_T = 2‖V₀‖_F, valid since the sharp constant 2σ_max² is below it."""
    return 2.0 * float(np.linalg.norm(_check_v0(V0)))
