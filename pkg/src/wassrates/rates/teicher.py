"""Explicit constants for the dominated ergodic (Siegmund-Teicher) bound

    E[ sup_n |S_n|^r / (n Log₂ n)^{r/2} ] ≤ σ^r [α₀(r) + α₁(r) (E|X|^r / σ^r)^{⌈r⌉}]

built from the constructive proof: the λ_{q,k} table, the series K(h), the
block constants γ_r and α, the threshold u₀, and β₀(r), β₁(r).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_FLOOR, Decimal, localcontext
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from ..measures import derive_seed, get_law, make_rng
from ..report import BoundReport, Node, compose, formula, given
from .schedule import log2_fn

U0_GRID = 1e-3
SERIES_TOL = 1e-10


class TeicherError(ValueError):
    pass


# ---------------------------------------------------------------------------
# λ table


@lru_cache(maxsize=None)
def lambda_qk(q: int, k: int) -> float:
    """λ_{q,k}: λ_{2,1} = 1, λ_{q,0} = 2^{q-2}, λ_{q+1,h} = 2^{q-1} λ_{q,h-1}."""
    if q < 2 or not 0 <= k <= q - 1:
        raise TeicherError(f"λ_{{{q},{k}}} is undefined")
    if k == 0:
        return 2.0 ** (q - 2)
    if q == 2:
        return 1.0
    return 2.0 ** (q - 2) * lambda_qk(q - 1, k - 1)


@formula("lambda_qk")
def _f_lambda(inputs, subs):
    return lambda_qk(int(inputs["q"]), int(inputs["k"]))


# ---------------------------------------------------------------------------
# n_k = [e^k]


@lru_cache(maxsize=None)
def block_end(k: int) -> tuple[int, float]:
    """(n_k, log n_k) with n_k = floor(e^k) computed in exact decimal arithmetic."""
    with localcontext() as ctx:
        ctx.prec = 60 + k // 2
        e = Decimal(k).exp()
        n = int(e.to_integral_value(rounding=ROUND_FLOOR))
        logn = float(Decimal(n).ln()) if n > 1 else 0.0
    return n, logn


def _log_log2(logn: float) -> float:
    """log Log₂(n) given log n."""
    return math.log(math.log(logn)) if logn >= math.e else 0.0


# ---------------------------------------------------------------------------
# K(h) series


def _k_term(n, r, h):
    E = (r - h) / r + h / 2
    return n ** (-E) * np.asarray(log2_fn(n)) ** (-h / 2)


def _k_tail_integral(a: float, r: float, h: float) -> tuple[float, float]:
    """∫_a^∞ x^{-E} (log log x)^{-h/2} dx for a ≥ e^e, with its quadrature error."""
    E = (r - h) / r + h / 2
    t0 = math.log(a)
    c = E - 1.0

    def g(u):
        return math.exp(-u) * math.log(t0 + u / c) ** (-h / 2)

    val, err = integrate.quad(g, 0.0, np.inf, epsabs=0.0, epsrel=1e-13, limit=500)
    scale = math.exp(-c * t0) / c
    return val * scale, err * scale


def k_series(r: float, h: float) -> tuple[float, float, int]:
    """K(h) = Σ_n n^{-(r-h)/r} c_n^h with c_n = (n Log₂ n)^{-1/2}.

    Returns (upper bound, remainder, N). The terms are convex past e^e, so the
    tail beyond N lies between ∫_{N+1} f + f(N+1)/2 and ∫_{N+1/2} f; the upper
    end is used and the gap is the remainder.
    """
    if h <= 0:
        raise TeicherError("K(h) needs h > 0")
    E = (r - h) / r + h / 2
    N = 1024
    while E * N ** (-E - 1) / 4 >= SERIES_TOL / 10:
        N *= 2
    n = np.arange(1, N + 1, dtype=float)
    head = float(np.sum(_k_term(n, r, h)))
    up, up_err = _k_tail_integral(N + 0.5, r, h)
    lo, lo_err = _k_tail_integral(N + 1.0, r, h)
    lo += float(_k_term(np.array([N + 1.0]), r, h)[0]) / 2
    remainder = max(up - lo, 0.0) + up_err + lo_err
    if remainder >= SERIES_TOL:
        raise TeicherError(f"K({h}) remainder {remainder} above tolerance")
    return head + up + up_err, remainder, N


# ---------------------------------------------------------------------------
# block constants


def gamma_r(r: float) -> tuple[float, int, int]:
    """sup_{k≥0} (Log₂ n_{k+1} / n_{k+1})^{1/2} n_{k+1}^{1/r}.

    The log of the summand is -a log n + ½ log Log₂ n with a = ½ - 1/r, which
    decreases once log n · log log n > 1/(2a); the scan stops a few blocks past
    that point. Returns (γ_r, argmax k, last k scanned).
    """
    a = 0.5 - 1.0 / r
    best, arg, k = -math.inf, 0, 0
    while True:
        _, logn = block_end(k + 1)
        val = -a * logn + 0.5 * _log_log2(logn)
        if val > best:
            best, arg = val, k
        if logn >= math.e and logn * math.log(logn) > 1 / (2 * a) and k >= arg + 3:
            return math.exp(best), arg, k
        k += 1
        if k > 5000:
            raise TeicherError("γ_r scan did not reach its monotone regime")


def block_ratio_alpha(k_max: int = 300) -> tuple[float, int]:
    """α = inf_{k≥0} (n_k Log₂ n_k / (n_{k+1} Log₂ n_{k+1}))^{1/2}.

    The ratios approach e^{-1/2} from below and increase after the first few
    blocks; the scan checks that the tail is increasing and above the minimum.
    """
    vals = []
    for k in range(k_max + 1):
        _, l0 = block_end(k)
        _, l1 = block_end(k + 1)
        vals.append(0.5 * (l0 + _log_log2(l0) - l1 - _log_log2(l1)))
    vals = np.exp(np.asarray(vals))
    arg = int(np.argmin(vals))
    tail = vals[arg + 1:]
    if not (np.all(np.diff(tail[10:]) > 0) and tail[-1] < math.exp(-0.5)):
        raise TeicherError("block ratio tail is not monotone; widen the scan")
    return float(vals[arg]), arg


def block_series(k_direct: int = 60) -> tuple[float, float]:
    """Σ_{k≥0} exp{-2 Log₂ n_{k+1}} with a Hurwitz-zeta tail.

    For k ≥ k_direct the term is (log n_{k+1})^{-2} with
    k+1 - 2e^{-(k+1)} ≤ log n_{k+1} ≤ k+1, so the tail lies between
    ζ(2, k_direct+1) and ζ(2, k_direct+1-ε).
    """
    head = 0.0
    for k in range(k_direct):
        _, logn = block_end(k + 1)
        L2 = math.log(logn) if logn >= math.e else 1.0
        head += math.exp(-2.0 * L2)
    eps = 2.0 * math.exp(-(k_direct + 1))
    upper = float(special.zeta(2.0, k_direct + 1 - eps))
    lower = float(special.zeta(2.0, k_direct + 1))
    return head + upper, upper - lower


@formula("teicher_u0")
def _f_u0(inputs, subs):
    g, al = subs["gamma_r"], subs["alpha"]
    target = 4 * g * g + 1
    m = math.floor(target / (al * g) / U0_GRID)
    while al * g * (m * U0_GRID) <= target:
        m += 1
    return m * U0_GRID


@formula("teicher_beta0")
def _f_beta0(inputs, subs):
    r = float(inputs["r"])
    g, al, u0, S = subs["gamma_r"], subs["alpha"], subs["u0"], subs["block_series"]
    return u0**r + 4 * r * g ** (-r) * S * ((4 * g * g + 1) / (2 * al)) ** r * math.gamma(r)


def _k_name(h: float) -> str:
    return f"K[{h:.12g}]"


@formula("teicher_beta1")
def _f_beta1(inputs, subs):
    r = float(inputs["r"])
    K1 = subs[_k_name(1)]
    if float(r).is_integer():
        q = int(r)
        return sum(subs[f"lambda[{q},{k}]"] * subs[_k_name(q - k)] * K1**k for k in range(q))
    q = int(math.floor(r))
    frac = r - q
    inner = sum(subs[f"lambda[{q},{k}]"] * subs[_k_name(q - k)] * K1**k for k in range(q - 1))
    return 2.0 ** (q - 1) * (subs[_k_name(r)]
                            + subs[f"lambda[{q},{q - 1}]"] * subs[_k_name(frac)] * K1**q
                            + subs[_k_name(frac)] * inner)


@formula("symmetrization_factor")
def _f_sym(inputs, subs):
    r = float(inputs["r"])
    if inputs["which"] == "alpha0":
        return 2.0 ** (r / 2)
    return 2.0 ** (r * (1 + math.ceil(r)) / 2)


@formula("teicher_alpha")
def _f_alpha(inputs, subs):
    r = float(inputs["r"])
    return subs["symmetrization_factor"] * 2.0 ** (r - 1) * subs["beta"]


@formula("pick")
def _f_pick(inputs, subs):
    return subs[inputs["key"]]


@dataclass(frozen=True)
class TeicherConstants:
    """α₀(r), α₁(r) for arbitrary centered laws, with the full ledger."""

    r: float
    alpha0: float
    alpha1: float
    ledger: Node

    def bound(self, sigma: float, abs_moment: float) -> float:
        """σ^r [α₀ + α₁ (E|X|^r / σ^r)^{⌈r⌉}]; zero for a degenerate law."""
        if sigma == 0:
            return 0.0
        ratio = abs_moment / sigma**self.r
        return sigma**self.r * (self.alpha0 + self.alpha1 * ratio ** math.ceil(self.r))

    def report(self) -> BoundReport:
        return BoundReport("teicher", self.ledger, {"r": self.r})


@lru_cache(maxsize=None)
def teicher_constants(r: float) -> TeicherConstants:
    """Constants of the dominated ergodic bound for order r > 2.

    The symmetric-law constants 2^{r-1}β₀ and 2^{r-1}β₁ are transferred to
    arbitrary centered laws by symmetrization: Y = X - X' has variance 2σ² and
    E|Y|^r ≤ 2^r E|X|^r, which costs 2^{r/2} on α₀ and 2^{r(1+⌈r⌉)/2} on α₁.
    """
    r = float(r)
    if not r > 2:
        raise TeicherError("teicher_constants needs r > 2")
    subs1: dict[str, Node] = {}
    ks = {1.0}
    if r.is_integer():
        q = int(r)
        ks |= {float(q - k) for k in range(q)}
        lam = [(q, k) for k in range(q)]
    else:
        q = int(math.floor(r))
        ks |= {r, r - q} | {float(q - k) for k in range(q - 1)}
        lam = [(q, k) for k in range(q)]
    for qq, kk in lam:
        subs1[f"lambda[{qq},{kk}]"] = compose("lambda_qk", {"q": qq, "k": kk}, {})
    for h in sorted(ks):
        val, rem, N = k_series(r, h)
        subs1[_k_name(h)] = given(val, "series summed to N terms plus convex integral tail; "
                                       "remainder already added", r=r, h=h, N=N, remainder=rem)
    beta1 = compose("teicher_beta1", {"r": r}, subs1)

    g, g_arg, g_last = gamma_r(r)
    al, al_arg = block_ratio_alpha()
    S, S_rem = block_series()
    gnode = given(g, "scan over k ≥ 0 into the decreasing regime", argmax_k=g_arg, last_k=g_last)
    anode = given(al, "scan over k ≤ 300 with increasing tail", argmin_k=al_arg)
    u0 = compose("teicher_u0", {"grid": U0_GRID}, {"gamma_r": gnode, "alpha": anode})
    snode = given(S, "direct sum over 60 blocks plus Hurwitz-zeta tail", remainder=S_rem)
    beta0 = compose("teicher_beta0", {"r": r},
                    {"gamma_r": gnode, "alpha": anode, "u0": u0, "block_series": snode})

    a0 = compose("teicher_alpha", {"r": r}, {
        "beta": beta0,
        "symmetrization_factor": compose("symmetrization_factor", {"r": r, "which": "alpha0"}, {}),
    })
    a1 = compose("teicher_alpha", {"r": r}, {
        "beta": beta1,
        "symmetrization_factor": compose("symmetrization_factor", {"r": r, "which": "alpha1"}, {}),
    })
    root = compose("pick", {"key": "alpha0"}, {"alpha0": a0, "alpha1": a1})
    return TeicherConstants(r, a0.value, a1.value, root)


# ---------------------------------------------------------------------------
# Monte Carlo check


@dataclass(frozen=True)
class TeicherMC:
    law: str
    r: float
    n_max: int
    replicas: int
    empirical: float
    stderr: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.empirical <= self.bound


def sup_statistic(x: np.ndarray, r: float) -> np.ndarray:
    """max_n |S_n|^r / (n Log₂ n)^{r/2} for each row of x."""
    S = np.cumsum(x, axis=-1)
    n = np.arange(1, x.shape[-1] + 1, dtype=float)
    norm = (n * log2_fn(n)) ** (r / 2)
    return np.max(np.abs(S) ** r / norm, axis=-1)


def verify_teicher_mc(law: str, r: float, n_max: int = 10_000, replicas: int = 200,
                      seed: int = 0) -> TeicherMC:
    """Monte Carlo mean of the truncated supremum against the explicit bound.

    Truncating at n_max underestimates the supremum, so empirical ≤ bound is
    a valid one-sided check.
    """
    spec = get_law(law)
    if abs(spec.mean) > 0:
        raise TeicherError(f"law {law!r} is not centered")
    tc = teicher_constants(r)
    vals = np.empty(replicas)
    for i in range(replicas):
        rng = make_rng(derive_seed(seed, i))
        vals[i] = sup_statistic(spec.sample(rng, n_max), r)
    sigma = math.sqrt(spec.variance)
    bound = tc.bound(sigma, spec.central_abs_moment(r))
    se = float(vals.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else math.nan
    return TeicherMC(law, float(r), n_max, replicas, float(vals.mean()), se, bound)
