import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wassrates.rates import (
    HypothesisError,
    RateSchedule,
    c2_gauss,
    cp_nonparametric,
    default_eps,
    evaluation_grid,
    k_eps_d,
    k_pd,
    lambda_qk,
    log2_fn,
    omega_k,
    rate_b,
    tail_window,
    talagrand_constant_gauss,
    teicher_constants,
    thm1_params,
    verify_teicher_mc,
    wishart_tail_H,
    y2_gauss,
    yp_nonparametric,
)
from wassrates.rates.gaussian import EpsilonRangeError
from wassrates.rates.teicher import TeicherError, block_end, block_ratio_alpha, block_series, gamma_r, k_series
from wassrates.report import audit

from helpers import random_pd_with_det
from oracles import omega_quad

# ---------------------------------------------------------------------------
# schedule


def test_log2_fn_values():
    assert log2_fn(1.0) == 1.0
    assert log2_fn(math.exp(math.e)) == pytest.approx(1.0)
    assert log2_fn(math.exp(math.e**2)) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        log2_fn(0.0)


def test_log2_fn_continuous_at_threshold():
    t = math.exp(math.e)
    assert log2_fn(t * (1 - 1e-12)) == pytest.approx(log2_fn(t * (1 + 1e-12)), abs=1e-10)


def test_rate_b_values():
    for kind in ("nonparametric", "parametric"):
        assert rate_b(1, RateSchedule(2, kind)) == 1.0
    assert rate_b(16, RateSchedule(1, "parametric")) == pytest.approx(math.sqrt(16 / math.log(math.log(16))))


@pytest.mark.parametrize("sched", [RateSchedule(1, "nonparametric"), RateSchedule(3, "nonparametric"),
                                   RateSchedule(1, "parametric")])
def test_rate_b_monotone(sched):
    b = rate_b(np.arange(3, 10**6 + 1), sched)
    assert np.all(np.diff(b) >= 0)


def test_schedule_validation():
    with pytest.raises(ValueError):
        RateSchedule(0.5)
    with pytest.raises(ValueError):
        RateSchedule(1, "fast")


def test_evaluation_grid():
    g = evaluation_grid(10_000)
    assert g[0] == 1 and g[-1] == 10_000
    assert np.all(np.diff(g) > 0)
    assert tail_window(g, 10_000).sum() >= 250
    assert list(evaluation_grid(3)) == [1, 2, 3]


# ---------------------------------------------------------------------------
# nonparametric constants


def test_k_pd_values():
    assert k_pd(1, 1) == 12
    assert k_pd(2, 1) == pytest.approx(16 * 5 / 9)
    assert k_pd(1, 4) == pytest.approx(24)


def test_thm1_params_examples():
    prm = thm1_params(2, 1, 1)
    assert prm.M == pytest.approx(1.4) and prm.r_high == pytest.approx(3 / 1.4)
    prm = thm1_params(1, 1, 2)
    assert prm.M == pytest.approx(1.25) and prm.r_high == pytest.approx(2.4)
    with pytest.raises(HypothesisError, match="p > d/2"):
        thm1_params(1, 2, 1)


@given(st.floats(1, 5), st.integers(1, 6), st.floats(0.05, 5), st.floats(0.001, 0.999))
def test_thm1_exponents_positive(p, d, delta, frac):
    if not p > d / 2:
        return
    prm = thm1_params(p, d, delta)
    r = prm.r_low + frac * (prm.r_high - prm.r_low)
    if not prm.contains(r):
        return
    assert prm.lam(r) > 0 and prm.sigma(r) > 0


def test_cp_nonparametric_ledger_and_range():
    rep = cp_nonparametric(1, 1, 1, moment=0.25)
    assert math.isfinite(rep.value) and rep.value > 0
    assert audit(rep) == (True, [])
    with pytest.raises(HypothesisError):
        cp_nonparametric(1, 1, 1, moment=0.25, r=2.9)
    # the Bernoulli law on {0, 1}: ∫|x|^3 = P(1)
    assert math.isfinite(cp_nonparametric(1, 1, 1, moment=0.3).value)


def test_cp_grows_with_moment():
    vals = [cp_nonparametric(1, 1, 1, m).value for m in (0.1, 1.0, 10.0)]
    assert vals[0] < vals[1] < vals[2]


def test_yp_point_mass_and_monotone():
    rep = yp_nonparametric(1, 1, 2, 0.0)
    assert rep.value == pytest.approx(math.sqrt(2) * 12 / (1 - 2**-0.5))
    vals = [yp_nonparametric(1, 1, 2, m).value for m in (0.0, 1.0, 4.0)]
    assert vals[0] < vals[1] < vals[2]
    assert audit(yp_nonparametric(2, 3, 1, 1.0))[0]
    with pytest.raises(HypothesisError):
        yp_nonparametric(1, 2, 1, 1.0)


# ---------------------------------------------------------------------------
# dominated ergodic constants


def test_lambda_table():
    assert lambda_qk(2, 1) == 1
    assert lambda_qk(3, 0) == 2
    assert lambda_qk(4, 1) == 8
    with pytest.raises(TeicherError):
        lambda_qk(2, 2)


def test_block_end_exact():
    assert [block_end(k)[0] for k in range(5)] == [1, 2, 7, 20, 54]
    n, logn = block_end(40)
    # exact rational partial sum of the exponential series; the tail past 200 terms is < 1e-50
    e40 = sum(Fraction(40**k, math.factorial(k)) for k in range(200))
    assert n == math.floor(e40)
    assert n != math.floor(math.exp(40))  # double precision alone gets this wrong
    assert logn == pytest.approx(40.0, abs=1e-12)


def test_k_series_against_direct_sum():
    # r = h = 4: Σ (n Log₂ n)^{-2}
    val, rem, _ = k_series(4.0, 4.0)
    n = np.arange(1, 2_000_001, dtype=float)
    head = np.sum((n * log2_fn(n)) ** -2.0)
    # the tail beyond 2·10⁶ lies between 0 and 1/(N (log log N)²)
    N = n[-1]
    tail_hi = 1 / (N * math.log(math.log(N)) ** 2)
    assert head <= val <= head + tail_hi + rem
    assert rem < 1e-10


def test_gamma_alpha_blocks():
    g, arg, last = gamma_r(4.0)
    # direct scan oracle over k ≤ 200
    vals = []
    for k in range(200):
        n = math.floor(math.exp(k + 1))
        L = math.log(math.log(n)) if n >= math.exp(math.e) else 1.0
        vals.append(math.sqrt(L / n) * n**0.25)
    assert g == pytest.approx(max(vals), rel=1e-9)
    al, _ = block_ratio_alpha()
    assert 0 < al < math.exp(-0.5)
    S, rem = block_series()
    assert S > 0 and rem < 1e-9


@pytest.mark.parametrize("r", [2.5, 3.0, 4.0])
def test_teicher_constants_positive_and_audited(r):
    tc = teicher_constants(r)
    assert 0 < tc.alpha0 < math.inf and 0 < tc.alpha1 < math.inf
    assert audit(tc.report()) == (True, [])


def test_teicher_rejects_small_r():
    with pytest.raises(TeicherError):
        teicher_constants(2.0)


def test_teicher_ledger_tamper_detected():
    rep = teicher_constants(3.0).report()
    d = rep.to_dict()
    d["ledger"]["sub_constants"]["alpha0"]["value"] *= 1.0001
    ok, fails = audit(d)
    assert not ok and any("alpha0" in f for f in fails)


@pytest.mark.parametrize("law", ["rademacher", "normal", "uniform_sym", "zero"])
@pytest.mark.parametrize("r", [3.0, 4.0])
def test_teicher_mc_small(law, r):
    res = verify_teicher_mc(law, r, n_max=2000, replicas=20, seed=3)
    assert res.holds
    if law == "zero":
        assert res.empirical == 0.0


def test_teicher_mc_rejects_uncentered():
    with pytest.raises(TeicherError):
        verify_teicher_mc("uniform", 3.0, n_max=10, replicas=2)


# ---------------------------------------------------------------------------
# Gaussian constants


@pytest.mark.parametrize("rho", np.linspace(-1, 1, 9))
def test_omega_against_quadrature(rho):
    assert omega_k(rho, 2) == pytest.approx(omega_quad(rho, 2), rel=1e-10)
    assert omega_k(rho, 4) == pytest.approx(omega_quad(rho, 4), rel=1e-10)
    assert 1 <= omega_k(rho, 2) <= 2 and omega_k(rho, 4) <= 60


def test_omega_monte_carlo():
    r = np.random.default_rng(0)
    rho = 0.6
    x = r.standard_normal(2_000_000)
    y = rho * x + math.sqrt(1 - rho**2) * r.standard_normal(2_000_000)
    assert np.mean((x * y - rho) ** 4) == pytest.approx(omega_k(rho, 4), rel=0.03)


def test_k_eps_d_range():
    with pytest.raises(EpsilonRangeError):
        k_eps_d(0.3, 1)
    with pytest.raises(EpsilonRangeError):
        k_eps_d(0.0, 2)


def test_k_eps_d_dominates_one_dimensional_sup():
    eps = 0.05
    x = np.geomspace(eps, 1e4, 400_001)
    x = x[np.abs(x - 1) > 1e-6]
    ratio = (x - 1 - np.log(x)) / (x - 1) ** 2
    assert k_eps_d(eps, 1) >= ratio.max()


@pytest.mark.parametrize("eps,d", [(0.05, 1), (0.02, 2), (1e-3, 3)])
def test_k_eps_d_randomized(eps, d):
    K = k_eps_d(eps, d)
    Ms = random_pd_with_det(np.random.default_rng(d), d, eps, 1000)
    lam = np.linalg.eigvalsh(Ms)
    lhs = np.sum(lam - 1 - np.log(lam), axis=1)
    rhs = K * np.sum((Ms - np.eye(d)) ** 2, axis=(1, 2))
    assert np.all(lhs <= rhs * (1 + 1e-12) + 1e-15)


def test_wishart_tail_series():
    wt = wishart_tail_H(default_eps(2), 2)
    assert math.isfinite(wt.H) and wt.H > 0
    assert wt.remainder < 1e-9
    assert wt.eta <= 1 / (1 + math.log(3))
    assert wt.A >= max(4 * 2 * (1 + 1 / wt.eta), -2 * (1 + wt.eta) * math.log(default_eps(2))) * (1 - 1e-12)


def test_c2_gauss_ledger_and_composition():
    rep = c2_gauss(np.eye(2))
    assert audit(rep) == (True, [])
    s = {k: v.value for k, v in rep.sub_constants.items()}
    assert s["trace"] == 2 and s["frobenius"] == pytest.approx(math.sqrt(2))
    expect = (s["c_star"] + s["b_d"] ** 2 * 3) * 2 + s["c_ast"] * s["K_eps_d"] * math.sqrt(2) + s["C_T"] * s["H"]
    assert rep.value == pytest.approx(expect, rel=1e-12)
    tc = teicher_constants(4.0)
    assert s["c_star"] == pytest.approx(math.sqrt(tc.alpha0 + tc.alpha1 * 3**4), rel=1e-12)


def test_y2_gauss_identity_and_scaling():
    for d in (1, 2, 3):
        K = k_eps_d(default_eps(d), d)
        assert y2_gauss(np.eye(d)).value == pytest.approx(math.sqrt(2) * (1 + d * math.sqrt(K) * math.sqrt(d)))
    s2 = 2.5
    K = k_eps_d(default_eps(1), 1)
    # σ_max is the standard deviation √λ_max
    assert y2_gauss([[s2]]).value == pytest.approx(math.sqrt(2) * (math.sqrt(s2) + math.sqrt(K * s2)))
    assert audit(y2_gauss([[2.0, 0.3], [0.3, 1.0]]))[0]


def test_talagrand_constant_gauss():
    V = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert talagrand_constant_gauss(V) == pytest.approx(2 * np.linalg.norm(V))
    assert talagrand_constant_gauss(V) >= 2 * np.linalg.eigvalsh(V)[-1]
    with pytest.raises(ValueError):
        talagrand_constant_gauss([[1.0, 2.0], [2.0, 1.0]])
