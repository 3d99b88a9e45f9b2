"""Constants of the nonparametric uniform rate: C_p (mean of the supremum)
and Y_p (almost-sure limsup) for the empirical measure on R^d."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..report import BoundReport, compose, formula, given


class HypothesisError(ValueError):
    """A theorem hypothesis fails; the message names the condition."""


def k_pd(p: float, d: int) -> float:
    """K(p, d) = 2^{2p} d^{p/2} (2^p + 1) (2^p − 1)^{−2}."""
    if p < 1 or d < 1:
        raise ValueError("k_pd needs p >= 1 and d >= 1")
    return 2.0 ** (2 * p) * d ** (p / 2) * (2.0**p + 1) / (2.0**p - 1) ** 2


@formula("k_pd")
def _f_kpd(inputs, subs):
    return k_pd(float(inputs["p"]), int(inputs["d"]))


@dataclass(frozen=True)
class Thm1Params:
    p: float
    d: int
    delta: float
    M: float
    r_low: float
    r_high: float

    @property
    def beta(self) -> float:
        return 2 * self.p + self.delta

    @property
    def default_r(self) -> float:
        return min(3.0, 0.5 * (self.r_low + self.r_high))

    def contains(self, r: float) -> bool:
        return self.r_low < r < self.r_high

    def lam(self, r: float) -> float:
        """λ = p − d(2 − 3/r)."""
        return self.p - self.d * (2 - 3 / r)

    def sigma(self, r: float) -> float:
        """σ = β(3/r − 1) − p."""
        return self.beta * (3 / r - 1) - self.p


def _check_thm1(p: float, d: int, delta: float):
    if p < 1:
        raise HypothesisError("p >= 1")
    if not p > d / 2:
        raise HypothesisError("p > d/2")
    if not delta > 0:
        raise HypothesisError("delta > 0")


def thm1_params(p: float, d: int, delta: float) -> Thm1Params:
    """M = max{2 − p/d, 1 + 1/(2 + δ/p)} and the admissible r-interval (2, 3/M)."""
    _check_thm1(p, d, delta)
    M = max(2 - p / d, 1 + 1 / (2 + delta / p))
    return Thm1Params(float(p), int(d), float(delta), M, 2.0, 3.0 / M)


@formula("thm1_lambda")
def _f_lam(inputs, subs):
    return float(inputs["p"]) - int(inputs["d"]) * (2 - 3 / float(inputs["r"]))


@formula("thm1_sigma")
def _f_sig(inputs, subs):
    beta = 2 * float(inputs["p"]) + float(inputs["delta"])
    return beta * (3 / float(inputs["r"]) - 1) - float(inputs["p"])


@formula("c_bar")
def _f_cbar(inputs, subs):
    r = float(inputs["r"])
    return subs["alpha0"] ** (1 / r) + 2.0 ** (3 / r) * subs["alpha1"] ** (1 / r)


@formula("cp_nonparametric")
def _f_cp(inputs, subs):
    p, r = float(inputs["p"]), float(inputs["r"])
    K, cbar, lam, sig, m = subs["K"], subs["C_bar"], subs["lambda"], subs["sigma"], subs["moment"]
    return K * cbar / (1 - 2.0**-lam) * (1 + 2.0**p / (1 - 2.0**-sig) * m ** (3 / r - 1))


@formula("yp_nonparametric")
def _f_yp(inputs, subs):
    p, d, delta = float(inputs["p"]), int(inputs["d"]), float(inputs["delta"])
    K, m = subs["K"], subs["moment"]
    inner = math.sqrt(2) * K / (1 - 2.0 ** -(p - d / 2)) * (1 + 2.0**p / (1 - 2.0 ** (-delta / 2)) * math.sqrt(m))
    return inner ** (1 / p)


def cp_nonparametric(p: float, d: int, delta: float, moment: float, r: float | None = None) -> BoundReport:
    """C_p bounding E[(sup_n b_n d^{(p)}(p₀, ẽ_n))^p].

    ``moment`` is ∫|x|^{2p+δ} dp₀. The default r is the midpoint of the
    admissible interval (capped at 3).
    """
    from .teicher import teicher_constants

    prm = thm1_params(p, d, delta)
    r = prm.default_r if r is None else float(r)
    if not prm.contains(r):
        raise HypothesisError(f"r in ({prm.r_low}, {prm.r_high})")
    if not moment > 0:
        raise ValueError("moment must be positive")
    tc = teicher_constants(r)
    inp = {"p": float(p), "d": int(d), "delta": float(delta), "r": r}
    subs = {
        "K": compose("k_pd", {"p": float(p), "d": int(d)}, {}),
        "C_bar": compose("c_bar", {"r": r}, {"alpha0": tc.ledger["alpha0"], "alpha1": tc.ledger["alpha1"]}),
        "lambda": compose("thm1_lambda", inp, {}),
        "sigma": compose("thm1_sigma", inp, {}),
        "moment": given(moment, "∫|x|^{2p+δ} dp₀"),
    }
    root = compose("cp_nonparametric", inp, subs)
    return BoundReport("C_p", root, inp | {"moment": float(moment)})


def yp_nonparametric(p: float, d: int, delta: float, moment: float) -> BoundReport:
    """Y_p bounding limsup_n b_n d^{(p)}(p₀, ẽ_n) almost surely."""
    _check_thm1(p, d, delta)
    if moment < 0:
        raise ValueError("moment must be nonnegative")
    inp = {"p": float(p), "d": int(d), "delta": float(delta)}
    subs = {
        "K": compose("k_pd", {"p": float(p), "d": int(d)}, {}),
        "moment": given(moment, "∫|x|^{2p+δ} dp₀"),
    }
    root = compose("yp_nonparametric", inp, subs)
    return BoundReport("Y_p", root, inp | {"moment": float(moment)})
