"""Rate sequences and explicit constants of the uniform-rate theorems."""

from .gaussian import (
    c2_gauss,
    default_eps,
    k_eps_d,
    omega_k,
    talagrand_constant_gauss,
    wishart_tail_H,
    y2_gauss,
)
from .nonparametric import (
    HypothesisError,
    cp_nonparametric,
    k_pd,
    thm1_params,
    yp_nonparametric,
)
from .schedule import RateSchedule, evaluation_grid, log2_fn, rate_b, tail_window
from .teicher import TeicherConstants, lambda_qk, teicher_constants, verify_teicher_mc

__all__ = [
    "HypothesisError",
    "RateSchedule",
    "TeicherConstants",
    "c2_gauss",
    "cp_nonparametric",
    "default_eps",
    "k_eps_d",
    "k_pd",
    "lambda_qk",
    "evaluation_grid",
    "log2_fn",
    "omega_k",
    "rate_b",
    "tail_window",
    "talagrand_constant_gauss",
    "teicher_constants",
    "thm1_params",
    "verify_teicher_mc",
    "yp_nonparametric",
    "wishart_tail_H",
    "y2_gauss",
]
