"""The truncated iterated logarithm and the rate sequences b_n."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

E_E = math.exp(math.e)


def log2_fn(x):
    """Log₂(x) = 1 for x < e^e, log log x otherwise (vectorized)."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("Log2 needs x > 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(x < E_E, 1.0, np.log(np.log(np.maximum(x, E_E))))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class RateSchedule:
    """b_n = (n / Log₂ n)^e with e = 1/(2p) (nonparametric) or 1/2 (parametric)."""

    p: float = 1.0
    kind: str = "nonparametric"

    def __post_init__(self):
        if self.kind not in ("nonparametric", "parametric"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.p < 1:
            raise ValueError("p must be >= 1")

    @property
    def exponent(self) -> float:
        return 1.0 / (2 * self.p) if self.kind == "nonparametric" else 0.5

    def __call__(self, n):
        return rate_b(n, self)


def rate_b(n, sched: RateSchedule):
    n = np.asarray(n, dtype=float)
    if np.any(n < 1):
        raise ValueError("n must be >= 1")
    out = (n / log2_fn(n)) ** sched.exponent
    return float(out) if np.ndim(out) == 0 else out


def evaluation_grid(N: int, tail_points: int = 256, start: int = 1) -> np.ndarray:
    """Sorted n-values: the geometric grid ⌈1.1^j⌉ up to N plus ~tail_points
    evenly spaced points of the tail window [N/2, N] (N itself included)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    j_max = int(np.floor(np.log(N) / np.log(1.1))) + 1
    geo = np.ceil(1.1 ** np.arange(j_max + 1) - 1e-9).astype(np.int64)
    tail = np.linspace(max(1, N // 2), N, min(tail_points, N)).round().astype(np.int64)
    n = np.unique(np.concatenate([geo, tail, [N]]))
    return n[(n >= start) & (n <= N)]


def tail_window(n: np.ndarray, N: int) -> np.ndarray:
    """Mask of grid points in [N/2, N]."""
    return np.asarray(n) >= N / 2
