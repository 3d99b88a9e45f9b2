"""Uniform-in-time Wasserstein rates for empirical, plug-in and posterior laws."""

from . import bayes, expfam, harness, measures, rates, report, transport
from .measures import DiscreteMeasure, FiniteSpace, GaussianMeasure, sample_iid
from .report import BoundReport, audit
from .transport import gaussian_w2, nested_distance, wasserstein_1d, wasserstein_exact

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "DiscreteMeasure",
    "FiniteSpace",
    "GaussianMeasure",
    "audit",
    "bayes",
    "expfam",
    "gaussian_w2",
    "harness",
    "measures",
    "nested_distance",
    "rates",
    "report",
    "sample_iid",
    "transport",
    "wasserstein_1d",
    "wasserstein_exact",
]
