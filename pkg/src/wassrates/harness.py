"""Experiment configuration, trajectory statistics and reproducible artifacts."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import bayes, expfam
from .measures import (
    DiscreteMeasure,
    GaussianMeasure,
    MeasureError,
    derive_seed,
    get_law,
    parse_source,
    running_gaussian_mle,
    sample_iid,
)
from .rates import c2_gauss, cp_nonparametric, thm1_params, y2_gauss, yp_nonparametric
from .rates.nonparametric import HypothesisError
from .rates.schedule import RateSchedule, evaluation_grid, rate_b, tail_window
from .report import BoundReport
from .transport import gaussian_w2_squared_batch, wasserstein_exact, wasserstein_to_law_1d

KINDS = ("empirical", "gaussian", "expfam", "bayes")
CSV_HEADER = ("replica", "n", "b_n", "distance", "running_sup")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (exit code 2)."""


class NumericFailure(RuntimeError):
    """A numerical routine failed (exit code 4); ``op`` names it."""

    def __init__(self, op: str, cause: Exception):
        super().__init__(f"{op}: {type(cause).__name__}: {cause}")
        self.op = op


@dataclass
class ExperimentConfig:
    """One experiment.

    kind: "empirical" (empirical measure, nonparametric rate), "gaussian"
    (Gaussian plug-in), "expfam" (exponential-family MLE) or "bayes".
    """

    kind: str
    source: Any = None
    family: Mapping | None = None
    theta0: list | None = None
    C_T: float | None = None
    prior: Mapping | None = None
    p: float = 1.0
    d: int = 1
    delta: float = 1.0
    r: float | None = None
    eps: float | None = None
    N_max: int = 1000
    replicas: int = 10
    seed: int = 0
    tol: float = 1e-9
    out_dir: str = "out"

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        if not isinstance(d, Mapping):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            cfg = cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}")
        if not (isinstance(self.N_max, int) and self.N_max >= 2):
            raise ConfigError("N_max must be an integer >= 2")
        if not (isinstance(self.replicas, int) and self.replicas >= 1):
            raise ConfigError("replicas must be a positive integer")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        need = {"empirical": "source", "gaussian": "source", "expfam": "family", "bayes": "prior"}[self.kind]
        if getattr(self, need) is None:
            raise ConfigError(f"kind {self.kind!r} needs {need!r}")
        if self.kind == "expfam" and (self.theta0 is None or self.C_T is None):
            raise ConfigError("expfam experiments need theta0 and C_T")

    def check_hypotheses(self):
        """Raise HypothesisError naming the first failed theorem condition."""
        if self.kind == "empirical":
            thm1_params(self.p, self.d, self.delta)
        elif self.kind == "gaussian" and self.p != 2:
            raise HypothesisError("p = 2 for the Gaussian plug-in")
        elif self.kind == "bayes" and self.prior.get("kind") == "niw":
            bayes.prior_from_config(self.prior).check_moment()


@dataclass
class TrajectoryReport:
    """Per-n rows and the statistics built from them."""

    kind: str
    p: float
    N: int
    rows: list  # (replica, n, b_n, distance, running_sup)
    sup_values: list  # per replica: (sup_{n ≤ N} b_n d)^p over the evaluated grid
    tail_max: list  # per replica: max over n ∈ [N/2, N] of b_n d
    Y: list  # per replica (constant except in Bayesian runs)
    C: float | None = None
    notes: list = field(default_factory=list)

    @property
    def sup_mean(self) -> float:
        return float(np.mean(self.sup_values))

    @property
    def sup_stderr(self) -> float:
        v = np.asarray(self.sup_values)
        return float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else math.nan

    @property
    def violations(self) -> int:
        return int(sum(t > y for t, y in zip(self.tail_max, self.Y)))

    @property
    def violation_fraction(self) -> float:
        return self.violations / len(self.tail_max)

    def summary(self) -> dict:
        return {
            "kind": self.kind, "p": self.p, "N": self.N, "replicas": len(self.sup_values),
            "sup_mean": self.sup_mean, "sup_stderr": self.sup_stderr,
            "C": self.C, "sup_below_C": None if self.C is None else self.sup_mean <= self.C,
            "tail_max": list(self.tail_max), "Y": list(self.Y),
            "violations": self.violations, "violation_fraction": self.violation_fraction,
            "notes": list(self.notes),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rep, n, b, d, s in self.rows:
            w.writerow((rep, n, repr(float(b)), repr(float(d)), repr(float(s))))
        return buf.getvalue()


TRUNCATION_NOTE = ("suprema are taken over the evaluated n-grid up to N, so they lower-bound "
                   "the untruncated supremum and the comparison with C is one-sided")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("WASSRATES_THREADS", "1")))
    except ValueError:
        return 1


def _map_replicas(fn, replicas: int):
    workers = min(_threads(), replicas)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, range(replicas)))
    return [fn(i) for i in range(replicas)]


# ---------------------------------------------------------------------------
# per-kind distance trajectories: each returns (n, b_n, distance) arrays


def _empirical_traj(cfg: ExperimentConfig, seed: int):
    src = cfg.source
    grid = evaluation_grid(cfg.N_max)
    b = rate_b(grid, RateSchedule(cfg.p, "nonparametric"))
    if isinstance(src, Mapping) and src.get("kind") == "density1d":
        law = get_law(src["name"])
        x = sample_iid(src, cfg.N_max, seed).draws[:, 0]
        dist = np.array([wasserstein_to_law_1d(x[:n], law, cfg.p) for n in grid])
        return grid, b, dist
    if isinstance(src, Mapping) and src.get("kind") == "discrete":
        mu = parse_source(src)
        target = DiscreteMeasure.from_atoms([a[0] for a in src["atoms"]], [a[1] for a in src["atoms"]])
        x = sample_iid(mu, cfg.N_max, seed).draws
        dist = np.array([wasserstein_exact(DiscreteMeasure.from_atoms(x[:n]), target, cfg.p)[0] for n in grid])
        return grid, b, dist
    raise ConfigError("empirical runs need a density1d or discrete source")


def _gaussian_target(cfg):
    src = cfg.source
    if not (isinstance(src, Mapping) and src.get("kind") == "gaussian"):
        raise ConfigError("gaussian runs need a gaussian source")
    return np.atleast_1d(np.asarray(src["mean"], float)), np.atleast_2d(np.asarray(src["cov"], float))


def _gaussian_traj(cfg: ExperimentConfig, seed: int):
    m0, V0 = _gaussian_target(cfg)
    x = sample_iid(cfg.source, cfg.N_max, seed).draws
    means, covs = running_gaussian_mle(x)
    n = np.arange(1, cfg.N_max + 1)
    b = rate_b(n, RateSchedule(1, "parametric"))
    dist = np.sqrt(np.maximum(gaussian_w2_squared_batch(m0, V0, means, covs), 0.0))
    return n, b, dist


def _expfam_traj(cfg: ExperimentConfig, seed: int):
    fam = expfam.family_from_config(cfg.family)
    th0 = np.atleast_1d(np.asarray(cfg.theta0, float))
    y0 = expfam.mean_map_inverse(fam, th0)
    from .measures import make_rng

    x = fam.sample(y0, make_rng(seed), cfg.N_max)
    th = expfam.running_mle(fam, x)
    n = np.arange(1, cfg.N_max + 1)
    b = rate_b(n, RateSchedule(1, "parametric"))
    if fam.name == "gaussian_location":
        dist = np.abs(th[:, 0] - th0[0])
    elif fam.name == "gaussian_full":
        # W₂ between N(m, v) and N(m', v'): sqrt((m − m')² + (√v − √v')²)
        v0 = th0[1] - th0[0] ** 2
        v = np.maximum(th[:, 1] - th[:, 0] ** 2, 0.0)
        dist = np.sqrt((th[:, 0] - th0[0]) ** 2 + (np.sqrt(v) - math.sqrt(v0)) ** 2)
    elif fam.name == "bernoulli":
        dist = np.sqrt(np.abs(th[:, 0] - th0[0]))
    else:
        raise ConfigError(f"no W₂ routine for family {fam.name!r}")
    return n, b, dist


TRAJ = {"empirical": _empirical_traj, "gaussian": _gaussian_traj, "expfam": _expfam_traj}


# ---------------------------------------------------------------------------
# bounds


def _source_moment(cfg: ExperimentConfig) -> float:
    q = 2 * cfg.p + cfg.delta
    src = cfg.source
    if src.get("kind") == "density1d":
        return get_law(src["name"]).abs_moment(q)
    if src.get("kind") == "discrete":
        return DiscreteMeasure.from_atoms([a[0] for a in src["atoms"]], [a[1] for a in src["atoms"]]).abs_moment(q)
    raise ConfigError("moment needs a density1d or discrete source")


def compute_bounds(cfg: ExperimentConfig) -> dict[str, BoundReport]:
    """The C and Y reports for the configured experiment (none for Bayesian runs,
    whose Y depends on the sampled latent law)."""
    cfg.check_hypotheses()
    if cfg.kind == "empirical":
        m = _source_moment(cfg)
        return {"C": cp_nonparametric(cfg.p, cfg.d, cfg.delta, m, cfg.r),
                "Y": yp_nonparametric(cfg.p, cfg.d, cfg.delta, m)}
    if cfg.kind == "gaussian":
        _, V0 = _gaussian_target(cfg)
        return {"C": c2_gauss(V0, cfg.eps), "Y": y2_gauss(V0, cfg.eps)}
    if cfg.kind == "expfam":
        fam = expfam.family_from_config(cfg.family)
        out = {"Y": expfam.y2_expfam(fam, cfg.theta0, cfg.C_T)}
        if fam.name == "gaussian_location":
            tails = expfam.gaussian_location_tails(fam.params["variance"])
            out["C"] = expfam.c2_expfam(fam, cfg.theta0, tails, cfg.C_T, cfg.r or 3.0)
        return out
    return {}


# ---------------------------------------------------------------------------
# statistics


def _trajectory_report(cfg: ExperimentConfig, bounds: dict) -> TrajectoryReport:
    if cfg.kind == "bayes":
        return _bayes_report(cfg)
    fn = TRAJ[cfg.kind]
    p = 2.0 if cfg.kind in ("gaussian", "expfam") else float(cfg.p)

    def one(i):
        return fn(cfg, derive_seed(cfg.seed, i))

    results = _map_replicas(one, cfg.replicas)
    Y = bounds["Y"].value if "Y" in bounds else math.inf
    C = bounds["C"].value if "C" in bounds else None
    rows, sups, tails = [], [], []
    for i, (n, b, dist) in enumerate(results):
        stat = b * dist
        run = np.maximum.accumulate(stat)
        rows.extend(zip([i] * len(n), n.tolist(), b.tolist(), dist.tolist(), run.tolist()))
        sups.append(float(run[-1] ** p))
        tails.append(float(stat[tail_window(n, cfg.N_max)].max()))
    return TrajectoryReport(cfg.kind, p, cfg.N_max, rows, sups, tails, [Y] * cfg.replicas, C,
                            [TRUNCATION_NOTE])


def _bayes_report(cfg: ExperimentConfig) -> TrajectoryReport:
    prior = bayes.prior_from_config(cfg.prior)
    rep = bayes.bayes_rate_experiment(prior, cfg.N_max, cfg.replicas, cfg.seed, cfg.delta)
    p = 1.0 if rep.model == "nonparametric" else 2.0
    rows, sups, tails, Ys = [], [], [], []
    for r in rep.replicas:
        run = -math.inf
        best = []
        for n, b, d, _ in r.rows:
            run = max(run, b * d)
            rows.append((r.replica, n, b, d, run))
            best.append(run)
        sups.append(float(best[-1] ** p))
        tails.append(r.tail_max)
        Ys.append(r.bound)
    return TrajectoryReport(f"bayes/{rep.model}", p, cfg.N_max, rows, sups, tails, Ys, None,
                            [TRUNCATION_NOTE, "Y is evaluated at each replica's latent law"])


def estimate_sup_statistic(config) -> TrajectoryReport:
    """Monte Carlo mean of (sup_{n ≤ N} b_n d)^p against the C constant."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    bounds = compute_bounds(cfg)
    return _trajectory_report(cfg, {k: v for k, v in bounds.items() if k == "C"})


def estimate_limsup_statistic(config) -> TrajectoryReport:
    """Per-replica tail maximum over n ∈ [N/2, N] against the Y constant."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    bounds = compute_bounds(cfg)
    return _trajectory_report(cfg, {k: v for k, v in bounds.items() if k == "Y"})


# ---------------------------------------------------------------------------
# artifacts


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


NUMERIC_ERRORS = (np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError, OverflowError,
                  expfam.QuadratureError, expfam.NewtonError, RuntimeError)


def run(config, out_dir: str | os.PathLike | None = None) -> dict[str, Path]:
    """Run an experiment and write trajectories.csv, bounds.json, summary.json."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    try:
        bounds = compute_bounds(cfg)
        rep = _trajectory_report(cfg, bounds)
    except (HypothesisError, ConfigError, MeasureError):
        raise
    except NUMERIC_ERRORS as exc:
        raise NumericFailure(f"run[{cfg.kind}]", exc) from exc
    out.mkdir(parents=True, exist_ok=True)
    paths = {"trajectories": out / "trajectories.csv", "bounds": out / "bounds.json",
             "summary": out / "summary.json"}
    paths["trajectories"].write_text(rep.to_csv())
    paths["bounds"].write_text(dumps({k: v.to_dict() for k, v in bounds.items()}))
    summary = rep.summary() | {"config": cfg.to_dict() | {"out_dir": None}}
    paths["summary"].write_text(dumps(summary))
    return paths


def audit_file(path: str | os.PathLike) -> tuple[bool, list[str]]:
    """Audit a BoundReport JSON file, or a bounds.json mapping of reports."""
    from .report import audit

    data = json.loads(Path(path).read_text())
    if isinstance(data, Mapping) and "ledger" not in data:
        ok, fails = True, []
        for key, rep in sorted(data.items()):
            good, f = audit(rep)
            ok &= good
            fails += [f"{key}: {x}" for x in f]
        return ok, fails
    return audit(data)
