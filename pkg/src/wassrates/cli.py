"""Command-line entry point: ``wassrates {dist,bounds,simulate,bayes,audit}``."""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from .harness import ConfigError, ExperimentConfig, NumericFailure, audit_file, compute_bounds, dumps, run
from .measures import DiscreteMeasure, GaussianMeasure, MeasureError
from .rates.nonparametric import HypothesisError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_NUMERIC = 0, 1, 2, 3, 4


def _load_config(args) -> dict:
    if args.config is None:
        text = resources.files("wassrates").joinpath("data/demo.json").read_text()
    else:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    for flag, key in (("seed", "seed"), ("replicas", "replicas"), ("nmax", "N_max"), ("out_dir", "out_dir")):
        val = getattr(args, flag, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _measure(desc):
    if desc.get("kind") == "gaussian":
        return GaussianMeasure(desc["mean"], desc["cov"])
    if desc.get("kind") == "discrete":
        return DiscreteMeasure.from_atoms([a[0] for a in desc["atoms"]], [a[1] for a in desc["atoms"]])
    raise ConfigError(f"dist needs gaussian or discrete measures, got {desc.get('kind')!r}")


def cmd_dist(args) -> int:
    from .transport import gaussian_w2, wasserstein_exact

    cfg = _load_config(args)
    if "mu" not in cfg or "nu" not in cfg:
        raise ConfigError("dist config needs 'mu' and 'nu'")
    mu, nu = _measure(cfg["mu"]), _measure(cfg["nu"])
    p = float(cfg.get("p", 1.0))
    if isinstance(mu, GaussianMeasure) and isinstance(nu, GaussianMeasure):
        if p != 2:
            raise ConfigError("Gaussian closed form needs p = 2")
        out = {"distance": gaussian_w2(mu, nu), "method": "gaussian_closed_form", "p": p}
    elif isinstance(mu, DiscreteMeasure) and isinstance(nu, DiscreteMeasure):
        out = {"distance": wasserstein_exact(mu, nu, p)[0], "method": "network_simplex", "p": p}
    else:
        raise ConfigError("mu and nu must be of the same kind")
    sys.stdout.write(dumps(out))
    return EXIT_OK


def cmd_bounds(args) -> int:
    cfg = ExperimentConfig.from_dict(_load_config(args))
    reps = compute_bounds(cfg)
    text = dumps({k: v.to_dict() for k, v in reps.items()})
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bounds.json").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = ExperimentConfig.from_dict(_load_config(args))
    if cfg.kind == "bayes":
        raise ConfigError("use the 'bayes' subcommand for Bayesian experiments")
    paths = run(cfg)
    sys.stdout.write(dumps({k: str(v) for k, v in paths.items()}))
    return EXIT_OK


def cmd_bayes(args) -> int:
    cfg = ExperimentConfig.from_dict(_load_config(args))
    if cfg.kind != "bayes":
        raise ConfigError("the 'bayes' subcommand needs kind = 'bayes'")
    paths = run(cfg)
    sys.stdout.write(dumps({k: str(v) for k, v in paths.items()}))
    return EXIT_OK


def cmd_audit(args) -> int:
    try:
        ok, fails = audit_file(args.report)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read report: {exc}") from None
    sys.stdout.write(dumps({"verdict": "pass" if ok else "fail", "failures": fails}))
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wassrates", description="Uniform Wasserstein rates: bounds and experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (("dist", cmd_dist, "distance between two measures"),
                            ("bounds", cmd_bounds, "compute C and Y constants with ledgers"),
                            ("simulate", cmd_simulate, "run a trajectory experiment"),
                            ("bayes", cmd_bayes, "run a Bayesian rate experiment")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON config (default: bundled demo)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out-dir", dest="out_dir")
        sp.add_argument("--replicas", type=int)
        sp.add_argument("--nmax", type=int)
        sp.set_defaults(fn=fn)
    sp = sub.add_parser("audit", help="replay a bound report ledger")
    sp.add_argument("report")
    sp.set_defaults(fn=cmd_audit)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except HypothesisError as exc:
        sys.stderr.write(f"hypothesis violated: {exc}\n")
        return EXIT_HYPOTHESIS
    except (ConfigError, MeasureError, KeyError, TypeError, ValueError) as exc:
        sys.stderr.write(f"invalid config: {exc}\n")
        return EXIT_CONFIG
    except NumericFailure as exc:
        sys.stderr.write(f"numeric failure in {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
