import json

import numpy as np
import pytest

from wassrates import cli, harness
from wassrates.harness import (
    ConfigError,
    ExperimentConfig,
    audit_file,
    compute_bounds,
    estimate_limsup_statistic,
    estimate_sup_statistic,
    run,
)
from wassrates.rates.nonparametric import HypothesisError

EMPIRICAL = dict(kind="empirical", source={"kind": "density1d", "name": "uniform"}, p=1.0, N_max=300,
                 replicas=3, seed=4)
GAUSSIAN = dict(kind="gaussian", source={"kind": "gaussian", "mean": [0.0, 1.0], "cov": [[1.0, 0.3], [0.3, 2.0]]},
                p=2, d=2, N_max=300, replicas=3, seed=1)
DISCRETE = dict(kind="empirical", source={"kind": "discrete", "atoms": [[-1.0, 0.3], [0.5, 0.5], [2.0, 0.2]]},
                N_max=300, replicas=2, seed=2)
EXPFAM = dict(kind="expfam", family={"family": "gaussian_location"}, theta0=[0.0], C_T=2.0, N_max=300,
              replicas=2, seed=3)
BAYES = dict(kind="bayes", prior={"kind": "dirichlet", "points": [0.0, 0.5, 1.0]}, N_max=300, replicas=2, seed=5)


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_dict(EMPIRICAL | {"horizon": 10})


@pytest.mark.parametrize("patch", [{"kind": "weird"}, {"N_max": 1}, {"replicas": 0}, {"seed": 1.5},
                                   {"source": None}])
def test_config_validation(patch):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(EMPIRICAL | patch)


def test_config_expfam_needs_theta():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(EXPFAM | {"theta0": None})


def test_hypothesis_refusals():
    with pytest.raises(HypothesisError):
        compute_bounds(ExperimentConfig.from_dict(GAUSSIAN | {"p": 1}))
    with pytest.raises(HypothesisError):
        compute_bounds(ExperimentConfig.from_dict(EMPIRICAL | {"delta": 0.0}))
    niw = dict(kind="bayes", prior={"kind": "niw", "mean": [0, 0], "kappa": 1, "scale": np.eye(2).tolist(),
                                    "dof": 2.5})
    with pytest.raises(HypothesisError):
        compute_bounds(ExperimentConfig.from_dict(niw))


@pytest.mark.parametrize("cfg", [EMPIRICAL, GAUSSIAN, DISCRETE, EXPFAM, BAYES],
                         ids=["empirical", "gaussian", "discrete", "expfam", "bayes"])
def test_run_writes_artifacts(cfg, tmp_path):
    paths = run(cfg, tmp_path)
    assert set(paths) == {"trajectories", "bounds", "summary"}
    lines = paths["trajectories"].read_text().splitlines()
    assert len(lines) > 1 and lines[0].count(",") == 4
    summary = json.loads(paths["summary"].read_text())
    assert summary["replicas"] == cfg["replicas"]
    assert len(summary["tail_max"]) == cfg["replicas"]
    assert audit_file(paths["bounds"]) == (True, [])


def test_run_is_byte_identical(tmp_path, monkeypatch):
    a = run(GAUSSIAN, tmp_path / "a")
    b = run(GAUSSIAN, tmp_path / "b")
    monkeypatch.setenv("WASSRATES_THREADS", "3")
    c = run(GAUSSIAN, tmp_path / "c")
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes() == c[key].read_bytes()


def test_seed_changes_trajectories(tmp_path):
    a = run(EMPIRICAL, tmp_path / "a")
    b = run(EMPIRICAL | {"seed": 5}, tmp_path / "b")
    assert a["trajectories"].read_bytes() != b["trajectories"].read_bytes()


def test_point_mass_source_statistic_zero():
    cfg = dict(kind="empirical", source={"kind": "discrete", "atoms": [[0.7, 1.0]]}, N_max=100, replicas=2)
    rep = estimate_limsup_statistic(cfg)
    assert rep.tail_max == [0.0, 0.0] and rep.violations == 0


def test_sup_and_limsup_reports():
    sup = estimate_sup_statistic(EMPIRICAL)
    lim = estimate_limsup_statistic(EMPIRICAL)
    assert sup.C is not None and np.isfinite(sup.sup_mean)
    assert all(np.isinf(y) for y in sup.Y)
    assert lim.C is None and lim.Y[0] == pytest.approx(compute_bounds(ExperimentConfig.from_dict(EMPIRICAL))["Y"].value)
    # the running supremum column is nondecreasing within each replica
    rows = np.array([r[1:] for r in sup.rows if r[0] == 0])
    assert np.all(np.diff(rows[:, 3]) >= 0)


def test_audit_file_detects_tampering(tmp_path):
    paths = run(EMPIRICAL, tmp_path)
    data = json.loads(paths["bounds"].read_text())
    data["Y"]["ledger"]["sub_constants"]["moment"]["value"] = 0.3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    ok, fails = audit_file(bad)
    assert not ok and fails
    single = tmp_path / "single.json"
    single.write_text(json.dumps(json.loads(paths["bounds"].read_text())["C"]))
    assert audit_file(single) == (True, [])


def _write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def test_cli_exit_codes(tmp_path, capsys, monkeypatch):
    out = str(tmp_path / "out")
    assert cli.main(["simulate", "--config", _write(tmp_path, "e.json", EMPIRICAL), "--out-dir", out]) == 0
    assert cli.main(["audit", str(tmp_path / "out" / "bounds.json")]) == 0
    data = json.loads((tmp_path / "out" / "bounds.json").read_text())
    data["C"]["value"] *= 1.01
    assert cli.main(["audit", _write(tmp_path, "bad.json", data)]) == 1
    assert cli.main(["simulate", "--config", _write(tmp_path, "u.json", EMPIRICAL | {"zzz": 1})]) == 2
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["bounds", "--config", _write(tmp_path, "h.json", GAUSSIAN | {"p": 1}), "--out-dir", out]) == 3

    def boom(cfg):
        raise np.linalg.LinAlgError("singular")

    monkeypatch.setattr(harness, "compute_bounds", boom)
    assert cli.main(["simulate", "--config", _write(tmp_path, "n.json", GAUSSIAN), "--out-dir", out]) == 4
    err = capsys.readouterr().err
    assert "numeric failure" in err and "run[gaussian]" in err


def test_cli_flags_override(tmp_path, capsys):
    out = tmp_path / "o"
    rc = cli.main(["simulate", "--config", _write(tmp_path, "c.json", EMPIRICAL), "--seed", "9", "--replicas", "2",
                   "--nmax", "50", "--out-dir", str(out)])
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["replicas"] == 2 and summary["N"] == 50 and summary["config"]["seed"] == 9


def test_cli_bounds_and_dist(tmp_path, capsys):
    assert cli.main(["bounds", "--config", _write(tmp_path, "g.json", GAUSSIAN), "--out-dir", str(tmp_path)]) == 0
    assert set(json.loads(capsys.readouterr().out)) == {"C", "Y"}
    dist = {"mu": {"kind": "discrete", "atoms": [[0.0, 0.5], [1.0, 0.5]]},
            "nu": {"kind": "discrete", "atoms": [[2.0, 1.0]]}, "p": 1}
    assert cli.main(["dist", "--config", _write(tmp_path, "d.json", dist)]) == 0
    assert json.loads(capsys.readouterr().out)["distance"] == pytest.approx(1.5)
    gdist = {"mu": {"kind": "gaussian", "mean": [0.0], "cov": [[1.0]]},
             "nu": {"kind": "gaussian", "mean": [3.0], "cov": [[4.0]]}, "p": 2}
    assert cli.main(["dist", "--config", _write(tmp_path, "gd.json", gdist)]) == 0
    assert json.loads(capsys.readouterr().out)["distance"] == pytest.approx(np.hypot(3, 1))
    assert cli.main(["dist", "--config", _write(tmp_path, "bad.json", {"mu": gdist["mu"]})]) == 2


def test_cli_bayes_subcommand(tmp_path):
    assert cli.main(["bayes", "--config", _write(tmp_path, "b.json", BAYES), "--out-dir", str(tmp_path)]) == 0
    assert cli.main(["simulate", "--config", _write(tmp_path, "b2.json", BAYES)]) == 2
    assert cli.main(["bayes", "--config", _write(tmp_path, "e.json", EMPIRICAL)]) == 2


def test_cli_default_demo(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli.main(["simulate", "--nmax", "100", "--replicas", "1"]) == 0
    assert (tmp_path / "out" / "summary.json").exists()
