import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from wassrates.measures import (
    DiscreteMeasure,
    FiniteSpace,
    GaussianMeasure,
    MeasureError,
    derive_seed,
    empirical_measure,
    gaussian_kl,
    gaussian_mle,
    get_law,
    parse_source,
    running_gaussian_mle,
    sample_iid,
)

from oracles import gaussian_kl_direct


def test_from_atoms_merges_coincident_points():
    mu = DiscreteMeasure.from_atoms([[0.0], [1.0], [0.0], [1.0 + 1e-14]], [0.1, 0.2, 0.3, 0.4])
    assert mu.size == 2
    np.testing.assert_allclose(mu.weights, [0.4, 0.6])


def test_weights_must_sum_to_one():
    with pytest.raises(MeasureError):
        DiscreteMeasure(np.zeros((2, 1)), np.array([0.5, 0.6]))
    with pytest.raises(MeasureError):
        DiscreteMeasure(np.zeros((2, 1)), np.array([1.5, -0.5]))


def test_finite_space_rejects_non_metric():
    with pytest.raises(MeasureError):
        FiniteSpace((0, 1, 2), np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0]], dtype=float))
    with pytest.raises(MeasureError):
        FiniteSpace((0, 1), np.array([[0, 1], [2, 0]], dtype=float))


def test_finite_space_measure(line_space):
    mu = DiscreteMeasure.from_atoms([2, 0, 2], [0.25, 0.25, 0.5], space=line_space)
    np.testing.assert_allclose(mu.dense_weights(), [0.25, 0.0, 0.75])
    with pytest.raises(MeasureError):
        DiscreteMeasure(np.array([3]), np.ones(1), line_space)


def test_gaussian_measure_validation():
    g = GaussianMeasure([0.0, 0.0], [[1.0, 0.0], [0.0, 0.0]])
    assert g.degenerate
    with pytest.raises(MeasureError):
        GaussianMeasure([0.0], [[-1.0]])
    with pytest.raises(MeasureError):
        GaussianMeasure([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])


def test_seeded_sampling_is_reproducible():
    src = {"kind": "gaussian", "mean": [1.0, -1.0], "cov": [[2.0, 0.3], [0.3, 1.0]]}
    a = sample_iid(src, 100, seed=5)
    b = sample_iid(src, 100, seed=5)
    assert a.draws.tobytes() == b.draws.tobytes()
    assert a.regenerate().draws.tobytes() == a.draws.tobytes()
    assert sample_iid(src, 100, seed=6).draws.tobytes() != a.draws.tobytes()


def test_derived_seeds_are_distinct():
    seeds = {derive_seed(0, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert derive_seed(1, 0) != derive_seed(0, 1)


def test_discrete_source_frequencies():
    src = {"kind": "discrete", "atoms": [[0.0, 0.2], [1.0, 0.5], [3.0, 0.3]]}
    x = sample_iid(src, 200_000, seed=1).draws[:, 0]
    freq = [np.mean(x == v) for v in (0.0, 1.0, 3.0)]
    np.testing.assert_allclose(freq, [0.2, 0.5, 0.3], atol=5e-3)


def test_unknown_source_kind():
    with pytest.raises(MeasureError):
        parse_source({"kind": "cauchy"})
    with pytest.raises(MeasureError):
        parse_source({"kind": "gaussian", "mean": [0.0], "cov": [[0.0]]})


def test_empirical_measure_prefix():
    traj = sample_iid({"kind": "density1d", "name": "uniform"}, 50, seed=3)
    mu = empirical_measure(traj, 10)
    assert mu.size == 10
    np.testing.assert_allclose(mu.weights, 0.1)
    with pytest.raises(MeasureError):
        empirical_measure(traj, 51)


@pytest.mark.parametrize("name", ["uniform", "uniform_sym", "normal", "exponential"])
def test_law_integrals_match_quadrature(name):
    law = get_law(name)
    for t in (0.1, 0.5, 0.9):
        f1 = integrate.quad(lambda u: float(law.quantile(u)), 0, t, limit=200)[0]
        f2 = integrate.quad(lambda u: float(law.quantile(u)) ** 2, 0, t, limit=200)[0]
        assert float(law.first(t)) == pytest.approx(f1, abs=1e-9)
        assert float(law.second(t)) == pytest.approx(f2, abs=1e-9)


@pytest.mark.parametrize("name", ["uniform", "uniform_sym", "normal", "exponential", "rademacher"])
def test_law_moments_match_samples(name):
    law = get_law(name)
    x = law.sample(np.random.default_rng(0), 400_000)
    assert law.mean == pytest.approx(x.mean(), abs=1e-2)
    assert law.variance == pytest.approx(x.var(), rel=2e-2)
    assert law.abs_moment(3.0) == pytest.approx(np.mean(np.abs(x) ** 3), rel=3e-2)
    assert law.central_abs_moment(3.0) == pytest.approx(np.mean(np.abs(x - law.mean) ** 3), rel=3e-2)


def test_gaussian_mle_and_running_agree():
    src = {"kind": "gaussian", "mean": [0.5, 1.0], "cov": [[1.0, 0.4], [0.4, 2.0]]}
    traj = sample_iid(src, 300, seed=2)
    means, covs = running_gaussian_mle(traj)
    for n in (2, 17, 300):
        g = gaussian_mle(traj, n)
        np.testing.assert_allclose(g.mean, means[n - 1], atol=1e-12)
        np.testing.assert_allclose(g.cov, covs[n - 1], atol=1e-12)
    assert isinstance(gaussian_mle(traj, 1), DiscreteMeasure)


@pytest.mark.parametrize("seed", range(10))
def test_gaussian_mle_consistency(seed):
    m0 = np.array([1.0, -2.0])
    V0 = np.array([[2.0, 0.5], [0.5, 1.0]])
    traj = sample_iid({"kind": "gaussian", "mean": m0.tolist(), "cov": V0.tolist()}, 10_000, seed)
    g = gaussian_mle(traj, 10_000)
    assert np.linalg.norm(g.mean - m0) < 0.1
    assert np.linalg.norm(g.cov - V0) < 0.1


@given(st.integers(1, 3), st.integers(0, 10_000))
def test_gaussian_kl_matches_textbook(d, seed):
    r = np.random.default_rng(seed)
    A = r.normal(size=(d, d))
    B = r.normal(size=(d, d))
    V0 = A @ A.T + 0.3 * np.eye(d)
    V1 = B @ B.T + 0.3 * np.eye(d)
    m0, m1 = r.normal(size=d), r.normal(size=d)
    kl = gaussian_kl(GaussianMeasure(m1, V1), GaussianMeasure(m0, V0))
    assert kl == pytest.approx(gaussian_kl_direct(m1, V1, m0, V0), rel=1e-9, abs=1e-12)
    assert gaussian_kl(GaussianMeasure(m0, V0), GaussianMeasure(m0, V0)) == pytest.approx(0.0, abs=1e-12)


def test_abs_moment():
    mu = DiscreteMeasure.from_atoms([[3.0, 4.0], [0.0, 0.0]], [0.5, 0.5])
    assert mu.abs_moment(2) == pytest.approx(12.5)
    assert math.isclose(mu.mean()[0], 1.5)
