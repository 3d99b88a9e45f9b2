import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wassrates.measures import DiscreteMeasure, FiniteSpace, GaussianMeasure, get_law
from wassrates.transport import (
    CouplingPlan,
    DyadicGrid,
    MetaMeasure,
    TransportError,
    annulus_index,
    dyadic_upper_bound,
    gaussian_w2,
    gaussian_w2_squared_batch,
    nested_distance,
    transport_lp,
    wasserstein_1d,
    wasserstein_exact,
    wasserstein_to_law_1d,
)

from helpers import random_discrete
from oracles import gaussian_w2_1d, w_to_law_quad, quantile_w_1d_sorted, transport_vertex_enumeration


@pytest.mark.parametrize("seed", range(20))
def test_network_simplex_matches_vertex_enumeration(seed):
    r = np.random.default_rng(seed)
    m = int(r.integers(1, 5))
    n = int(r.integers(1, 7 - m))
    a, b = r.dirichlet(np.ones(m)), r.dirichlet(np.ones(n))
    C = r.exponential(size=(m, n))
    cost, G = transport_lp(a, b, C)
    assert cost == pytest.approx(transport_vertex_enumeration(a, b, C), rel=1e-9, abs=1e-14)
    np.testing.assert_allclose(G.sum(axis=1), a, atol=1e-12)
    np.testing.assert_allclose(G.sum(axis=0), b, atol=1e-12)


def test_dirac_pair_is_point_distance():
    mu = DiscreteMeasure.dirac([0.0, 0.0])
    nu = DiscreteMeasure.dirac([3.0, 4.0])
    for p in (1, 2, 3.5):
        assert wasserstein_exact(mu, nu, p)[0] == pytest.approx(5.0)


def test_plan_validation():
    mu = DiscreteMeasure.from_atoms([0.0, 1.0])
    with pytest.raises(TransportError):
        CouplingPlan(mu, mu, np.array([[0.5, 0.5], [0.5, 0.5]]))


def test_order_below_one_rejected():
    mu = DiscreteMeasure.dirac(0.0)
    with pytest.raises(TransportError):
        wasserstein_exact(mu, mu, 0.5)


def test_different_spaces_rejected(line_space):
    mu = DiscreteMeasure.dirac(0, space=line_space)
    nu = DiscreteMeasure.dirac(0.0)
    with pytest.raises(TransportError):
        wasserstein_exact(mu, nu)


def test_finite_space_uses_metric():
    S = FiniteSpace.discrete(3)
    mu = DiscreteMeasure.from_atoms([0, 1], [0.5, 0.5], space=S)
    nu = DiscreteMeasure.from_atoms([2], [1.0], space=S)
    # total variation on the discrete metric
    assert wasserstein_exact(mu, nu, 1)[0] == pytest.approx(1.0)
    assert wasserstein_exact(mu, nu, 2)[0] == pytest.approx(1.0)


@given(st.integers(1, 40), st.integers(1, 40), st.sampled_from([1.0, 2.0, 3.0]), st.integers(0, 2**31))
def test_1d_quantile_coupling_matches_lp(n, m, p, seed):
    r = np.random.default_rng(seed)
    x, y = r.normal(size=n), r.normal(size=m) + 0.5
    wx, wy = r.dirichlet(np.ones(n)), r.dirichlet(np.ones(m))
    mu = DiscreteMeasure.from_atoms(x, wx, normalize=True)
    nu = DiscreteMeasure.from_atoms(y, wy, normalize=True)
    lp = wasserstein_exact(mu, nu, p)[0]
    assert wasserstein_1d(x, y, p, wx, wy) == pytest.approx(lp, rel=1e-9, abs=1e-12)


@given(st.integers(1, 60), st.integers(0, 2**31))
def test_1d_equal_sizes_sorted_matching(n, seed):
    r = np.random.default_rng(seed)
    x, y = r.random(n), r.exponential(size=n)
    for p in (1.0, 2.0):
        assert wasserstein_1d(x, y, p) == pytest.approx(quantile_w_1d_sorted(x, y, p), rel=1e-10)


@pytest.mark.parametrize("name", ["uniform", "uniform_sym", "normal", "exponential"])
@pytest.mark.parametrize("p", [1.0, 2.0, 3.0])
def test_distance_to_continuous_law(name, p):
    law = get_law(name)
    x = law.sample(np.random.default_rng(11), 200)
    assert wasserstein_to_law_1d(x, law, p) == pytest.approx(w_to_law_quad(x, law, p), rel=1e-7)


def test_distance_to_atomic_law():
    x = np.array([-1.0, -1.0, 1.0, 1.0, 1.0])
    # mass 0.1 moves from +1 to −1
    assert wasserstein_to_law_1d(x, "rademacher", 1) == pytest.approx(0.1 * 2)


@given(st.integers(1, 3), st.integers(0, 2**31))
def test_gaussian_w2_commuting_case(d, seed):
    r = np.random.default_rng(seed)
    s0, s1 = r.uniform(0.2, 3, d), r.uniform(0.2, 3, d)
    m0, m1 = r.normal(size=d), r.normal(size=d)
    w = gaussian_w2(GaussianMeasure(m0, np.diag(s0**2)), GaussianMeasure(m1, np.diag(s1**2)))
    ref = math.sqrt(sum(gaussian_w2_1d(m0[i], s0[i], m1[i], s1[i]) ** 2 for i in range(d)))
    assert w == pytest.approx(ref, rel=1e-9)


def test_gaussian_w2_symmetry_and_point_mass(rng):
    A = rng.normal(size=(3, 3))
    B = rng.normal(size=(3, 3))
    g0 = GaussianMeasure(rng.normal(size=3), A @ A.T + np.eye(3))
    g1 = GaussianMeasure(rng.normal(size=3), B @ B.T + np.eye(3))
    assert gaussian_w2(g0, g1) == pytest.approx(gaussian_w2(g1, g0), rel=1e-10)
    assert gaussian_w2(g0, g0) == pytest.approx(0.0, abs=1e-6)
    pt = DiscreteMeasure.dirac(g1.mean)
    # W₂² to a point mass is |m0 − x|² + tr V₀
    expect = np.sum((g0.mean - g1.mean) ** 2) + np.trace(g0.cov)
    assert gaussian_w2(g0, pt) ** 2 == pytest.approx(expect, rel=1e-10)


def test_gaussian_w2_batch_matches_single(rng):
    V0 = np.array([[2.0, 0.3], [0.3, 1.0]])
    means = rng.normal(size=(5, 2))
    covs = np.array([np.diag(rng.uniform(0.5, 2, 2)) for _ in range(5)])
    batch = gaussian_w2_squared_batch(np.zeros(2), V0, means, covs)
    single = [gaussian_w2(GaussianMeasure(np.zeros(2), V0), GaussianMeasure(m, c)) ** 2 for m, c in zip(means, covs)]
    np.testing.assert_allclose(batch, single, rtol=1e-12)


def test_gaussian_w2_consistency_with_empirical_lp():
    g0 = GaussianMeasure([0.0, 0.0], [[1.0, 0.5], [0.5, 2.0]])
    g1 = GaussianMeasure([1.0, 0.0], [[0.5, 0.0], [0.0, 1.0]])
    exact = gaussian_w2(g0, g1)
    L0, L1 = np.linalg.cholesky(g0.cov), np.linalg.cholesky(g1.cov)
    med = []
    for n in (32, 128, 512):
        errs = []
        for seed in range(20):
            r = np.random.default_rng(seed)
            x = g0.mean + r.standard_normal((n, 2)) @ L0.T
            y = g1.mean + r.standard_normal((n, 2)) @ L1.T
            w = wasserstein_exact(DiscreteMeasure.from_atoms(x), DiscreteMeasure.from_atoms(y), 2)[0]
            errs.append(abs(w - exact))
        med.append(np.median(errs))
    assert med[0] > med[1] > med[2]


def test_annulus_index_boundaries():
    x = np.array([[0.0], [1.0], [-1.0], [1.5], [2.0], [-2.0], [0.3]])
    np.testing.assert_array_equal(annulus_index(x), [0, 0, 1, 1, 1, 2, 0])


@pytest.mark.parametrize("seed", range(20))
def test_dyadic_bound_dominates_exact(seed):
    r = np.random.default_rng(seed)
    mu = DiscreteMeasure.from_atoms(r.uniform(-1, 1, 50))
    nu = DiscreteMeasure.from_atoms(r.uniform(-1, 1, 50))
    for p in (1.0, 2.0):
        exact = wasserstein_exact(mu, nu, p)[0] ** p
        assert dyadic_upper_bound(mu, nu, p).total >= exact


def test_dyadic_bound_identical_measures():
    mu = DiscreteMeasure.from_atoms([0.1, -0.7, 0.4])
    b = dyadic_upper_bound(mu, mu, 1.0)
    assert b.value == 0.0 and b.remainder == 0.0


def test_dyadic_grid_validation():
    with pytest.raises(TransportError):
        DyadicGrid(2, 60, 1.0, 3.0)
    with pytest.raises(TransportError):
        DyadicGrid(2, 10, 2.0, 1.5)


def test_dyadic_truncated_scale_has_remainder():
    mu = DiscreteMeasure.from_atoms([0.2, 100.0], [0.9, 0.1])
    nu = DiscreteMeasure.from_atoms([0.0])
    grid = DyadicGrid(2, 20, 1.0, 3.0)
    b = dyadic_upper_bound(mu, nu, 1.0, grid)
    assert b.remainder > 0
    assert b.total >= wasserstein_exact(mu, nu, 1.0)[0]


def test_nested_distance_of_diracs_is_inner_distance(rng):
    mu, nu = random_discrete(rng, 3), random_discrete(rng, 4)
    A, B = MetaMeasure.dirac(mu), MetaMeasure.dirac(nu)
    for p in (1.0, 2.0):
        assert nested_distance(A, B, p) == pytest.approx(wasserstein_exact(mu, nu, p)[0], rel=1e-12)


def test_nested_distance_threads_agree(rng):
    atoms = [random_discrete(rng, 3) for _ in range(4)]
    A = MetaMeasure(tuple(atoms[:2]), np.array([0.3, 0.7]))
    B = MetaMeasure(tuple(atoms[2:]), np.array([0.6, 0.4]))
    assert nested_distance(A, B, 1.0, workers=1) == nested_distance(A, B, 1.0, workers=4)


def test_meta_measure_validation(rng):
    mu = random_discrete(rng, 2)
    with pytest.raises(TransportError):
        MetaMeasure((mu,), np.array([0.5]))
