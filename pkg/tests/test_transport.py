import numpy as np
import pytest

from rotmix.errors import DomainError
from rotmix.estimator import Dataset, MixtureModel
from rotmix.exponential_family import gaussian_spherical, log_density, poisson
from rotmix.transport import (LAMBDA_MIN, RegularizerSpec, bregman_projection_check,
                              cost_matrix, entropic_phi, entropic_rows, estep,
                              estep_entropic, estep_hard, estep_quadratic,
                              make_regularizer, plan_entropy, project_simplex_rows)

from oracles import grid_minimize_row, hard_vertices, kl_projection_row_bisect, \
    random_feasible_plans

G1 = gaussian_spherical(1)
HALF_LOG_2PI = 0.5 * np.log(2 * np.pi)


def two_gauss():
    model = MixtureModel(G1, [0.5, 0.5], [[0.0], [1.0]])
    data = Dataset(np.array([[0.0]]), np.array([1.0]))
    return model, data


def random_instance(rng, n, k):
    gamma = rng.normal(scale=2.0, size=(n, k))
    ups = rng.dirichlet(np.ones(n))
    return gamma, ups


# ---------------------------------------------------------------- cost ----

def test_cost_matrix_single_component():
    model = MixtureModel(G1, [1.0], [[0.3]])
    data = Dataset.uniform(np.array([[0.0], [1.0], [-2.0]]))
    gamma = cost_matrix(G1, model, data)
    np.testing.assert_allclose(gamma[:, 0], -log_density(G1, 0.3, data.points), rtol=1e-15)


def test_cost_matrix_two_gaussians():
    model, data = two_gauss()
    gamma = cost_matrix(G1, model, data)
    np.testing.assert_allclose(gamma[0], [np.log(2) + HALF_LOG_2PI, np.log(2) + HALF_LOG_2PI + 0.5],
                               rtol=1e-15)
    np.testing.assert_allclose(gamma[0], [np.log(2) + 0.918939, np.log(2) + 1.418939], atol=1e-6)


def test_cost_differences_ignore_carrier():
    fam = poisson()
    model = MixtureModel(fam, [0.2, 0.8], [[1.5], [6.0]])
    data = Dataset.uniform(np.array([[0.0], [3.0], [40.0]]))
    gamma = cost_matrix(fam, model, data)
    thetas = np.log(model.xis[:, 0])
    # same costs without the carrier term
    bare = -(np.log(model.omega) + data.points * thetas - np.exp(thetas))
    np.testing.assert_allclose(np.diff(gamma, axis=1), np.diff(bare, axis=1), rtol=1e-12)


def test_cost_matrix_rejects_zero_weight():
    model = MixtureModel(G1, [1.0, 0.0], [[0.0], [1.0]])
    with pytest.raises(DomainError):
        cost_matrix(G1, model, Dataset.uniform(np.zeros((2, 1)) + [[0.0], [1.0]]))


# ---------------------------------------------------------------- hard ----

def test_estep_hard_examples():
    np.testing.assert_array_equal(estep_hard([[3.0, 1.0, 2.0]], [0.25]), [[0, 0.25, 0]])
    np.testing.assert_array_equal(estep_hard([[1.0, 1.0]], [0.5]), [[0.5, 0.0]])


def test_estep_hard_matches_vertex_enumeration():
    rng = np.random.default_rng(11)
    gamma, ups = random_instance(rng, 3, 2)
    pi = estep_hard(gamma, ups)
    best = min(np.sum(v * gamma) for v in hard_vertices(ups, 2))
    assert np.sum(pi * gamma) == best


def test_estep_hard_total_cost():
    rng = np.random.default_rng(1)
    for _ in range(50):
        gamma, ups = random_instance(rng, 5, 3)
        pi = estep_hard(gamma, ups)
        row_cost = np.sum(pi * gamma, axis=1)  # one nonzero per row, so no rounding
        np.testing.assert_array_equal(row_cost, ups * gamma.min(axis=1))
        assert np.sum(row_cost) == np.sum(ups * gamma.min(axis=1))


# ------------------------------------------------------------ entropic ----

def test_estep_entropic_two_gaussians():
    model, data = two_gauss()
    row = estep_entropic(G1, model, data, 1.0)[0]
    expected = np.array([1.0, np.exp(-0.5)]) / (1 + np.exp(-0.5))
    np.testing.assert_allclose(row, expected, rtol=1e-15)
    np.testing.assert_allclose(row, [0.62246, 0.37754], atol=1e-5)


def test_estep_entropic_equal_costs():
    for lam in (1e-3, 1.0, 50.0):
        np.testing.assert_allclose(entropic_rows([[2.0, 2.0, 2.0, 2.0]], [0.4], lam),
                                   [[0.1] * 4], rtol=1e-15)


def test_estep_entropic_huge_lambda_is_uniform():
    model, data = two_gauss()
    row = estep_entropic(G1, model, data, 1e6)[0]
    np.testing.assert_allclose(row, [0.5, 0.5], atol=1e-3)


def test_estep_entropic_tiny_lambda_dispatches_to_hard():
    gamma = np.array([[1.0, 1.0, 0.5]])
    np.testing.assert_array_equal(entropic_rows(gamma, [1.0], LAMBDA_MIN / 10), [[0, 0, 1.0]])


def test_entropic_optimality_against_random_plans():
    rng = np.random.default_rng(7)
    for _ in range(20):
        gamma, ups = random_instance(rng, 3, 3)
        lam = rng.uniform(0.1, 3.0)
        pi = entropic_rows(gamma, ups, lam)
        best = np.sum(pi * gamma) + lam * entropic_phi(pi)
        q = random_feasible_plans(ups, 3, 1000, rng)
        vals = np.sum(q * gamma, axis=(1, 2)) + lam * np.array([entropic_phi(p) for p in q])
        assert best <= vals.min() + 1e-9


def test_carrier_invariance():
    rng = np.random.default_rng(3)
    gamma, ups = random_instance(rng, 6, 4)
    shift = rng.normal(scale=30, size=(6, 1))
    np.testing.assert_array_equal(estep_hard(gamma, ups).argmax(1),
                                  estep_hard(gamma + shift, ups).argmax(1))
    for lam in (0.05, 1.0, 7.0):
        np.testing.assert_allclose(entropic_rows(gamma + shift, ups, lam),
                                   entropic_rows(gamma, ups, lam), atol=1e-12, rtol=0)


def test_entropic_limit_is_hard():
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 20:
        gamma, ups = random_instance(rng, 5, 3)
        s = np.sort(gamma, axis=1)
        if np.any(s[:, 1] - s[:, 0] < 0.1):
            continue
        checked += 1
        diff = entropic_rows(gamma, ups, 1e-6) - estep_hard(gamma, ups)
        assert np.max(np.abs(diff)) <= 1e-6


def test_feasibility_all_solvers():
    rng = np.random.default_rng(9)
    for _ in range(30):
        gamma, ups = random_instance(rng, 8, 4)
        for pi in (estep_hard(gamma, ups), entropic_rows(gamma, ups, 0.3),
                   entropic_rows(gamma, ups, 1e-3), estep_quadratic(gamma, ups, 0.7)):
            assert np.all(pi >= 0)
            assert np.max(np.abs(pi.sum(axis=1) - ups)) <= 1e-12


# ----------------------------------------------------------- quadratic ----

def test_estep_quadratic_examples():
    np.testing.assert_allclose(estep_quadratic([[0.0, 0.0]], [1.0], 3.0), [[0.5, 0.5]])
    np.testing.assert_allclose(estep_quadratic([[0.0, 10.0]], [1.0], 1.0), [[1.0, 0.0]])
    np.testing.assert_allclose(estep_quadratic([[0.0, 1.0]], [1.0], 2.0), [[0.75, 0.25]],
                               rtol=1e-15)


@pytest.mark.parametrize("row,lam,expected", [
    ([0.0, 10.0], 1.0, [1.0, 0.0]),
    ([0.0, 1.0], 2.0, [0.75, 0.25]),
])
def test_estep_quadratic_examples_match_grid(row, lam, expected):
    t = np.linspace(0, 1, 1001)
    vals = t * row[0] + (1 - t) * row[1] + 0.5 * lam * (t ** 2 + (1 - t) ** 2)
    assert abs(t[np.argmin(vals)] - expected[0]) <= 1e-3


def test_estep_quadratic_matches_grid_search():
    rng = np.random.default_rng(21)
    for k in (2, 3):
        for _ in range(5):
            gamma, ups = random_instance(rng, 2, k)
            lam = rng.uniform(0.2, 4.0)
            pi = estep_quadratic(gamma, ups, lam)
            for i in range(2):
                f = lambda q, g=gamma[i]: float(q @ g + 0.5 * lam * q @ q)  # noqa: E731
                q = grid_minimize_row(f, k, ups[i], step=1e-3)
                assert np.max(np.abs(pi[i] - q)) <= 1e-3 * ups[i] + 1e-12


def test_estep_quadratic_rejects_zero_lambda():
    with pytest.raises(DomainError):
        estep_quadratic([[0.0, 1.0]], [1.0], 0.0)


def test_project_simplex_rows_is_projection():
    rng = np.random.default_rng(2)
    v = rng.normal(size=(40, 5))
    p = project_simplex_rows(v, 2.0)
    np.testing.assert_allclose(p.sum(axis=1), 2.0, rtol=1e-13)
    # KKT: entries above zero share a common shift, zero entries sit below it
    for vi, pi in zip(v, p):
        shift = (vi - pi)[pi > 0]
        np.testing.assert_allclose(shift, shift[0], atol=1e-12)
        assert np.all(vi[pi == 0] <= shift[0] + 1e-12)


# -------------------------------------------------- Bregman projection ----

def test_bregman_projection_check_zero_for_feasible_point():
    tilde = np.array([[0.2, 0.3], [0.1, 0.4]])
    assert bregman_projection_check(tilde, tilde) == 0.0


def test_bregman_projection_beats_grid():
    rng = np.random.default_rng(4)
    tilde = rng.uniform(0.1, 3.0, size=(1, 2))
    ups = np.array([1.0])
    star = tilde * (ups / tilde.sum(1))[:, None]
    best = bregman_projection_check(star, tilde)
    for t in np.arange(1e-3, 1.0, 1e-3):
        q = np.array([[t, 1.0 - t]])
        assert best <= bregman_projection_check(q, tilde) + 1e-15


def test_bregman_projection_matches_entropic_estep():
    rng = np.random.default_rng(8)
    gamma = rng.normal(size=(2, 2))
    ups = np.array([0.5, 0.5])
    lam = 0.7
    tilde = np.exp(-gamma / lam)
    expected = entropic_rows(gamma, ups, lam)
    for i in range(2):
        q = kl_projection_row_bisect(tilde[i], ups[i])
        np.testing.assert_allclose(q, expected[i], atol=1e-9, rtol=0)


# ------------------------------------------------------------- entropy ----

def test_plan_entropy_examples():
    np.testing.assert_array_equal(plan_entropy(estep_hard([[1.0, 0.0, 2.0]], [0.3])), [0.0])
    np.testing.assert_allclose(plan_entropy([[0.1, 0.1, 0.1, 0.1]]), [np.log(4)], rtol=1e-15)


def test_plan_entropy_monotone_in_lambda():
    rng = np.random.default_rng(12)
    gamma, ups = random_instance(rng, 10, 4)
    lams = np.geomspace(1e-3, 1e3, 25)
    ent = np.array([plan_entropy(entropic_rows(gamma, ups, lam)) for lam in lams])
    assert np.all(np.diff(ent, axis=0) >= -1e-12)
    assert np.all(ent <= np.log(4) + 1e-12)


# ---------------------------------------------------------- regularizer ----

def test_make_regularizer_collapses_small_lambda():
    assert make_regularizer("entropic", 0.0).kind == "none"
    assert make_regularizer("quadratic", 1e-13).kind == "none"
    assert make_regularizer("entropic", 1e-12).kind == "entropic"
    with pytest.raises(DomainError):
        RegularizerSpec("none", 1.0)
    with pytest.raises(DomainError):
        RegularizerSpec("entropic", -1.0)
    with pytest.raises(DomainError):
        RegularizerSpec("group_lasso", 1.0)


def test_entropic_phi_zero_convention():
    pi = np.array([[0.5, 0.0], [0.0, 0.5]])
    assert entropic_phi(pi) == pytest.approx(2 * 0.5 * (np.log(0.5) - 1))


def test_estep_dispatch():
    model, data = two_gauss()
    np.testing.assert_array_equal(estep(G1, model, data, make_regularizer("entropic", 0.0)),
                                  [[1.0, 0.0]])
    np.testing.assert_allclose(estep(G1, model, data, make_regularizer("entropic", 1.0)),
                               estep_entropic(G1, model, data, 1.0))
