import numpy as np
import pytest

from waldspace.errors import ConvergenceError, DomainError, NotPositiveDefiniteError
from waldspace.forest import random_wald, read_wald
from waldspace.spd import (
    GaussianMetric,
    covariance_from_weights,
    covariance_of,
    extrinsic_cov_distance,
    frechet_mean_spd,
    grad_sq_dist,
    spd_distance,
    spd_exp,
    spd_geodesic,
    spd_invsqrt,
    spd_log,
    spd_sqrt,
)


def random_spd(rng, n):
    A = rng.standard_normal((n, n))
    return A @ A.T + n * np.eye(n) * 0.2


def test_distance_identity_scaled():
    # d(I, e^2 I) = sqrt(N/2) * 2
    for n in (1, 2, 4, 7):
        assert spd_distance(np.eye(n), np.exp(2.0) * np.eye(n)) == pytest.approx(np.sqrt(n / 2) * 2, abs=1e-12)


def test_matrix_functions_consistent():
    rng = np.random.default_rng(0)
    S = random_spd(rng, 5)
    r = spd_sqrt(S)
    np.testing.assert_allclose(r @ r, S, rtol=1e-12)
    np.testing.assert_allclose(spd_invsqrt(S) @ r, np.eye(5), atol=1e-12)
    np.testing.assert_allclose(spd_exp(spd_log(S)), S, rtol=1e-11)


def test_geodesic_endpoints_and_constant_speed():
    rng = np.random.default_rng(1)
    S1, S2 = random_spd(rng, 4), random_spd(rng, 4)
    np.testing.assert_allclose(spd_geodesic(S1, S2, 0.0), S1, atol=1e-10)
    np.testing.assert_allclose(spd_geodesic(S1, S2, 1.0), S2, atol=1e-10)
    d = spd_distance(S1, S2)
    for t in (0.1, 0.5, 0.8):
        assert spd_distance(S1, spd_geodesic(S1, S2, t)) == pytest.approx(t * d, abs=1e-10)


def test_congruence_invariance():
    rng = np.random.default_rng(2)
    S1, S2 = random_spd(rng, 5), random_spd(rng, 5)
    A = rng.standard_normal((5, 5)) + 3 * np.eye(5)
    assert spd_distance(A @ S1 @ A.T, A @ S2 @ A.T) == pytest.approx(spd_distance(S1, S2), abs=1e-10)


def test_non_pd_rejected():
    with pytest.raises(NotPositiveDefiniteError):
        spd_distance(np.eye(2), np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(DomainError):
        spd_distance(np.eye(2), np.array([[1.0, 0.5], [0.0, 1.0]]))


# ---------------------------------------------------------------------------
# covariance embedding


def test_covariance_matches_path_lengths():
    rng = np.random.default_rng(3)
    for _ in range(30):
        w = random_wald(int(rng.integers(3, 8)), rng, topology_policy="boundary")
        S = covariance_of(w)
        with np.errstate(over="ignore"):
            expected = np.exp(-w.to_forest().path_length_matrix())
        np.fill_diagonal(expected, 1.0)
        np.testing.assert_allclose(S, expected, atol=1e-14)


def test_isolated_leaves_identity():
    np.testing.assert_array_equal(covariance_of(read_wald("1;2;3;")), np.eye(3))


def test_covariance_positive_definite_near_boundary():
    rng = np.random.default_rng(4)
    for _ in range(200):
        w = random_wald(int(rng.integers(2, 9)), rng, lam_range=(1e-6, 1 - 1e-6))
        assert np.linalg.eigvalsh(covariance_of(w)).min() > 0


def test_covariance_from_weights_star():
    w = read_wald("(1:0.5,2:0.5,3:0.5)", weights="lambda")
    S = covariance_from_weights(w.topology, w.lam)
    np.testing.assert_allclose(S[np.triu_indices(3, 1)], 0.25, atol=1e-15)


def test_extrinsic_distance_symmetric():
    a, b = random_wald(5, seed=1), random_wald(5, seed=2)
    assert extrinsic_cov_distance(a, b) == pytest.approx(extrinsic_cov_distance(b, a), rel=1e-12)


# ---------------------------------------------------------------------------
# Gaussian metric


def test_two_leaf_gaussian_metric():
    # S = [[1, mu], [mu, 1]], g = mu^2 (1 + mu^2) / (1 - mu^2)^2 at mu = 1/2
    w = read_wald("(1:0,2:0.5)", weights="lambda")
    g = GaussianMetric(w.topology).g(w.lengths)
    assert g[0, 0] == pytest.approx(0.3125 / 0.5625, rel=1e-14)


@pytest.mark.parametrize("param", ["length", "lambda"])
def test_gaussian_dg_vs_finite_differences(param):
    w = random_wald(5, seed=13, lam_range=(0.2, 0.8))
    m = GaussianMetric(w.topology, param)
    x = w.lengths if param == "length" else w.lam.copy()
    dg = m.dg(x)
    h = 1e-6
    for k in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        np.testing.assert_allclose(dg[:, :, k], (m.g(xp) - m.g(xm)) / (2 * h), rtol=1e-6, atol=1e-8)


def test_gaussian_metric_matches_spd_distance_locally():
    w = random_wald(5, seed=5, lam_range=(0.2, 0.7))
    m = GaussianMetric(w.topology)
    rng = np.random.default_rng(6)
    v = rng.standard_normal(w.topology.n_splits)
    eps = 1e-5
    S0 = covariance_of(w)
    S1 = m.covariance(w.lengths + eps * v)
    assert spd_distance(S0, S1) / eps == pytest.approx(np.sqrt(v @ m.g(w.lengths) @ v), rel=1e-4)


# ---------------------------------------------------------------------------
# gradient of the squared distance


@pytest.mark.parametrize("param", ["length", "lambda"])
def test_grad_sq_dist_vs_finite_differences(param):
    rng = np.random.default_rng(7)
    h = 1e-6
    for _ in range(10):
        n = int(rng.integers(3, 7))
        w = random_wald(n, rng, lam_range=(0.1, 0.8))
        S0 = covariance_of(random_wald(n, rng))
        grad = grad_sq_dist(S0, w, param)
        x = w.lengths if param == "length" else w.lam.copy()
        for i in range(x.size):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h

            def d2(xx):
                lam = -np.expm1(-xx) if param == "length" else xx
                return spd_distance(S0, covariance_from_weights(w.topology, lam)) ** 2

            fd = (d2(xp) - d2(xm)) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-6, abs=1e-9)


# ---------------------------------------------------------------------------
# Frechet mean


def test_frechet_mean_of_commuting_matrices_is_geometric_mean():
    mats = [np.diag([1.0, 4.0]), np.diag([4.0, 1.0]), np.diag([2.0, 2.0])]
    M = frechet_mean_spd(mats)
    np.testing.assert_allclose(M, np.diag([2.0, 2.0]), atol=1e-9)


def test_frechet_mean_of_two_is_midpoint():
    rng = np.random.default_rng(8)
    S1, S2 = random_spd(rng, 4), random_spd(rng, 4)
    np.testing.assert_allclose(frechet_mean_spd([S1, S2]), spd_geodesic(S1, S2, 0.5), atol=1e-9)


def test_frechet_mean_congruence_equivariant():
    rng = np.random.default_rng(9)
    mats = [random_spd(rng, 3) for _ in range(5)]
    A = rng.standard_normal((3, 3)) + 2 * np.eye(3)
    M = frechet_mean_spd(mats)
    MA = frechet_mean_spd([A @ S @ A.T for S in mats])
    np.testing.assert_allclose(MA, A @ M @ A.T, rtol=1e-8, atol=1e-9)


def test_frechet_iteration_cap():
    rng = np.random.default_rng(10)
    mats = [random_spd(rng, 3) for _ in range(4)]
    with pytest.raises(ConvergenceError):
        frechet_mean_spd(mats, tol=1e-30, max_iter=2)
