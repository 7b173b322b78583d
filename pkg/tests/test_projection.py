import numpy as np
import pytest

from waldspace.errors import DomainError
from waldspace.forest import leaf_mask, random_wald, read_wald
from waldspace.projection import (
    approx_intrinsic_distance,
    cherry_tree,
    project_exhaustive,
    project_global,
    project_within_orthant,
    recursive_geodesic,
    resolve,
    star_distance_profile,
    star_tree,
    symmetrized_geodesic,
)
from waldspace.spd import covariance_of, extrinsic_cov_distance, spd_distance

F1 = "((1:0.1,2:0.1):0.5,3:0.1,(4:0.1,5:0.1):0.5)"
F2 = "((1:0.1,2:0.1):0.5,5:0.1,(3:0.1,4:0.1):0.5)"


def test_resolve_roundtrip():
    rng = np.random.default_rng(0)
    for _ in range(100):
        w = random_wald(int(rng.integers(2, 8)), rng, topology_policy="boundary")
        r = resolve(w)
        assert r.topology.is_fully_resolved
        back = r.to_wald()
        assert back.topology == w.topology
        np.testing.assert_allclose(back.lam, w.lam, rtol=1e-14)
        np.testing.assert_allclose(r.covariance(), covariance_of(w), atol=1e-14)


def test_within_orthant_recovers_tree():
    w = random_wald(6, seed=1, lam_range=(0.2, 0.7))
    start = w.lengths * np.exp(np.random.default_rng(2).normal(0, 0.3, w.lengths.size))
    r = project_within_orthant(covariance_of(w), w.topology, start)
    assert r.converged
    np.testing.assert_allclose(r.wald.lengths, w.lengths, atol=1e-6)
    assert r.distance < 1e-7


def test_within_orthant_validation():
    w = random_wald(4, seed=1)
    with pytest.raises(DomainError):
        project_within_orthant(covariance_of(w), w.topology, -w.lengths)
    with pytest.raises(DomainError):
        project_within_orthant(covariance_of(w), read_wald("(1:1,2:1,3:1,4:1)").topology, np.ones(4))


def test_global_crosses_into_neighbour_orthant():
    target = read_wald("((1:0.3,3:0.3):0.4,2:0.3,4:0.3)")
    seed = read_wald("((1:0.3,2:0.3):0.2,3:0.3,4:0.3)")
    r = project_global(covariance_of(target), seed)
    assert r.converged
    assert r.wald.topology == target.topology
    assert len(r.orthant_path) >= 2
    assert r.distance < 1e-6


def test_exhaustive_finds_true_orthant():
    target = random_wald(5, seed=4, lam_range=(0.2, 0.6))
    r = project_exhaustive(covariance_of(target))
    assert r.wald.topology == target.topology
    assert r.distance < 1e-6


def test_projection_of_off_manifold_point_improves_on_seed():
    rng = np.random.default_rng(5)
    w = random_wald(5, rng, lam_range=(0.2, 0.6))
    A = rng.standard_normal((5, 5)) * 0.2
    S0 = covariance_of(w) + A @ A.T
    seed = random_wald(5, rng)
    r = project_global(S0, seed)
    assert r.distance <= spd_distance(S0, covariance_of(seed))
    assert r.distance == pytest.approx(spd_distance(S0, covariance_of(r.wald)), rel=1e-12)


# ---------------------------------------------------------------------------
# approximate geodesics


@pytest.mark.parametrize("algo", [recursive_geodesic, symmetrized_geodesic])
def test_geodesic_endpoints(algo):
    a, b = read_wald(F1), read_wald(F2)
    g = algo(a, b, k=6)
    assert g.points[0] == a and g.points[-1] == b
    assert len(g.segment_lengths) == len(g.points) - 1
    assert approx_intrinsic_distance(g) == pytest.approx(g.total_length)


def test_symmetrized_point_count_and_swap_symmetry():
    a, b = read_wald(F1), read_wald(F2)
    k = 6
    g = symmetrized_geodesic(a, b, k)
    h = symmetrized_geodesic(b, a, k)
    assert len(g.points) == 2 * k
    for p, q in zip(g.points, h.points[::-1]):
        assert p == q
    np.testing.assert_allclose(g.segment_lengths, h.segment_lengths[::-1], rtol=1e-12)


def test_same_orthant_geodesic_length_exceeds_chord():
    rng = np.random.default_rng(6)
    w1 = random_wald(5, rng, lam_range=(0.2, 0.6))
    w2 = type(w1)(w1.topology, np.clip(w1.lam + rng.normal(0, 0.1, w1.lam.size), 0.05, 0.9))
    g = symmetrized_geodesic(w1, w2, k=8)
    # the extrinsic distance bounds every path length from below
    assert g.total_length >= extrinsic_cov_distance(w1, w2) - 1e-12


def test_identical_endpoints_zero_length():
    w = random_wald(4, seed=7)
    assert symmetrized_geodesic(w, w, k=4).total_length == pytest.approx(0.0, abs=1e-7)


def test_geodesic_validation():
    with pytest.raises(DomainError):
        symmetrized_geodesic(random_wald(4, seed=0), random_wald(5, seed=0))
    with pytest.raises(DomainError):
        recursive_geodesic(random_wald(4, seed=0), random_wald(4, seed=1), k=0)


# ---------------------------------------------------------------------------
# star profile


def test_cherry_and_star_shapes():
    c = cherry_tree(0.5)
    assert c.topology.is_fully_resolved
    assert leaf_mask([3, 4]) in c.topology.splits
    np.testing.assert_allclose(c.lam, 0.5)
    s = star_tree(4, 0.3)
    assert s.topology.n_splits == 4
    np.testing.assert_allclose(s.lam, 0.3)


def test_star_profile_small_grid():
    prof = star_distance_profile(0.5, [0.05, 0.55, 0.95], k=8)
    d = [v for _, v in prof]
    assert d[1] < d[0] and d[1] < d[2]


def test_star_profile_validation():
    with pytest.raises(DomainError):
        star_distance_profile(0.0, [0.5])
    with pytest.raises(DomainError):
        star_distance_profile(0.5, [1.0])
