import math

import numpy as np
import pytest

from oracles import bhv_oracle
from waldspace.baselines import (
    bhv_distance,
    bhv_support,
    compare_metrics,
    cone_path_bound,
    path_difference_distance,
)
from waldspace.errors import DomainError
from waldspace.forest import Wald, random_wald, read_wald


def test_same_topology_is_euclidean():
    w1 = random_wald(6, seed=0)
    w2 = Wald(w1.topology, np.clip(w1.lam * 0.7, 0, 0.99))
    assert bhv_distance(w1, w2) == pytest.approx(np.linalg.norm(w1.lengths - w2.lengths), rel=1e-13)


def test_nni_pair_through_star():
    a = read_wald("((1:1,2:1):1,3:1,4:1)")
    b = read_wald("((1:1,3:1):1,2:1,4:1)")
    assert bhv_distance(a, b) == pytest.approx(2.0, rel=1e-14)
    assert cone_path_bound(a, b) == pytest.approx(2.0, rel=1e-14)


@pytest.mark.parametrize("n", [4, 5, 6])
def test_gtp_matches_exhaustive_oracle(n):
    rng = np.random.default_rng(n)
    for _ in range(25):
        w1, w2 = random_wald(n, rng), random_wald(n, rng)
        assert bhv_distance(w1, w2) == pytest.approx(bhv_oracle(w1, w2), rel=1e-10)


def test_support_blocks_partition_the_differences():
    rng = np.random.default_rng(9)
    w1, w2 = random_wald(7, rng), random_wald(7, rng)
    _, seq, a, b = bhv_support(w1, w2)
    assert sorted(s for A, _ in seq for s in A) == sorted(a)
    assert sorted(s for _, B in seq for s in B) == sorted(b)


def test_symmetry_and_triangle_inequality():
    rng = np.random.default_rng(11)
    trees = [random_wald(6, rng) for _ in range(8)]
    D = np.array([[bhv_distance(x, y) for y in trees] for x in trees])
    np.testing.assert_allclose(D, D.T, rtol=1e-12)
    np.testing.assert_allclose(np.diag(D), 0, atol=1e-14)
    for i in range(8):
        for j in range(8):
            assert np.all(D[i, j] <= D[i] + D[:, j] + 1e-12)


def test_bhv_below_cone_bound():
    rng = np.random.default_rng(12)
    for _ in range(50):
        w1, w2 = random_wald(7, rng), random_wald(7, rng)
        assert bhv_distance(w1, w2) <= cone_path_bound(w1, w2) + 1e-12


def test_bhv_rejects_forest():
    with pytest.raises(DomainError):
        bhv_distance(read_wald("((1:1,2:1):inf,(3:1,4:1))"), read_wald("((1:1,2:1):1,3:1,4:1)"))


# ---------------------------------------------------------------------------
# path difference


def test_path_difference_two_leaf():
    a = read_wald("(1:0,2:0.3)")
    b = read_wald("(1:0,2:1.1)")
    assert path_difference_distance(a, b) == pytest.approx(0.8, rel=1e-12)


def test_path_difference_counts_unordered_pairs():
    a = read_wald("(1:1,2:1,3:1)")
    b = read_wald("(1:2,2:1,3:1)")
    # pairs (1,2) and (1,3) each change by one
    assert path_difference_distance(a, b) == pytest.approx(math.sqrt(2), rel=1e-14)


def test_path_difference_relabel_invariant():
    a = read_wald("((1:0.4,2:0.2):0.3,3:0.5,(4:0.1,5:0.7):0.2)")
    b = read_wald("((1:0.1,3:0.2):0.6,2:0.5,(4:0.3,5:0.2):0.1)")
    # the same trees under the relabelling u -> 6 - u
    ta = "((5:0.4,4:0.2):0.3,3:0.5,(2:0.1,1:0.7):0.2)"
    tb = "((5:0.1,3:0.2):0.6,4:0.5,(2:0.3,1:0.2):0.1)"
    assert path_difference_distance(read_wald(ta), read_wald(tb)) == pytest.approx(
        path_difference_distance(a, b), rel=1e-13)


def test_path_difference_rejects_forest():
    with pytest.raises(DomainError):
        path_difference_distance(read_wald("1;2;"), read_wald("(1:1,2:1)"))


# ---------------------------------------------------------------------------
# comparison report


def test_single_tree_gives_zero_matrices():
    r = compare_metrics([random_wald(4, seed=0)])
    for M in r.matrices.values():
        np.testing.assert_array_equal(M, np.zeros((1, 1)))
    assert all(math.isnan(v) for v in r.correlations.values())


def test_identical_trees_correlation_undefined():
    w = random_wald(4, seed=0)
    r = compare_metrics([w, w, w])
    for M in r.matrices.values():
        np.testing.assert_allclose(M, 0, atol=1e-12)
    assert math.isnan(r.correlation("bhv", "cov"))


def test_tropical_notice():
    r = compare_metrics([random_wald(4, seed=0), random_wald(4, seed=1)], metrics=("tropical", "cov"))
    assert list(r.matrices) == ["cov"]
    assert any("tropical" in s for s in r.notices)


def test_bhv_on_forest_gives_nan_cell():
    trees = [read_wald("((1:1,2:1):inf,(3:1,4:1))"), random_wald(4, seed=1), random_wald(4, seed=2)]
    r = compare_metrics(trees, metrics=("bhv", "cov"))
    assert math.isnan(r.matrices["bhv"][0, 1])
    assert np.isfinite(r.matrices["bhv"][1, 2])
    assert np.all(np.isfinite(r.matrices["cov"]))
    assert len(r.notices) == 2


def test_compare_validation():
    with pytest.raises(DomainError):
        compare_metrics([])
    with pytest.raises(DomainError):
        compare_metrics([random_wald(4, seed=0), random_wald(5, seed=0)])
    with pytest.raises(DomainError):
        compare_metrics([random_wald(4, seed=0)], metrics=("bogus",))
    with pytest.raises(DomainError):
        compare_metrics([random_wald(5, seed=0)], metrics=("js",), cap=4)
