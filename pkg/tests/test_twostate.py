import math

import numpy as np
import pytest

from oracles import brute_char_prob
from waldspace.errors import DomainError
from waldspace.forest import path_length_matrix, random_wald, read_wald
from waldspace.twostate import (
    F_SECOND_DERIVATIVE,
    TwoStateMetric,
    char_prob,
    char_prob_grad,
    char_prob_hess,
    character_bits,
    character_index,
    distribution_derivatives,
    extrinsic_distance,
    f_divergence,
    fisher_info,
    full_distribution,
    simulate_characters,
)


def two_leaf(lam):
    return read_wald(f"(1:0,2:{lam!r})", weights="lambda")


def test_character_indexing_is_little_endian():
    assert list(character_bits(1, 3)) == [1, 0, 0]
    assert list(character_bits(6, 3)) == [0, 1, 1]
    assert character_index([0, 1, 1]) == 6


def test_two_leaf_distribution():
    d = full_distribution(two_leaf(0.5))
    np.testing.assert_allclose(d.probs, [0.375, 0.125, 0.125, 0.375], atol=1e-15)


def test_isolated_leaves_uniform():
    d = full_distribution(read_wald("1;2;3;"))
    np.testing.assert_allclose(d.probs, 1 / 8, atol=1e-15)


@pytest.mark.parametrize("policy", ["resolved", "boundary"])
def test_pruning_matches_brute_force(policy):
    rng = np.random.default_rng(5)
    for _ in range(40):
        w = random_wald(int(rng.integers(2, 7)), rng, topology_policy=policy)
        f = w.to_forest()
        d = full_distribution(w)
        for idx in rng.choice(2**w.n_leaves, size=min(8, 2**w.n_leaves), replace=False):
            assert d.probs[idx] == pytest.approx(brute_char_prob(f, character_bits(int(idx), w.n_leaves)), abs=1e-14)


def test_raw_forest_input_matches_canonical():
    w = random_wald(5, seed=2, topology_policy="boundary")
    f = w.to_forest()
    chars = np.array([character_bits(i, 5) for i in range(32)])
    np.testing.assert_allclose(char_prob(f, chars), full_distribution(w).probs, atol=1e-15)


def test_complement_symmetry():
    w = random_wald(6, seed=9)
    p = full_distribution(w).probs
    np.testing.assert_allclose(p, p[::-1], atol=1e-16)


def test_normalization_and_positivity():
    rng = np.random.default_rng(3)
    for _ in range(50):
        w = random_wald(int(rng.integers(2, 9)), rng)
        p = full_distribution(w).probs
        assert abs(p.sum() - 1) < 1e-12
        assert p.min() > 0


def test_leaf_covariance_is_quarter_exp_path_length():
    rng = np.random.default_rng(4)
    for _ in range(20):
        w = random_wald(int(rng.integers(3, 7)), rng)
        n = w.n_leaves
        bits = np.array([character_bits(i, n) for i in range(2**n)], dtype=float)
        p = full_distribution(w).probs
        cov = np.einsum("k,ku,kv->uv", p, bits, bits) - 0.25
        P = path_length_matrix(w)
        iu = np.triu_indices(n, 1)
        np.testing.assert_allclose(cov[iu], 0.25 * np.exp(-P[iu]), atol=1e-14)


def test_character_validation():
    w = two_leaf(0.5)
    with pytest.raises(DomainError):
        char_prob(w, [0, 2])
    with pytest.raises(DomainError):
        char_prob(w, [0, 1, 1])
    with pytest.raises(DomainError):
        char_prob(w, 4)


def test_cap_enforced():
    w = random_wald(5, seed=0)
    with pytest.raises(DomainError):
        full_distribution(w, cap=4)


# ---------------------------------------------------------------------------
# derivatives


@pytest.mark.parametrize("param", ["length", "lambda"])
def test_gradient_and_hessian_vs_finite_differences(param):
    rng = np.random.default_rng(12)
    h = 1e-5
    for _ in range(10):
        w = random_wald(int(rng.integers(3, 6)), rng, lam_range=(0.1, 0.8))
        m = w.topology.n_splits
        s = int(rng.integers(2**w.n_leaves))
        e1, e2 = (int(v) for v in rng.integers(m, size=2))
        x = w.lengths if param == "length" else w.lam

        def prob(xx):
            lam = -np.expm1(-xx) if param == "length" else xx
            return char_prob(type(w)(w.topology, lam), s)

        def bump(i, d):
            y = x.copy()
            y[i] += d
            return y

        fd = (prob(bump(e1, h)) - prob(bump(e1, -h))) / (2 * h)
        assert char_prob_grad(w, s, e1, param) == pytest.approx(fd, rel=1e-6, abs=1e-12)

        def grad_at(xx):
            lam = -np.expm1(-xx) if param == "length" else xx
            return char_prob_grad(type(w)(w.topology, lam), s, e1, param)

        fd2 = (grad_at(bump(e2, h)) - grad_at(bump(e2, -h))) / (2 * h)
        assert char_prob_hess(w, s, e1, e2, param) == pytest.approx(fd2, rel=1e-4, abs=1e-9)


def test_derivatives_sum_to_zero():
    w = random_wald(5, seed=1)
    p, dp, d2p = distribution_derivatives(w, "length", order=2)
    assert abs(p.sum() - 1) < 1e-13
    np.testing.assert_allclose(dp.sum(axis=-1), 0, atol=1e-13)
    np.testing.assert_allclose(d2p.sum(axis=-1), 0, atol=1e-13)


# ---------------------------------------------------------------------------
# Fisher information


def test_two_leaf_fisher_closed_form():
    # p = (2 - lam)/4 (twice), lam/4 (twice): g_lam = (1/(2 - lam) + 1/lam) / 2
    w = two_leaf(0.5)
    assert fisher_info(w, "lambda").g[0, 0] == pytest.approx(4 / 3, rel=1e-14)
    assert fisher_info(w, "length").g[0, 0] == pytest.approx(1 / 3, rel=1e-14)


def test_fisher_transforms_as_tensor():
    w = random_wald(5, seed=8)
    gl = fisher_info(w, "length").g
    gx = fisher_info(w, "lambda").g
    J = np.diag(1 - w.lam)  # d lam / d l
    np.testing.assert_allclose(gl, J @ gx @ J, rtol=1e-12)


def test_fisher_positive_definite():
    rng = np.random.default_rng(6)
    for _ in range(20):
        w = random_wald(int(rng.integers(3, 7)), rng)
        assert np.linalg.eigvalsh(fisher_info(w).g).min() > 0


def test_fisher_requires_resolved_interior():
    with pytest.raises(DomainError):
        fisher_info(read_wald("((1:1,2:1):0,3:1,4:1)"))


@pytest.mark.parametrize("param", ["length", "lambda"])
def test_metric_derivative_vs_finite_differences(param):
    w = random_wald(5, seed=21, lam_range=(0.2, 0.7))
    m = TwoStateMetric(w.topology, param)
    x = w.lengths if param == "length" else w.lam.copy()
    g, dg = m.g_and_dg(x)
    np.testing.assert_allclose(g, m.g(x), rtol=1e-14)
    h = 1e-6
    for k in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        fd = (m.g(xp) - m.g(xm)) / (2 * h)
        np.testing.assert_allclose(dg[:, :, k], fd, rtol=1e-5, atol=1e-7)


# ---------------------------------------------------------------------------
# simulation


def test_simulated_frequencies_match_distribution():
    w = random_wald(4, seed=3)
    X = simulate_characters(w, 200_000, seed=4)
    idx = X @ (1 << np.arange(4))
    freq = np.bincount(idx, minlength=16) / X.shape[0]
    p = full_distribution(w).probs
    # five standard errors per cell
    se = np.sqrt(p * (1 - p) / X.shape[0])
    assert np.all(np.abs(freq - p) < 5 * se)


def test_simulation_reproducible():
    w = random_wald(5, seed=0)
    np.testing.assert_array_equal(simulate_characters(w, 50, seed=1), simulate_characters(w, 50, seed=1))


# ---------------------------------------------------------------------------
# divergences


@pytest.mark.parametrize("f", sorted(F_SECOND_DERIVATIVE))
def test_divergence_zero_on_identical(f):
    p = full_distribution(random_wald(4, seed=1))
    assert f_divergence(p, p, f) == pytest.approx(0.0, abs=1e-15)


def test_hellinger_two_leaf_closed_form():
    a, b = 0.5, 0.3
    p = np.array([2 - a, a, a, 2 - a]) / 4
    q = np.array([2 - b, b, b, 2 - b]) / 4
    expected = np.sum((np.sqrt(p) - np.sqrt(q)) ** 2)
    assert expected == pytest.approx(0.0158297231121271, abs=1e-15)
    d = extrinsic_distance(two_leaf(a), two_leaf(b), "hellinger")
    assert d == pytest.approx(math.sqrt(expected), rel=1e-13)


def test_js_bounded_and_symmetric():
    rng = np.random.default_rng(2)
    for _ in range(10):
        w1, w2 = random_wald(5, rng), random_wald(5, rng)
        d12 = extrinsic_distance(w1, w2, "js")
        assert d12 == pytest.approx(extrinsic_distance(w2, w1, "js"), rel=1e-13)
        assert 0 <= d12 <= math.sqrt(math.log(2))


def test_kl_nonnegative():
    rng = np.random.default_rng(3)
    for _ in range(10):
        p = full_distribution(random_wald(4, rng))
        q = full_distribution(random_wald(4, rng))
        assert f_divergence(p, q, "kl") >= 0


def test_divergence_validation():
    with pytest.raises(DomainError):
        f_divergence([0.5, 0.5], [1.0, 0.0], "kl")
    with pytest.raises(DomainError):
        f_divergence([0.5, 0.5], [0.5, 0.5], "bogus")
