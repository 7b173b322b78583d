"""Character distributions under the symmetric two-state Markov model.

Along an edge of length ``l`` the letter at the far end equals the letter
at the near end with probability ``(1 + exp(-l)) / 2``.  Probabilities
are computed with Felsenstein pruning, vectorized over characters and
over a batch of "variants" in which some edge transition matrices are
replaced by their derivatives.  Because the probability is multilinear in
the edge matrices, variants give exact first and second partial
derivatives from the same recursion.

Characters are indexed little-endian: leaf ``u`` is bit ``u - 1`` of the
index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .forest import Forest, Topology, Wald
from .riemann import MetricProvider

DEFAULT_CAP = 16


# ---------------------------------------------------------------------------
# characters


def character_bits(index: int, n_leaves: int) -> np.ndarray:
    """Bits of character ``index``; entry ``u - 1`` is the letter at leaf ``u``."""
    if not 0 <= index < 2**n_leaves:
        raise DomainError(f"character index {index} out of range for N={n_leaves}")
    return (index >> np.arange(n_leaves)) & 1


def character_index(bits) -> int:
    bits = np.asarray(bits, dtype=int)
    return int(np.sum(bits << np.arange(bits.size)))


def _all_characters(n_leaves, indices=None):
    if indices is None:
        indices = np.arange(2**n_leaves)
    return ((np.asarray(indices)[:, None] >> np.arange(n_leaves)) & 1).astype(np.int8)


def _as_characters(s, n_leaves):
    """Accept an index, a bit vector, or a 2-d array of bit vectors."""
    if np.isscalar(s) and not isinstance(s, (bool, np.bool_)):
        return character_bits(int(s), n_leaves)[None, :].astype(np.int8)
    arr = np.asarray(s, dtype=np.int8)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != n_leaves:
        raise DomainError(f"character length must equal N={n_leaves}")
    if np.any((arr != 0) & (arr != 1)):
        raise DomainError("characters are 0/1 vectors")
    return arr


# ---------------------------------------------------------------------------
# pruning


@dataclass(frozen=True)
class _Plan:
    """Edges of a rooted forest in post-order (children before parents)."""

    n_leaves: int
    n_vertices: int
    parent: np.ndarray  # per edge, in post-order
    child: np.ndarray
    edge: np.ndarray  # index into the caller's weight vector
    roots: tuple


def _plan_for_topology(topo: Topology) -> _Plan:
    lay = topo.rooted
    order = np.array(lay.postorder, dtype=int)
    return _Plan(
        topo.n_leaves,
        lay.n_vertices,
        np.array(lay.edge_parent)[order] if order.size else order,
        np.array(lay.edge_child)[order] if order.size else order,
        order,
        lay.roots,
    )


def _plan_for_forest(forest: Forest) -> _Plan:
    adj = {v: [] for v in range(forest.n_vertices)}
    for k, (a, b, _) in enumerate(forest.edges):
        adj[a].append((b, k))
        adj[b].append((a, k))
    seen = set()
    roots = []
    pre = []  # (parent, child, edge) in pre-order
    for r in range(forest.n_vertices):
        if r in seen:
            continue
        roots.append(r)
        seen.add(r)
        stack = [r]
        while stack:
            v = stack.pop()
            for x, k in adj[v]:
                if x not in seen:
                    seen.add(x)
                    pre.append((v, x, k))
                    stack.append(x)
    post = pre[::-1]
    arr = np.array(post, dtype=int).reshape(-1, 3)
    return _Plan(forest.n_leaves, forest.n_vertices, arr[:, 0], arr[:, 1], arr[:, 2], tuple(roots))


def _edge_matrices(lam, parametrization):
    """Transition matrices and their first/second derivatives, each ``(m, 2, 2)``."""
    lam = np.asarray(lam, dtype=float)
    mu = 1.0 - lam
    same = 0.5 * (1.0 + mu)
    diff = 0.5 * (1.0 - mu)
    P = np.stack([np.stack([same, diff], -1), np.stack([diff, same], -1)], -2)
    flip = np.array([[-1.0, 1.0], [1.0, -1.0]])
    if parametrization == "length":
        D1 = 0.5 * mu[:, None, None] * flip
        D2 = -D1
    elif parametrization == "lambda":
        D1 = np.broadcast_to(0.5 * flip, P.shape).copy()
        D2 = np.zeros_like(P)
    else:
        raise DomainError("parametrization must be 'length' or 'lambda'")
    return P, D1, D2


def _variant_matrices(lam, parametrization, order):
    """Stack ``(V, m, 2, 2)`` of edge matrices: the base, then one variant per
    first derivative, then one per unordered pair for second derivatives."""
    P, D1, D2 = _edge_matrices(lam, parametrization)
    m = P.shape[0]
    mats = [P]
    if order >= 1:
        for i in range(m):
            M = P.copy()
            M[i] = D1[i]
            mats.append(M)
    if order >= 2:
        for i in range(m):
            for j in range(i, m):
                M = P.copy()
                if i == j:
                    M[i] = D2[i]
                else:
                    M[i] = D1[i]
                    M[j] = D1[j]
                mats.append(M)
    return np.stack(mats)


def _prune(plan: _Plan, mats: np.ndarray, chars: np.ndarray) -> np.ndarray:
    """Probabilities ``(V, n_chars)`` for each variant of the edge matrices."""
    V = mats.shape[0]
    C = chars.shape[0]
    partial = {}
    for u in range(plan.n_leaves):
        ind = np.stack([chars[:, u] == 0, chars[:, u] == 1]).astype(float)
        partial[u] = np.broadcast_to(ind, (V, 2, C))
    for p, c, e in zip(plan.parent, plan.child, plan.edge):
        below = partial.pop(c, None)
        if below is None:
            msg = mats[:, e].sum(axis=2)[:, :, None]
        else:
            msg = np.einsum("vab,vbc->vac", mats[:, e], below)
        partial[p] = partial[p] * msg if p in partial else msg
    out = np.ones((V, C))
    for r in plan.roots:
        if r in partial:
            out *= 0.5 * partial[r].sum(axis=1)
    return out


def _derivatives(plan, lam, parametrization, order, chars):
    m = len(lam)
    vals = _prune(plan, _variant_matrices(lam, parametrization, order), chars)
    p = vals[0]
    if order == 0:
        return p, None, None
    dp = vals[1 : m + 1]
    if order == 1:
        return p, dp, None
    d2p = np.empty((m, m, chars.shape[0]))
    k = m + 1
    for i in range(m):
        for j in range(i, m):
            d2p[i, j] = d2p[j, i] = vals[k]
            k += 1
    return p, dp, d2p


def _split_index(w: Wald, e) -> int:
    m = w.topology.n_splits
    if isinstance(e, (int, np.integer)) and 0 <= e < m:
        return int(e)
    raise DomainError(f"split index {e} out of range 0..{m - 1}")


# ---------------------------------------------------------------------------
# public operations


def char_prob(w, s) -> float | np.ndarray:
    """Probability of character ``s`` (an index, a bit vector, or an array of
    bit vectors).  ``w`` may be a :class:`Wald` or a raw :class:`Forest`."""
    if isinstance(w, Forest):
        plan = _plan_for_forest(w)
        lam = np.array([e[2] for e in w.edges])
    else:
        plan = _plan_for_topology(w.topology)
        lam = w.lam
    chars = _as_characters(s, w.n_leaves)
    p = _prune(plan, _edge_matrices(lam, "length")[0][None], chars)[0]
    return float(p[0]) if np.ndim(s) <= 1 and p.size == 1 else p


def char_prob_grad(w: Wald, s, e, parametrization="length") -> float:
    """``dp(s)/dx_e`` with ``x`` the edge lengths (default) or weights."""
    e = _split_index(w, e)
    chars = _as_characters(s, w.n_leaves)
    P, D1, _ = _edge_matrices(w.lam, parametrization)
    M = P.copy()
    M[e] = D1[e]
    return float(_prune(_plan_for_topology(w.topology), M[None], chars)[0, 0])


def char_prob_hess(w: Wald, s, e1, e2, parametrization="length") -> float:
    """``d^2 p(s) / dx_e1 dx_e2``."""
    e1 = _split_index(w, e1)
    e2 = _split_index(w, e2)
    chars = _as_characters(s, w.n_leaves)
    P, D1, D2 = _edge_matrices(w.lam, parametrization)
    M = P.copy()
    if e1 == e2:
        M[e1] = D2[e1]
    else:
        M[e1] = D1[e1]
        M[e2] = D1[e2]
    return float(_prune(_plan_for_topology(w.topology), M[None], chars)[0, 0])


@dataclass(frozen=True, eq=False)
class CharacterDistribution:
    """Probabilities of all ``2**N`` characters, little-endian indexed."""

    probs: np.ndarray
    n_leaves: int

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (2**self.n_leaves,):
            raise DomainError("distribution must have 2**N entries")
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)

    def __len__(self):
        return self.probs.size

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)

    def bits(self) -> np.ndarray:
        return _all_characters(self.n_leaves)


def _check_cap(n, cap):
    if n > cap:
        raise DomainError(f"N={n} exceeds the distribution cap {cap}; raise cap explicitly")


def full_distribution(w, cap: int = DEFAULT_CAP) -> CharacterDistribution:
    """Probabilities of every character.

    Only the half of the characters with leaf ``N`` in state 0 are pruned;
    the rest follow from the complement symmetry ``p(s) = p(~s)``.
    """
    n = w.n_leaves
    _check_cap(n, cap)
    half = np.arange(2 ** (n - 1))
    p_half = char_prob(w, _all_characters(n, half))
    p_half = np.atleast_1d(p_half)
    probs = np.empty(2**n)
    probs[half] = p_half
    probs[2**n - 1 - half] = p_half
    return CharacterDistribution(probs, n)


def distribution_derivatives(w: Wald, parametrization="length", order=1, cap: int = DEFAULT_CAP):
    """All probabilities with their first (and optionally second) partials.

    Returns ``(p, dp, d2p)`` with shapes ``(K,)``, ``(m, K)``, ``(m, m, K)``
    where ``K = 2**N``; unrequested orders are ``None``.
    """
    return _topology_derivatives(w.topology, w.lam, parametrization, order, cap)


def _topology_derivatives(topo, lam, parametrization, order, cap=DEFAULT_CAP):
    n = topo.n_leaves
    _check_cap(n, cap)
    half = np.arange(2 ** (n - 1))
    res = _derivatives(_plan_for_topology(topo), lam, parametrization, order, _all_characters(n, half))
    full = []
    for a in res:
        if a is None:
            full.append(None)
            continue
        b = np.empty(a.shape[:-1] + (2**n,))
        b[..., half] = a
        b[..., 2**n - 1 - half] = a
        full.append(b)
    return tuple(full)


def simulate_characters(w: Wald, count: int, seed=None) -> np.ndarray:
    """Draw ``count`` i.i.d. characters, shape ``(count, N)``.

    Each component is rooted at its lowest leaf, whose letter is a fair
    coin; every edge flips the letter with probability ``lam / 2``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lay = w.topology.rooted
    state = np.zeros((lay.n_vertices, count), dtype=np.int8)
    for r in lay.roots:
        state[r] = rng.integers(0, 2, size=count)
    for e in reversed(lay.postorder):
        flip = rng.random(count) < 0.5 * w.lam[e]
        state[lay.edge_child[e]] = state[lay.edge_parent[e]] ^ flip
    return state[: w.n_leaves].T.copy()


# ---------------------------------------------------------------------------
# Fisher information


@dataclass(frozen=True, eq=False)
class FisherMatrix:
    g: np.ndarray
    parametrization: str


def _fisher_from(p, dp):
    return np.einsum("ik,jk,k->ij", dp, dp, 1.0 / p)


def _fisher_derivative_from(p, dp, d2p):
    """``out[i, j, k] = d g_ij / dx_k``."""
    inv = 1.0 / p
    a = np.einsum("kis,js,s->ijk", d2p, dp, inv)
    b = np.einsum("is,kjs,s->ijk", dp, d2p, inv)
    c = np.einsum("is,js,ks,s->ijk", dp, dp, dp, inv**2)
    return a + b - c


def fisher_info(w: Wald, parametrization="length", cap: int = DEFAULT_CAP) -> FisherMatrix:
    """Fisher information ``g_ij = sum_s dp_i dp_j / p`` over the splits of ``w``."""
    if not w.topology.is_fully_resolved:
        raise DomainError("Fisher information needs a fully resolved tree")
    if np.any(w.lam <= 0) or np.any(w.lam >= 1):
        raise DomainError("Fisher information needs all weights strictly inside (0, 1)")
    p, dp, _ = distribution_derivatives(w, parametrization, 1, cap)
    return FisherMatrix(_fisher_from(p, dp), parametrization)


class TwoStateMetric(MetricProvider):
    """Fisher metric of the two-state model on one fully resolved orthant.

    Coordinates are edge lengths (``"length"``) or weights (``"lambda"``),
    ordered as the splits of ``topology``.  ``dg`` is analytic, from the
    second derivatives of the character probabilities.
    """

    def __init__(self, topology: Topology, parametrization="length", cap: int = DEFAULT_CAP,
                 length_max: float = 12.0):
        if not topology.is_fully_resolved:
            raise DomainError("metric provider needs a fully resolved topology")
        _check_cap(topology.n_leaves, cap)
        self.topology = topology
        self.cap = cap
        super().__init__(topology.n_splits, parametrization, topology.pendant_mask, length_max)

    def _lam(self, x):
        x = np.asarray(x, dtype=float)
        return -np.expm1(-x) if self.parametrization == "length" else x

    def g(self, x):
        p, dp, _ = _topology_derivatives(self.topology, self._lam(x), self.parametrization, 1, self.cap)
        return _fisher_from(p, dp)

    def dg(self, x):
        p, dp, d2p = _topology_derivatives(self.topology, self._lam(x), self.parametrization, 2, self.cap)
        return _fisher_derivative_from(p, dp, d2p)

    def g_and_dg(self, x):
        p, dp, d2p = _topology_derivatives(self.topology, self._lam(x), self.parametrization, 2, self.cap)
        return _fisher_from(p, dp), _fisher_derivative_from(p, dp, d2p)


# ---------------------------------------------------------------------------
# divergences and extrinsic metrics

F_SECOND_DERIVATIVE = {"kl": 1.0, "reverse_kl": 1.0, "js_squared": 0.25, "hellinger_squared": 0.5}


def _probs(p):
    return np.asarray(p.probs if isinstance(p, CharacterDistribution) else p, dtype=float)


def _xlogy(x, y):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0) / y), 0.0)


def f_divergence(p, q, f="kl") -> float:
    """``D_f(p; q) = sum_s q(s) f(p(s) / q(s))``.

    ``f`` is one of ``kl`` (``t log t``), ``reverse_kl`` (``-log t``),
    ``js_squared`` (squared Jensen-Shannon metric) or ``hellinger_squared``
    (``sum (sqrt p - sqrt q)^2``, no factor one half).
    """
    p = _probs(p)
    q = _probs(q)
    if p.shape != q.shape:
        raise DomainError("distributions differ in length")
    if np.any(q <= 0):
        raise DomainError("q must be strictly positive")
    if f == "kl":
        return float(np.sum(_xlogy(p, q)))
    if f == "reverse_kl":
        if np.any(p <= 0):
            raise DomainError("reverse KL needs p strictly positive")
        return float(np.sum(q * np.log(q / p)))
    if f == "js_squared":
        m = 0.5 * (p + q)
        return float(0.5 * np.sum(_xlogy(p, m)) + 0.5 * np.sum(_xlogy(q, m)))
    if f == "hellinger_squared":
        return float(np.sum((np.sqrt(p) - np.sqrt(q)) ** 2))
    raise DomainError(f"unknown f-divergence {f!r}")


def extrinsic_distance(w1: Wald, w2: Wald, metric="js", cap: int = DEFAULT_CAP) -> float:
    """Jensen-Shannon or Hellinger distance between character distributions."""
    if w1.n_leaves != w2.n_leaves:
        raise DomainError("walds have different leaf counts")
    p = full_distribution(w1, cap)
    q = full_distribution(w2, cap)
    if metric == "js":
        d2 = f_divergence(p, q, "js_squared")
    elif metric == "hellinger":
        d2 = f_divergence(p, q, "hellinger_squared")
    else:
        raise DomainError(f"unknown metric {metric!r}")
    return float(np.sqrt(max(d2, 0.0)))
