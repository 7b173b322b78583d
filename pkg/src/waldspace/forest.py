"""Phylogenetic forests, walds and their canonical split representation.

Leaves are labelled ``1..N``.  A split is stored as a Python ``int`` bit
mask (bit ``u - 1`` set for leaf ``u``) holding the side of the
bipartition that does *not* contain the lowest-numbered leaf of its
connected component, so every bipartition has exactly one encoding.

Two kinds of object live here:

``Forest``
    an explicit vertex/edge graph with per-edge weights, possibly
    containing zero-weight internal edges, unit-weight edges and
    degree-2 vertices.  This is what the Newick parser produces.
``Wald``
    the canonical representative of an equivalence class of forests:
    a ``Topology`` (compatible splits plus the partition of the leaves
    into connected components) and one weight in ``[0, 1)`` per split.

Weights and lengths are related by ``lam = 1 - exp(-length)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, InvalidForestError, NewickParseError

Split = int


# ---------------------------------------------------------------------------
# parametrizations


def lambda_from_length(length):
    """Weight ``1 - exp(-length)``; ``inf`` maps to 1."""
    length = np.asarray(length, dtype=float)
    if np.any(length < 0) or np.any(np.isnan(length)):
        raise DomainError("edge lengths must be non-negative")
    out = -np.expm1(-length)
    return float(out) if out.ndim == 0 else out


def length_from_lambda(lam):
    """Inverse of :func:`lambda_from_length`; 1 maps to ``inf``."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0) or np.any(lam > 1) or np.any(np.isnan(lam)):
        raise DomainError("weights must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        out = -np.log1p(-lam)
    return float(out) if out.ndim == 0 else out


def mu_from_lambda(lam):
    """Edge-product weight ``1 - lam = exp(-length)``."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0) or np.any(lam > 1):
        raise DomainError("weights must lie in [0, 1]")
    out = 1.0 - lam
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# bit-mask helpers


def leaf_mask(leaves) -> int:
    mask = 0
    for u in leaves:
        mask |= 1 << (u - 1)
    return mask


def mask_leaves(mask: int) -> list[int]:
    out = []
    u = 1
    while mask:
        if mask & 1:
            out.append(u)
        mask >>= 1
        u += 1
    return out


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def lowest_leaf(mask: int) -> int:
    return (mask & -mask).bit_length()


def canonical_split(side: int, component: int) -> Split:
    """Encode the bipartition ``side | component - side``."""
    other = component & ~side
    if side == 0 or other == 0 or side & ~component:
        raise DomainError("a split needs two non-empty sides inside its component")
    low = component & -component
    return other if side & low else side


def split_to_string(split: Split, component: int) -> str:
    a = mask_leaves(component & ~split)
    b = mask_leaves(split)
    return ",".join(map(str, a)) + "|" + ",".join(map(str, b))


def compatible(a: Split, b: Split, component: int) -> bool:
    """Whether two splits of the same component can coexist on one tree."""
    ca = component & ~a
    cb = component & ~b
    return not (a & b and a & cb and ca & b and ca & cb)


# ---------------------------------------------------------------------------
# topology


@dataclass(frozen=True)
class Topology:
    """Compatible split set together with the component partition.

    Splits are ordered pendant-first (by leaf) and then internal splits by
    increasing mask; construct through :meth:`make` to get that ordering.
    """

    n_leaves: int
    splits: tuple
    components: tuple

    def __post_init__(self):
        n = self.n_leaves
        if n < 1:
            raise DomainError("need at least one leaf")
        full = (1 << n) - 1
        seen = 0
        for comp in self.components:
            if comp == 0 or comp & seen:
                raise DomainError("components must partition the leaves")
            seen |= comp
        if seen != full:
            raise DomainError("components must partition the leaves")
        if len(set(self.splits)) != len(self.splits):
            raise DomainError("duplicate split")
        comps = [self._component_of(s) for s in self.splits]
        for i, a in enumerate(self.splits):
            for j in range(i):
                if comps[i] == comps[j] and not compatible(a, self.splits[j], comps[i]):
                    raise DomainError(
                        f"incompatible splits {split_to_string(a, comps[i])} and "
                        f"{split_to_string(self.splits[j], comps[j])}"
                    )
        if tuple(sorted(self.splits, key=self._order_key)) != self.splits:
            raise DomainError("splits are not in canonical order; use Topology.make")
        if len(self.splits) > max(2 * n - 3, 0) and n > 1:
            raise DomainError("too many splits")

    @classmethod
    def make(cls, n_leaves, splits, components=None):
        """Build a topology, sorting splits into canonical order.

        ``components`` defaults to a single component holding every leaf.
        """
        if components is None:
            components = ((1 << n_leaves) - 1,)
        components = tuple(sorted(components, key=lambda c: c & -c))
        probe = cls.__new__(cls)
        object.__setattr__(probe, "components", components)
        splits = tuple(sorted(set(splits), key=probe._order_key))
        return cls(n_leaves, splits, components)

    def _component_of(self, split: Split) -> int:
        for comp in self.components:
            if comp & split:
                if split & ~comp or split == comp:
                    raise DomainError("split straddles components")
                return comp
        raise DomainError("empty split")

    def _order_key(self, split: Split):
        comp = self._component_of(split)
        pend = self._pendant_leaf(split, comp)
        if pend is not None:
            return (0, pend, 0)
        return (1, 0, split)

    @staticmethod
    def _pendant_leaf(split, comp):
        cands = []
        if popcount(split) == 1:
            cands.append(lowest_leaf(split))
        rest = comp & ~split
        if popcount(rest) == 1:
            cands.append(lowest_leaf(rest))
        return min(cands) if cands else None

    # -- queries -----------------------------------------------------------

    @property
    def n_splits(self) -> int:
        return len(self.splits)

    def component_of(self, split: Split) -> int:
        return self._component_of(split)

    def is_pendant(self, split: Split) -> bool:
        return self._pendant_leaf(split, self._component_of(split)) is not None

    @cached_property
    def pendant_mask(self) -> np.ndarray:
        return np.array([self.is_pendant(s) for s in self.splits], dtype=bool)

    @property
    def is_fully_resolved(self) -> bool:
        return len(self.components) == 1 and self.n_splits == 2 * self.n_leaves - 3

    def index(self, split: Split) -> int:
        return self.splits.index(split)

    def __contains__(self, split):
        return split in self.splits

    def split_strings(self) -> list[str]:
        return [split_to_string(s, self._component_of(s)) for s in self.splits]

    @cached_property
    def split_matrices(self) -> np.ndarray:
        """Array ``(m, N, N)``; entry ``[e, u, v]`` is 1 when split ``e``
        lies on the path between leaves ``u + 1`` and ``v + 1``."""
        n = self.n_leaves
        out = np.zeros((self.n_splits, n, n))
        for e, s in enumerate(self.splits):
            comp = self._component_of(s)
            a = np.array([(s >> u) & 1 for u in range(n)], dtype=float)
            b = np.array([((comp & ~s) >> u) & 1 for u in range(n)], dtype=float)
            out[e] = np.outer(a, b) + np.outer(b, a)
        return out

    @cached_property
    def same_component(self) -> np.ndarray:
        n = self.n_leaves
        out = np.zeros((n, n), dtype=bool)
        for comp in self.components:
            idx = np.array(mask_leaves(comp)) - 1
            out[np.ix_(idx, idx)] = True
        return out

    @cached_property
    def rooted(self) -> "RootedLayout":
        return RootedLayout.from_topology(self)


@dataclass(frozen=True)
class RootedLayout:
    """Each component rooted at its lowest leaf, splits acting as clusters.

    Vertex ids: ``0..N-1`` are leaves (label minus one), internal vertices
    follow.  ``edge_parent[e]``/``edge_child[e]`` give the endpoints of the
    edge for split ``e``; ``roots`` lists the root leaf of each component;
    ``postorder`` lists the edges so that every edge appears after all edges
    below it.
    """

    n_vertices: int
    edge_parent: tuple
    edge_child: tuple
    roots: tuple
    postorder: tuple
    cluster: tuple  # leaf mask below each vertex (leaves: own bit)

    @classmethod
    def from_topology(cls, topo: Topology) -> "RootedLayout":
        n = topo.n_leaves
        vertex_of = {}
        nxt = n
        for s in topo.splits:
            if popcount(s) == 1:
                vertex_of[s] = lowest_leaf(s) - 1
            else:
                vertex_of[s] = nxt
                nxt += 1
        parent_edge = []
        child_edge = []
        for s in topo.splits:
            comp = topo.component_of(s)
            best = None
            for t in topo.splits:
                if t != s and t & s == s and topo.component_of(t) == comp:
                    if best is None or popcount(t) < popcount(best):
                        best = t
            parent = vertex_of[best] if best is not None else lowest_leaf(comp) - 1
            parent_edge.append(parent)
            child_edge.append(vertex_of[s])
        cluster = [0] * nxt
        for u in range(n):
            cluster[u] = 1 << u
        for s, v in vertex_of.items():
            cluster[v] = s
        depth = [popcount(s) for s in topo.splits]
        post = tuple(sorted(range(topo.n_splits), key=lambda e: depth[e]))
        roots = tuple(lowest_leaf(c) - 1 for c in topo.components)
        return cls(nxt, tuple(parent_edge), tuple(child_edge), roots, post, tuple(cluster))


# ---------------------------------------------------------------------------
# forests


@dataclass(frozen=True)
class Forest:
    """Explicit forest graph prior to canonicalization.

    ``edges`` holds ``(a, b, lam)`` triples; vertices ``0..N-1`` are the
    leaves ``1..N`` and ids from ``N`` upwards are unlabelled vertices.
    """

    n_leaves: int
    n_vertices: int
    edges: tuple

    def __post_init__(self):
        for a, b, lam in self.edges:
            if not (0 <= a < self.n_vertices and 0 <= b < self.n_vertices) or a == b:
                raise InvalidForestError(f"bad edge ({a}, {b})")
            if not 0.0 <= lam <= 1.0:
                raise InvalidForestError(f"edge weight {lam} outside [0, 1]")

    def adjacency(self):
        adj = {v: {} for v in range(self.n_vertices)}
        for a, b, lam in self.edges:
            if b in adj[a]:
                raise InvalidForestError("multiple edges between the same vertices")
            adj[a][b] = lam
            adj[b][a] = lam
        return adj

    def path_length_matrix(self) -> np.ndarray:
        """Leaf-to-leaf path lengths by graph traversal (``inf`` across
        components and across unit-weight edges)."""
        n = self.n_leaves
        adj = self.adjacency()
        out = np.full((n, n), np.inf)
        for u in range(n):
            dist = {u: 0.0}
            stack = [u]
            while stack:
                v = stack.pop()
                for x, lam in adj[v].items():
                    if x not in dist:
                        dist[x] = dist[v] + length_from_lambda(lam)
                        stack.append(x)
            for v, d in dist.items():
                if v < n:
                    out[u, v] = d
        return out


def canonicalize(forest: Forest) -> "Wald":
    """Reduce a forest to its canonical wald.

    Unit-weight edges are deleted, zero-weight internal edges contracted,
    and unlabelled vertices of degree 0 or 1 removed; each unlabelled
    degree-2 vertex is suppressed by merging its two edges into one of
    weight ``l1 + l2 - l1 * l2``.
    """
    n = forest.n_leaves
    adj = forest.adjacency()
    for v in range(n):
        if len(adj[v]) > 1:
            raise InvalidForestError(f"leaf {v + 1} has degree {len(adj[v])}")

    def drop_edge(a, b):
        del adj[a][b]
        del adj[b][a]

    changed = True
    while changed:
        changed = False
        for a in list(adj):
            for b, lam in list(adj[a].items()):
                if lam >= 1.0:
                    drop_edge(a, b)
                    changed = True
        for a in list(adj):
            if a not in adj or a < n:
                continue
            for b, lam in list(adj[a].items()):
                if b >= n and lam == 0.0:
                    for x, w in adj[b].items():
                        if x != a:
                            adj[a][x] = w
                            adj[x][a] = w
                            del adj[x][b]
                    del adj[a][b]
                    del adj[b]
                    changed = True
        for v in list(adj):
            if v < n or v not in adj:
                continue
            deg = len(adj[v])
            if deg == 0:
                del adj[v]
                changed = True
            elif deg == 1:
                (x,) = adj[v]
                del adj[x][v]
                del adj[v]
                changed = True
            elif deg == 2:
                (x, lx), (y, ly) = adj[v].items()
                merged = 1.0 - (1.0 - lx) * (1.0 - ly)
                del adj[x][v]
                del adj[y][v]
                del adj[v]
                adj[x][y] = merged
                adj[y][x] = merged
                changed = True

    # coincident leaves: leaves joined through zero-weight edges only
    root = {v: v for v in adj}

    def find(v):
        while root[v] != v:
            root[v] = root[root[v]]
            v = root[v]
        return v

    for a in adj:
        for b, lam in adj[a].items():
            if lam == 0.0:
                root[find(a)] = find(b)
    owner = {}
    for u in range(n):
        r = find(u)
        if r in owner:
            raise InvalidForestError(
                f"leaves {owner[r] + 1} and {u + 1} are coincident (all-zero path)"
            )
        owner[r] = u

    comp_of = {}
    components = []
    for start in adj:
        if start in comp_of:
            continue
        stack = [start]
        comp_of[start] = len(components)
        members = [start]
        while stack:
            v = stack.pop()
            for x in adj[v]:
                if x not in comp_of:
                    comp_of[x] = len(components)
                    members.append(x)
                    stack.append(x)
        components.append(leaf_mask(v + 1 for v in members if v < n))

    def side_mask(a, b):
        seen = {a, b}
        stack = [b]
        mask = 0
        while stack:
            v = stack.pop()
            if v < n:
                mask |= 1 << v
            for x in adj[v]:
                if x not in seen:
                    seen.add(x)
                    stack.append(x)
        return mask

    weights = {}
    for a in adj:
        for b, lam in adj[a].items():
            if a < b:
                comp = components[comp_of[a]]
                s = canonical_split(side_mask(a, b), comp)
                weights[s] = lam
    topo = Topology.make(n, weights.keys(), components)
    lam = np.array([weights[s] for s in topo.splits], dtype=float)
    return Wald(topo, lam)


# ---------------------------------------------------------------------------
# walds


@dataclass(frozen=True, eq=False)
class Wald:
    """Canonical wald: topology plus one weight in ``[0, 1)`` per split."""

    topology: Topology
    lam: np.ndarray

    def __post_init__(self):
        lam = np.array(self.lam, dtype=float).reshape(-1)
        if lam.shape != (self.topology.n_splits,):
            raise DomainError("need exactly one weight per split")
        if np.any(np.isnan(lam)) or np.any(lam < 0) or np.any(lam >= 1):
            raise InvalidForestError("canonical weights must lie in [0, 1)")
        internal = ~self.topology.pendant_mask
        if np.any(lam[internal] == 0):
            raise InvalidForestError("canonical walds have no zero-weight internal split")
        lam.flags.writeable = False
        object.__setattr__(self, "lam", lam)
        # condition 3: zero-weight pendants may not meet at one vertex
        lay = self.topology.rooted
        zero_at = {}
        for e, s in enumerate(self.topology.splits):
            if lam[e] == 0.0:
                for v in (lay.edge_parent[e], lay.edge_child[e]):
                    if v >= self.n_leaves:
                        if v in zero_at:
                            raise InvalidForestError("coincident leaves (all-zero path)")
                        zero_at[v] = e
                if lay.edge_parent[e] < self.n_leaves and lay.edge_child[e] < self.n_leaves:
                    raise InvalidForestError("coincident leaves (all-zero path)")

    @classmethod
    def from_splits(cls, n_leaves, splits, lam, components=None) -> "Wald":
        """Canonical wald from any compatible split set and weights.

        Zero internal and unit weights are allowed here; they are reduced
        exactly as :func:`canonicalize` would.
        """
        topo = Topology.make(n_leaves, splits, components)
        order = {s: i for i, s in enumerate(splits)}
        lam = np.asarray(lam, dtype=float)
        sorted_lam = np.array([lam[order[s]] for s in topo.splits])
        return canonicalize(_forest_from_layout(topo, sorted_lam))

    @classmethod
    def from_lengths(cls, n_leaves, splits, lengths, components=None) -> "Wald":
        return cls.from_splits(n_leaves, splits, lambda_from_length(np.asarray(lengths, float)), components)

    # -- views --------------------------------------------------------------

    @property
    def n_leaves(self) -> int:
        return self.topology.n_leaves

    @property
    def splits(self) -> tuple:
        return self.topology.splits

    @property
    def components(self) -> tuple:
        return self.topology.components

    @property
    def lengths(self) -> np.ndarray:
        return length_from_lambda(self.lam)

    @property
    def mu(self) -> np.ndarray:
        return 1.0 - self.lam

    def to_forest(self) -> Forest:
        return _forest_from_layout(self.topology, self.lam)

    def weight(self, split: Split) -> float:
        return float(self.lam[self.topology.index(split)])

    def allclose(self, other: "Wald", rtol=1e-12, atol=1e-12) -> bool:
        return self.topology == other.topology and np.allclose(self.lam, other.lam, rtol=rtol, atol=atol)

    def __eq__(self, other):
        if not isinstance(other, Wald):
            return NotImplemented
        return self.topology == other.topology and np.array_equal(self.lam, other.lam)

    def __hash__(self):
        return hash((self.topology, self.lam.tobytes()))

    def __repr__(self):
        return f"Wald({to_newick(self, 'lambda')!r}, weights=lambda)"


def _forest_from_layout(topo: Topology, lam) -> Forest:
    lay = topo.rooted
    edges = tuple(
        (lay.edge_parent[e], lay.edge_child[e], float(lam[e])) for e in range(topo.n_splits)
    )
    return Forest(topo.n_leaves, lay.n_vertices, edges)


def path_length_matrix(w: Wald) -> np.ndarray:
    """Leaf path lengths ``sum_e length_e * sigma_e``; ``inf`` across components."""
    topo = w.topology
    out = np.einsum("e,euv->uv", w.lengths, topo.split_matrices)
    out[~topo.same_component] = np.inf
    return out


def split_matrices(t: Topology) -> np.ndarray:
    return t.split_matrices.copy()


# ---------------------------------------------------------------------------
# topology moves


def _hanging_sides(topo: Topology, vertex: int, exclude: int) -> list[int]:
    """Leaf sets of the subtrees hanging off ``vertex``, except the one
    reached through neighbour ``exclude``."""
    lay = topo.rooted
    out = []
    for e in range(topo.n_splits):
        p, c = lay.edge_parent[e], lay.edge_child[e]
        if p == vertex and c != exclude:
            out.append(lay.cluster[c])
        elif c == vertex and p != exclude:
            comp = topo.component_of(topo.splits[e])
            out.append(comp & ~lay.cluster[vertex])
    return out


def nni_neighbors(t: Topology, split: Split) -> tuple[Topology, Topology]:
    """The two topologies one nearest-neighbour interchange across ``split``."""
    if split not in t.splits:
        raise DomainError("split not in topology")
    if t.is_pendant(split):
        raise DomainError("NNI needs an internal split")
    e = t.index(split)
    lay = t.rooted
    p, c = lay.edge_parent[e], lay.edge_child[e]
    sides_p = _hanging_sides(t, p, c)
    sides_c = _hanging_sides(t, c, p)
    if len(sides_p) != 2 or len(sides_c) != 2:
        raise DomainError("NNI needs both ends of the split to have degree 3")
    comp = t.component_of(split)
    rest = [s for s in t.splits if s != split]
    out = []
    for other in sides_c:
        new = canonical_split(sides_p[0] | other, comp)
        out.append(Topology.make(t.n_leaves, rest + [new], t.components))
    return out[0], out[1]


def nni_replacement(t: Topology, split: Split) -> list[tuple[Topology, Split]]:
    """NNI neighbours paired with the split that replaces ``split``."""
    out = []
    for nt in nni_neighbors(t, split):
        (new,) = set(nt.splits) - set(t.splits)
        out.append((nt, new))
    return out


# ---------------------------------------------------------------------------
# random generation


def random_topology(n_leaves: int, seed=None) -> Topology:
    """Uniform fully resolved unrooted topology by sequential leaf insertion."""
    if n_leaves < 2:
        raise DomainError("need at least two leaves")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if n_leaves == 2:
        return Topology.make(2, [0b10])
    return _topology_from_edges(n_leaves, _random_tree_edges(n_leaves, rng))


def _topology_from_edges(n_leaves, edges) -> Topology:
    adj = {}
    for a, b in edges:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    splits = []
    full = (1 << n_leaves) - 1
    for a, b in edges:
        seen = {a, b}
        stack = [b]
        mask = 0
        while stack:
            v = stack.pop()
            if v[0] == "leaf":
                mask |= 1 << v[1]
            for x in adj[v]:
                if x not in seen:
                    seen.add(x)
                    stack.append(x)
        splits.append(canonical_split(mask, full))
    return Topology.make(n_leaves, splits)


def _random_tree_edges(n_leaves, rng):
    leaf = lambda u: ("leaf", u)  # noqa: E731
    centre = ("node", 0)
    edges = [(leaf(0), centre), (leaf(1), centre), (leaf(2), centre)]
    for u in range(3, n_leaves):
        a, b = edges.pop(int(rng.integers(len(edges))))
        x = ("node", u)
        edges += [(a, x), (x, b), (x, leaf(u))]
    return edges


def random_wald(n_leaves: int, seed=None, topology_policy="resolved", lam_range=(0.05, 0.95)) -> Wald:
    """Random wald with a uniformly drawn fully resolved topology.

    ``topology_policy``:

    ``"resolved"``
        weights i.i.d. uniform on ``lam_range``.
    ``"boundary"``
        additionally sets internal weights to 0 and arbitrary weights to 1
        at random (and occasionally a pendant to 0 when allowed), giving
        unresolved trees and disconnected forests.
    """
    if n_leaves < 2:
        raise DomainError("need at least two leaves")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    topo = random_topology(n_leaves, rng)
    lo, hi = lam_range
    lam = rng.uniform(lo, hi, size=topo.n_splits)
    if topology_policy == "resolved":
        return Wald(topo, lam)
    if topology_policy != "boundary":
        raise DomainError(f"unknown topology policy {topology_policy!r}")
    pend = topo.pendant_mask
    for e in range(topo.n_splits):
        r = rng.uniform()
        if not pend[e] and r < 0.25:
            lam[e] = 0.0
        elif r > 0.85:
            lam[e] = 1.0
    for e in np.flatnonzero(pend):
        if rng.uniform() < 0.1 and lam[e] < 1.0:
            old = lam[e]
            lam[e] = 0.0
            try:
                canonicalize(_forest_from_layout(topo, lam))
            except InvalidForestError:
                lam[e] = old
    try:
        return canonicalize(_forest_from_layout(topo, lam))
    except InvalidForestError:
        # an all-zero internal path between zero pendants; undo the zeros
        lam[lam == 0.0] = lo
        return canonicalize(_forest_from_layout(topo, lam))


# ---------------------------------------------------------------------------
# Newick


_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|[+-]?(?:inf|Infinity)\b")
_LABEL = re.compile(r"\d+")


class _NewickReader:
    def __init__(self, text, weights):
        self.text = text
        self.pos = 0
        self.weights = weights
        self.edges = []  # (parent key, child key, lam)
        self.labels = {}
        self.n_nodes = 0

    def offset(self, pos=None):
        pos = self.pos if pos is None else pos
        return len(self.text[:pos].encode("utf-8"))

    def error(self, msg, pos=None):
        raise NewickParseError(msg, self.offset(pos))

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self):
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch):
        if self.peek() != ch:
            found = self.peek() or "end of input"
            self.error(f"expected {ch!r}, found {found!r}")
        self.pos += 1

    def weight(self):
        """Optional ``:number`` annotation; returns lam (0 when absent)."""
        if self.peek() != ":":
            return 0.0
        self.pos += 1
        self.skip_ws()
        start = self.pos
        m = _NUMBER.match(self.text, self.pos)
        if not m:
            self.error("expected a number after ':'")
        self.pos = m.end()
        tok = m.group(0)
        value = float(tok)
        if self.weights == "lambda":
            if not 0.0 <= value <= 1.0:
                self.error(f"weight {tok} outside [0, 1]", start)
            return value
        if value < 0 or math.isnan(value):
            self.error(f"negative length {tok}", start)
        return float(-np.expm1(-value))

    def subtree(self):
        ch = self.peek()
        if ch == "(":
            self.pos += 1
            key = ("node", self.n_nodes)
            self.n_nodes += 1
            children = [self.subtree()]
            while self.peek() == ",":
                self.pos += 1
                children.append(self.subtree())
            if len(children) < 2:
                if self.peek() == ")":
                    self.error("a group needs at least two children")
                self.error("expected ',' or ')'" if self.peek() else "unbalanced parenthesis")
            if self.peek() != ")":
                self.error("unbalanced parenthesis" if not self.peek() else "expected ',' or ')'")
            self.pos += 1
            for child, lam in children:
                self.edges.append((key, child, lam))
            return key, self.weight()
        m = _LABEL.match(self.text, self.pos)
        if not m:
            self.error(f"unexpected {ch!r}" if ch else "unexpected end of input")
        start = self.pos
        label = int(m.group(0))
        self.pos = m.end()
        if label < 1:
            self.error(f"leaf label {label} must be positive", start)
        if label in self.labels:
            self.error(f"duplicate leaf label {label}", start)
        self.labels[label] = start
        return ("leaf", label), self.weight()

    def forest(self):
        n_trees = 0
        while self.peek():
            self.subtree()
            n_trees += 1
            ch = self.peek()
            if ch == ";":
                self.pos += 1
            elif ch:
                self.error(f"unexpected {ch!r}")
        if n_trees == 0:
            self.error("empty input")


def parse_newick(text: str, weights: str = "length", n_leaves: int | None = None) -> Forest:
    """Parse one or more ``;``-separated Newick trees into a :class:`Forest`.

    Leaf names must be the integers ``1..N``.  Branch annotations are
    lengths (``inf`` allowed) unless ``weights="lambda"``; missing
    annotations mean length zero.  Several trees form a forest and a bare
    label is an isolated leaf.
    """
    if weights not in ("length", "lambda"):
        raise DomainError("weights must be 'length' or 'lambda'")
    reader = _NewickReader(text, weights)
    reader.forest()
    n = len(reader.labels) if n_leaves is None else n_leaves
    for label, pos in reader.labels.items():
        if label > n:
            raise NewickParseError(f"leaf label {label} outside 1..{n}", reader.offset(pos))
    if len(reader.labels) != n:
        missing = sorted(set(range(1, n + 1)) - set(reader.labels))
        raise NewickParseError(f"missing leaf labels {missing}")

    def vid(key):
        kind, k = key
        return k - 1 if kind == "leaf" else n + k

    edges = tuple((vid(a), vid(b), lam) for a, b, lam in reader.edges)
    return Forest(n, n + reader.n_nodes, edges)


def read_wald(text: str, weights: str = "length", n_leaves: int | None = None) -> Wald:
    """Parse and canonicalize in one step."""
    return canonicalize(parse_newick(text, weights, n_leaves))


def _fmt(x: float) -> str:
    if x == 0:
        return "0"
    if math.isinf(x):
        return "inf"
    r = repr(float(x))
    return r[:-2] if r.endswith(".0") else r


def to_newick(w: Wald, parametrization: str = "length") -> str:
    """Serialize a wald, one ``;``-terminated tree per component."""
    if parametrization not in ("length", "lambda"):
        raise DomainError("parametrization must be 'length' or 'lambda'")
    topo = w.topology
    lay = topo.rooted
    values = w.lengths if parametrization == "length" else w.lam
    children = {}
    edge_to = {}
    for e in range(topo.n_splits):
        children.setdefault(lay.edge_parent[e], []).append(lay.edge_child[e])
        edge_to[lay.edge_child[e]] = e

    def write(v):
        tail = ":" + _fmt(values[edge_to[v]])
        if v < w.n_leaves:
            return f"{v + 1}{tail}"
        inner = ",".join(write(c) for c in sorted(children[v], key=lambda c: lay.cluster[c] & -lay.cluster[c]))
        return f"({inner}){tail}"

    parts = []
    for r in lay.roots:
        kids = children.get(r, [])
        if not kids:
            parts.append(f"{r + 1};")
            continue
        (top,) = kids
        e = edge_to[top]
        if top < w.n_leaves:
            parts.append(f"({r + 1}:0,{top + 1}:{_fmt(values[e])});")
            continue
        sub = sorted(children[top], key=lambda c: lay.cluster[c] & -lay.cluster[c])
        inner = ",".join([f"{r + 1}:{_fmt(values[e])}"] + [write(c) for c in sub])
        parts.append(f"({inner});")
    return "".join(parts)


def all_topologies(n_leaves: int) -> list[Topology]:
    """Every fully resolved unrooted topology on ``n_leaves`` leaves, in a
    deterministic order (``(2N - 5)!!`` of them)."""
    if n_leaves < 2:
        raise DomainError("need at least two leaves")
    if n_leaves > 9:
        raise DomainError("exhaustive enumeration is limited to N <= 9")
    if n_leaves == 2:
        return [Topology.make(2, [0b10])]
    leaf = lambda u: ("leaf", u)  # noqa: E731
    trees = [[(leaf(0), ("node", 0)), (leaf(1), ("node", 0)), (leaf(2), ("node", 0))]]
    for u in range(3, n_leaves):
        grown = []
        for edges in trees:
            for k in range(len(edges)):
                a, b = edges[k]
                x = ("node", u)
                grown.append(edges[:k] + edges[k + 1 :] + [(a, x), (x, b), (x, leaf(u))])
        trees = grown
    return [_topology_from_edges(n_leaves, e) for e in trees]
