"""Projection from SPD matrices onto wald space and approximate geodesics.

Projection minimizes ``d(S0, S_w)^2`` over edge lengths by gradient
descent with Barzilai-Borwein steps.  The optimization always runs on a
*resolved representation*: a fully resolved topology on all leaves with a
length per split, where zero-length internal splits stand for
unresolved vertices and infinite lengths for the cuts between components.
Infinite lengths are held fixed.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidForestError, NumericalError
from .forest import (
    Topology,
    Wald,
    all_topologies,
    canonical_split,
    length_from_lambda,
    nni_replacement,
    read_wald,
)
from .spd import (
    _apply,
    _grad_lengths,
    _sym_eig,
    covariance_from_lengths,
    covariance_of,
    spd_distance,
    spd_geodesic,
)

ALPHA0 = 1e-2
PENDANT_FLOOR = 1e-8
OSCILLATION_GUARD = 10
REFLECT = True


# ---------------------------------------------------------------------------
# resolved representation


@dataclass(frozen=True, eq=False)
class Resolved:
    """Fully resolved topology with lengths in ``[0, inf]``."""

    topology: Topology
    lengths: np.ndarray

    @property
    def fixed(self) -> np.ndarray:
        return np.isinf(self.lengths)

    def to_wald(self) -> Wald:
        lam = -np.expm1(-self.lengths)
        return Wald.from_splits(self.topology.n_leaves, self.topology.splits, lam)

    def covariance(self) -> np.ndarray:
        return covariance_from_lengths(self.topology, self.lengths)


def resolve(w: Wald) -> Resolved:
    """Embed a wald in a maximal orthant.

    Components are joined by infinite-length edges, attached at an internal
    vertex when the component has one and otherwise at its single edge
    (subdivided) or its single leaf.  Three or more components meet at a
    fresh hub vertex.  Vertices of degree above three are
    then split with zero-length internal edges.
    """
    n = w.n_leaves
    if w.topology.is_fully_resolved:
        return Resolved(w.topology, w.lengths.copy())
    lay = w.topology.rooted
    adj = {v: {} for v in range(lay.n_vertices)}
    for e in range(w.topology.n_splits):
        a, b, lam = lay.edge_parent[e], lay.edge_child[e], float(w.lam[e])
        adj[a][b] = adj[b][a] = lam
    nxt = lay.n_vertices

    def anchor(comp):
        nonlocal nxt
        leaves = [u - 1 for u in range(1, n + 1) if comp >> (u - 1) & 1]
        if len(leaves) == 1:
            return leaves[0]
        inner = sorted({x for u in leaves for x in _reach(adj, u)} - set(range(n)))
        if inner:
            return inner[0]
        a, b = leaves
        lam = adj[a].pop(b)
        del adj[b][a]
        y = nxt
        nxt += 1
        adj[y] = {a: lam, b: 0.0}
        adj[a][y] = lam
        adj[b][y] = 0.0
        return y

    anchors = [anchor(c) for c in w.topology.components]
    if len(anchors) == 2:
        a, b = anchors
        adj[a][b] = adj[b][a] = 1.0
    elif len(anchors) > 2:
        # a fresh hub keeps leaves at degree one; polytomy splitting below
        # resolves it
        hub = nxt
        nxt += 1
        adj[hub] = {}
        for x in anchors:
            adj[hub][x] = adj[x][hub] = 1.0

    # split polytomies
    changed = True
    while changed:
        changed = False
        for v in list(adj):
            if len(adj[v]) > 3:
                nbrs = sorted(adj[v])
                y = nxt
                nxt += 1
                adj[y] = {}
                for x in nbrs[2:]:
                    lam = adj[v].pop(x)
                    del adj[x][v]
                    adj[y][x] = adj[x][y] = lam
                adj[v][y] = adj[y][v] = 0.0
                changed = True

    full = (1 << n) - 1
    splits, lengths = [], []
    for a in adj:
        for b, lam in adj[a].items():
            if a < b:
                side = 0
                for u in _reach(adj, b, avoid=a):
                    if u < n:
                        side |= 1 << u
                splits.append(canonical_split(side, full))
                lengths.append(float(length_from_lambda(lam)))
    topo = Topology.make(n, splits)
    order = {s: i for i, s in enumerate(splits)}
    ell = np.array([lengths[order[s]] for s in topo.splits])
    if not topo.is_fully_resolved:
        raise InvalidForestError("could not resolve wald into a maximal orthant")
    return Resolved(topo, ell)


def _reach(adj, start, avoid=None):
    seen = {start} if avoid is None else {start, avoid}
    stack = [start]
    out = [start]
    while stack:
        v = stack.pop()
        for x in adj[v]:
            if x not in seen:
                seen.add(x)
                out.append(x)
                stack.append(x)
    return out


# ---------------------------------------------------------------------------
# projection


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    """Outcome of a projection.

    ``representation`` is the resolved point the descent ended on and can
    seed a follow-up projection.
    """

    wald: Wald
    distance: float
    iterations: int
    orthant_path: list
    converged: bool
    representation: Resolved = field(repr=False)


class _Target:
    def __init__(self, S0):
        w0, V0 = _sym_eig(S0)
        self.S0 = np.asarray(S0, dtype=float)
        self.half = _apply(w0, V0, np.sqrt(w0))
        self.ihalf = _apply(w0, V0, 1.0 / np.sqrt(w0))

    def grad(self, topo, ell):
        g, d2 = _grad_lengths(self.half, self.ihalf, topo, ell)
        g[np.isinf(ell)] = 0.0
        return g, d2


@dataclass
class _Descent:
    best: np.ndarray
    best_d2: float
    iterations: int
    status: str  # converged | negative | max_iter
    overshoot: np.ndarray | None


def _descend(target, topo, ell, max_iter, tol):
    ell = np.array(ell, dtype=float)
    pend = topo.pendant_mask
    free = ~np.isinf(ell)
    ell[pend & free] = np.maximum(ell[pend & free], PENDANT_FLOOR)
    g, d2 = target.grad(topo, ell)
    best, best_d2 = ell.copy(), d2
    alpha = ALPHA0
    for it in range(max_iter):
        if np.linalg.norm(g) < tol:
            return _Descent(ell, d2, it, "converged", None)
        new = ell.copy()
        new[free] = ell[free] - alpha * g[free]
        low = pend & free & (new < PENDANT_FLOOR)
        new[low] = PENDANT_FLOOR
        if np.any(new[~pend] < 0):
            return _Descent(best, best_d2, it + 1, "negative", new)
        gn, d2n = target.grad(topo, new)
        s = np.zeros_like(ell)
        s[free] = new[free] - ell[free]
        y = gn - g
        sy, yy = float(s @ y), float(y @ y)
        alpha = sy / yy if sy > 0 and yy > 0 else ALPHA0
        ell, g, d2 = new, gn, d2n
        if d2 < best_d2:
            best, best_d2 = ell.copy(), d2
    status = "converged" if np.linalg.norm(g) < tol else "max_iter"
    if status == "converged":
        best, best_d2 = ell, d2
    return _Descent(best, best_d2, max_iter, status, None)


def _result(topo, ell, d2, iterations, path, converged, target=None):
    rep = Resolved(topo, ell.copy())
    wald = rep.to_wald()
    dist = spd_distance(target.S0, covariance_of(wald)) if target is not None else float(np.sqrt(max(d2, 0.0)))
    return ProjectionResult(wald, dist, iterations, path, converged, rep)


def project_within_orthant(S0, t: Topology, ell_init, max_iter: int = 2000, tol: float = 1e-8) -> ProjectionResult:
    """Project ``S0`` onto the closed orthant of topology ``t``.

    Gradient descent on the edge lengths with Barzilai-Borwein steps
    ``alpha = (ds . dg) / (dg . dg)``; the first step and any step with a
    non-positive curvature estimate use ``alpha = 1e-2``.  Pendant lengths
    are floored at ``1e-8``.  The descent halts (``converged=False``) when
    an internal length would become negative and returns the best interior
    iterate seen.
    """
    if not t.is_fully_resolved:
        raise DomainError("projection needs a fully resolved topology")
    ell = np.asarray(ell_init, dtype=float)
    if ell.shape != (t.n_splits,) or np.any(ell < 0) or np.any(np.isnan(ell)):
        raise DomainError("initial lengths must be non-negative, one per split")
    target = _Target(S0)
    run = _descend(target, t, ell, max_iter, tol)
    return _result(t, run.best, run.best_d2, run.iterations, [t], run.status == "converged", target)


def project_global(S0, w_init, max_iter: int = 2000, tol: float = 1e-8,
                   oscillation_guard: int = OSCILLATION_GUARD) -> ProjectionResult:
    """Projection that can cross codimension-1 boundaries.

    When a step makes an internal length negative, the most negative split
    is replaced: the two nearest-neighbour-interchange topologies (and, as
    a safeguard, the current one) are evaluated at the absolute values of
    the overshooting lengths, and the descent continues from whichever is
    closest to ``S0``.  Crossing the same boundary more than
    ``oscillation_guard`` times stops the search with the best iterate.

    ``w_init`` is a :class:`Wald` or a :class:`Resolved` seed.
    """
    rep = w_init if isinstance(w_init, Resolved) else resolve(w_init)
    target = _Target(S0)
    topo, ell = rep.topology, rep.lengths.copy()
    path = [topo]
    crossings = Counter()
    used = 0
    best = None
    while True:
        run = _descend(target, topo, ell, max_iter - used, tol)
        used += run.iterations
        if best is None or run.best_d2 < best[2]:
            best = (topo, run.best.copy(), run.best_d2)
        if run.status != "negative":
            converged = run.status == "converged"
            if converged:
                best = (topo, run.best.copy(), run.best_d2)
            break
        if used >= max_iter:
            converged = False
            break
        new = run.overshoot
        internal = np.flatnonzero(~topo.pendant_mask)
        e = int(internal[np.argmin(new[internal])])
        split = topo.splits[e]
        flipped = np.abs(new)
        candidates = [(topo, flipped)] if REFLECT else []
        for nt, repl in nni_replacement(topo, split):
            lookup = dict(zip(topo.splits, flipped))
            lookup[repl] = lookup.pop(split)
            candidates.append((nt, np.array([lookup[s] for s in nt.splits])))
        dists = [target.grad(t, l)[1] for t, l in candidates]
        k = int(np.argmin(dists))
        nt, nl = candidates[k]
        if nt != topo:
            boundary = frozenset(set(topo.splits) - {split})
            crossings[boundary] += 1
            path.append(nt)
            if crossings[boundary] > oscillation_guard:
                converged = False
                break
        topo, ell = nt, nl
    return _result(best[0], best[1], best[2], used, path, converged, target)


def project_exhaustive(S0, n_leaves: int | None = None, ell_init=None, max_iter: int = 2000,
                       tol: float = 1e-8) -> ProjectionResult:
    """Run the within-orthant projection in every maximal orthant and keep the
    closest result.  ``ell_init`` maps split to starting length (default 0.1
    internal, 0.1 pendant)."""
    S0 = np.asarray(S0, dtype=float)
    n = S0.shape[0] if n_leaves is None else n_leaves
    best = None
    total = 0
    for t in all_topologies(n):
        init = np.full(t.n_splits, 0.1)
        if ell_init is not None:
            init = np.array([ell_init.get(s, 0.1) for s in t.splits])
        r = project_within_orthant(S0, t, init, max_iter, tol)
        total += r.iterations
        if best is None or r.distance < best.distance:
            best = r
    return ProjectionResult(best.wald, best.distance, total, best.orthant_path, best.converged, best.representation)


# ---------------------------------------------------------------------------
# approximate geodesics


@dataclass(frozen=True, eq=False)
class ApproxGeodesic:
    points: list
    segment_lengths: np.ndarray
    total_length: float


def _assemble(points):
    covs = [covariance_of(w) for w in points]
    seg = np.array([spd_distance(a, b) for a, b in zip(covs[:-1], covs[1:])])
    return ApproxGeodesic(points, seg, float(seg.sum()))


def _project_step(S, rep, index, **kw):
    try:
        return project_global(S, rep, **kw)
    except (NumericalError, DomainError) as exc:
        raise type(exc)(f"projection failed at step {index}: {exc}") from exc


def recursive_geodesic(w1: Wald, w2: Wald, k: int = 32, **kw) -> ApproxGeodesic:
    """Approximate geodesic ``G_0 = w1, ..., G_k = w2``.

    Step ``i`` moves a fraction ``1 / (k - i + 1)`` along the SPD geodesic
    from ``S_{G_{i-1}}`` to ``S_{w2}`` and projects, seeded at ``G_{i-1}``.
    """
    if w1.n_leaves != w2.n_leaves:
        raise DomainError("walds have different leaf counts")
    if k < 1:
        raise DomainError("k must be at least 1")
    S2 = covariance_of(w2)
    points = [w1]
    rep = resolve(w1)
    for i in range(1, k):
        S = spd_geodesic(covariance_of(points[-1]), S2, 1.0 / (k - i + 1))
        r = _project_step(S, rep, i, **kw)
        points.append(r.wald)
        rep = r.representation
    points.append(w2)
    return _assemble(points)


def symmetrized_geodesic(w1: Wald, w2: Wald, k: int = 32, **kw) -> ApproxGeodesic:
    """Approximate geodesic grown from both ends.

    Step ``i`` takes the points at fractions ``1 / (k - i + 1)`` from each
    end of the SPD geodesic between ``S_{G_{i-1}}`` and ``S_{H_{i-1}}`` and
    projects them, seeded at ``G_{i-1}`` and ``H_{i-1}``.  The output is
    ``G_0, ..., G_{k-1}, H_{k-1}, ..., H_0`` (``2k`` points).  Each side is
    computed from its own end, so swapping the inputs reverses the output
    exactly.
    """
    if w1.n_leaves != w2.n_leaves:
        raise DomainError("walds have different leaf counts")
    if k < 1:
        raise DomainError("k must be at least 1")
    G, H = [w1], [w2]
    rg, rh = resolve(w1), resolve(w2)
    for i in range(1, k):
        t = 1.0 / (k - i + 1)
        SG, SH = covariance_of(G[-1]), covariance_of(H[-1])
        R = spd_geodesic(SG, SH, t)
        S = spd_geodesic(SH, SG, t)
        a = _project_step(R, rg, i, **kw)
        b = _project_step(S, rh, i, **kw)
        G.append(a.wald)
        H.append(b.wald)
        rg, rh = a.representation, b.representation
    return _assemble(G + H[::-1])


def approx_intrinsic_distance(g: ApproxGeodesic) -> float:
    return float(np.sum(g.segment_lengths))


# ---------------------------------------------------------------------------
# distance to the star stratum


def cherry_tree(lam0: float) -> Wald:
    """Four-leaf tree ``((1,2),(3,4))`` with every weight equal to ``lam0``."""
    return read_wald(f"((1:{lam0!r},2:{lam0!r}):{lam0!r},(3:{lam0!r},4:{lam0!r}))", weights="lambda")


def star_tree(n_leaves: int, lam: float) -> Wald:
    full = (1 << n_leaves) - 1
    splits = [canonical_split(1 << u, full) for u in range(n_leaves)]
    return Wald.from_splits(n_leaves, splits, np.full(n_leaves, lam))


def star_distance_profile(lam0: float, lam_grid, k: int = 32, **kw) -> list[tuple[float, float]]:
    """Approximate intrinsic distance from the cherry tree with weights
    ``lam0`` to the four-leaf star with pendant weight ``lam``, per grid value."""
    if not 0 < lam0 <= 1:
        raise DomainError("lam0 must lie in (0, 1]")
    grid = np.asarray(lam_grid, dtype=float)
    if np.any(grid <= 0) or np.any(grid >= 1):
        raise DomainError("star weights must lie strictly inside (0, 1)")
    G = cherry_tree(lam0)
    out = []
    for lam in grid:
        path = symmetrized_geodesic(G, star_tree(4, float(lam)), k, **kw)
        out.append((float(lam), approx_intrinsic_distance(path)))
    return out
