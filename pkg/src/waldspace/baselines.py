"""Baseline tree metrics and the metric-comparison report.

``bhv_distance`` follows the geodesic tree path construction: the shared
splits contribute a Euclidean term, and the remaining splits are arranged
into a support sequence that is refined by minimum-weight vertex covers
on the incompatibility graph (computed as a minimum s-t cut).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import networkx as nx
import numpy as np

from .errors import DomainError
from .forest import Wald, compatible, path_length_matrix
from .spd import covariance_of, spd_distance
from .twostate import DEFAULT_CAP, f_divergence, full_distribution

SUPPORTED_METRICS = ("bhv", "pathdiff", "cov", "js", "hellinger")


# ---------------------------------------------------------------------------
# BHV


def _split_lengths(w: Wald):
    if len(w.components) != 1:
        raise DomainError("BHV distance needs single-component trees")
    if np.any(w.lam >= 1):
        raise DomainError("BHV distance needs finite edge lengths")
    return dict(zip(w.splits, w.lengths)), w.components[0]


def _bhv_parts(w1: Wald, w2: Wald):
    """Shared-split squared term plus the two residual split dictionaries."""
    if w1.n_leaves != w2.n_leaves:
        raise DomainError("trees have different leaf counts")
    e1, comp = _split_lengths(w1)
    e2, _ = _split_lengths(w2)
    common = 0.0
    for s in set(e1) | set(e2):
        if s in e1 and s in e2:
            common += (e1[s] - e2[s]) ** 2
    a = {s: l for s, l in e1.items() if s not in e2}
    b = {s: l for s, l in e2.items() if s not in e1}
    # splits compatible with the whole other tree behave as shared splits of
    # length zero there
    for s in list(a):
        if all(compatible(s, t, comp) for t in b):
            common += a.pop(s) ** 2
    for s in list(b):
        if all(compatible(s, t, comp) for t in a):
            common += b.pop(s) ** 2
    return common, a, b, comp


def _norm(d, keys):
    return float(np.sqrt(sum(d[k] ** 2 for k in keys)))


def _min_cover(A, B, a, b, comp):
    """Minimum-weight vertex cover of the incompatibility graph between A and B
    with weights ``l^2 / |A|^2`` and ``l^2 / |B|^2``.  Returns
    ``(weight, C1, C2, D1, D2)`` where the cover is ``C1 + D2``."""
    na, nb = _norm(a, A) ** 2, _norm(b, B) ** 2
    G = nx.DiGraph()
    G.add_node("s")
    G.add_node("t")
    for s in A:
        G.add_edge("s", ("a", s), capacity=a[s] ** 2 / na)
    for t in B:
        G.add_edge(("b", t), "t", capacity=b[t] ** 2 / nb)
    for s in A:
        for t in B:
            if not compatible(s, t, comp):
                G.add_edge(("a", s), ("b", t))
    weight, (src, _) = nx.minimum_cut(G, "s", "t")
    C1 = [s for s in A if ("a", s) not in src]
    C2 = [s for s in A if ("a", s) in src]
    D1 = [t for t in B if ("b", t) not in src]
    D2 = [t for t in B if ("b", t) in src]
    return weight, C1, C2, D1, D2


def bhv_support(w1: Wald, w2: Wald):
    """Support sequence ``[(A_1, B_1), ...]`` of the BHV geodesic together with
    the shared-split squared term."""
    common, a, b, comp = _bhv_parts(w1, w2)
    if not a:
        return common, [], a, b
    seq = [(sorted(a), sorted(b))]
    changed = True
    while changed:
        changed = False
        for i, (A, B) in enumerate(seq):
            weight, C1, C2, D1, D2 = _min_cover(A, B, a, b, comp)
            if weight < 1 - 1e-12 and C1 and C2 and D1 and D2:
                seq[i : i + 1] = [(C1, D1), (C2, D2)]
                changed = True
                break
    return common, seq, a, b


def bhv_distance(w1: Wald, w2: Wald) -> float:
    """BHV geodesic distance with the pendant edges as a Euclidean factor."""
    common, seq, a, b = bhv_support(w1, w2)
    total = common + sum((_norm(a, A) + _norm(b, B)) ** 2 for A, B in seq)
    return float(np.sqrt(total))


def cone_path_bound(w1: Wald, w2: Wald) -> float:
    """Length of the path through the star tree (pendants moved straight)."""
    e1, _ = _split_lengths(w1)
    e2, _ = _split_lengths(w2)
    pend1 = {s: l for s, l in e1.items() if w1.topology.is_pendant(s)}
    pend2 = {s: l for s, l in e2.items() if w2.topology.is_pendant(s)}
    pend = sum((pend1.get(s, 0.0) - pend2.get(s, 0.0)) ** 2 for s in set(pend1) | set(pend2))
    i1 = _norm(e1, [s for s in e1 if s not in pend1])
    i2 = _norm(e2, [s for s in e2 if s not in pend2])
    return float(np.sqrt((i1 + i2) ** 2 + pend))


# ---------------------------------------------------------------------------
# path difference


def path_difference_distance(w1: Wald, w2: Wald) -> float:
    """``sqrt(sum_{u<v} (l_uv - l'_uv)^2)`` over unordered leaf pairs."""
    if w1.n_leaves != w2.n_leaves:
        raise DomainError("trees have different leaf counts")
    P1, P2 = path_length_matrix(w1), path_length_matrix(w2)
    iu = np.triu_indices(w1.n_leaves, 1)
    if not (np.all(np.isfinite(P1[iu])) and np.all(np.isfinite(P2[iu]))):
        raise DomainError("path difference needs finite path lengths")
    return float(np.sqrt(np.sum((P1[iu] - P2[iu]) ** 2)))


# ---------------------------------------------------------------------------
# comparison report


@dataclass(frozen=True, eq=False)
class DistanceMatrixReport:
    labels: list
    matrices: dict
    correlations: dict = field(default_factory=dict)
    notices: list = field(default_factory=list)

    def correlation(self, m1: str, m2: str) -> float:
        return self.correlations[(m1, m2)] if (m1, m2) in self.correlations else self.correlations[(m2, m1)]


def _pearson(x, y):
    if x.size < 2 or np.std(x) == 0 or np.std(y) == 0 or not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        return float("nan")
    return float(np.corrcoef(x, y)[0, 1])


def compare_metrics(trees, metrics=("bhv", "pathdiff", "cov", "js"), labels=None,
                    cap: int = DEFAULT_CAP) -> DistanceMatrixReport:
    """Pairwise distance matrices for each metric plus Pearson correlations of
    their upper triangles.

    Pairs a metric cannot handle (for example BHV on a forest) are stored as
    ``nan`` and listed in ``notices``.  ``"tropical"`` is accepted but not
    computed.
    """
    trees = list(trees)
    if not trees:
        raise DomainError("need at least one tree")
    n = trees[0].n_leaves
    if any(t.n_leaves != n for t in trees):
        raise DomainError("all trees need the same leaf count")
    labels = list(labels) if labels is not None else [str(i) for i in range(len(trees))]
    notices = []
    wanted = []
    for m in metrics:
        if m == "tropical":
            notices.append("tropical metric is not implemented; skipped")
        elif m not in SUPPORTED_METRICS:
            raise DomainError(f"unknown metric {m!r}")
        else:
            wanted.append(m)
    if ("js" in wanted or "hellinger" in wanted) and n > cap:
        raise DomainError(f"N={n} exceeds the distribution cap {cap}")

    cache = {}
    if "cov" in wanted:
        cache["cov"] = [covariance_of(t) for t in trees]
    if "js" in wanted or "hellinger" in wanted:
        cache["dist"] = [full_distribution(t, cap) for t in trees]

    def value(metric, i, j):
        if metric == "bhv":
            return bhv_distance(trees[i], trees[j])
        if metric == "pathdiff":
            return path_difference_distance(trees[i], trees[j])
        if metric == "cov":
            return spd_distance(cache["cov"][i], cache["cov"][j])
        f = "js_squared" if metric == "js" else "hellinger_squared"
        return float(np.sqrt(max(f_divergence(cache["dist"][i], cache["dist"][j], f), 0.0)))

    matrices = {}
    k = len(trees)
    for metric in wanted:
        M = np.zeros((k, k))
        for i, j in combinations(range(k), 2):
            try:
                M[i, j] = M[j, i] = value(metric, i, j)
            except DomainError as exc:
                M[i, j] = M[j, i] = np.nan
                notices.append(f"{metric}({labels[i]}, {labels[j]}): {exc}")
        matrices[metric] = M
    iu = np.triu_indices(k, 1)
    corr = {}
    for m1, m2 in combinations(wanted, 2):
        corr[(m1, m2)] = _pearson(matrices[m1][iu], matrices[m2][iu])
    return DistanceMatrixReport(labels, matrices, corr, notices)


__all__ = [
    "bhv_distance",
    "bhv_support",
    "cone_path_bound",
    "path_difference_distance",
    "compare_metrics",
    "DistanceMatrixReport",
]
