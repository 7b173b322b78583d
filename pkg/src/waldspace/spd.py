"""Gaussian embedding of walds into symmetric positive-definite matrices.

A wald maps to the covariance ``S_uv = exp(-l_uv)`` of a zero-mean
Gaussian, where ``l_uv`` is the leaf path length (infinite across
components).  The ambient space carries the affine-invariant metric

    d(S1, S2)^2 = 1/2 tr log(S1^{-1/2} S2 S1^{-1/2})^2,

which is the Fisher geometry of zero-mean Gaussians.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, DomainError, NotPositiveDefiniteError
from .forest import Forest, Topology, Wald
from .riemann import MetricProvider

EIG_FLOOR = 1e-12
SYM_TOL = 1e-12


# ---------------------------------------------------------------------------
# matrix functions


def _sym_eig(S, require_pd=True):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DomainError("expected a square matrix")
    if not np.all(np.isfinite(S)):
        raise NotPositiveDefiniteError("matrix has non-finite entries")
    scale = max(1.0, float(np.abs(S).max()))
    if np.abs(S - S.T).max() > SYM_TOL * scale:
        raise DomainError("matrix is not symmetric")
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    if require_pd and w.min() <= EIG_FLOOR:
        raise NotPositiveDefiniteError(f"matrix is not positive definite (min eigenvalue {w.min():.3g})")
    return w, V


def _apply(w, V, fw):
    return (V * fw) @ V.T


def spd_sqrt(S) -> np.ndarray:
    w, V = _sym_eig(S)
    return _apply(w, V, np.sqrt(w))


def spd_invsqrt(S) -> np.ndarray:
    w, V = _sym_eig(S)
    return _apply(w, V, 1.0 / np.sqrt(w))


def spd_log(S) -> np.ndarray:
    w, V = _sym_eig(S)
    return _apply(w, V, np.log(w))


def spd_exp(S) -> np.ndarray:
    """Matrix exponential of a symmetric matrix."""
    w, V = _sym_eig(S, require_pd=False)
    return _apply(w, V, np.exp(w))


def check_spd(S) -> np.ndarray:
    _sym_eig(S)
    return np.asarray(S, dtype=float)


def spd_distance(S1, S2) -> float:
    """Affine-invariant distance ``sqrt(1/2 sum log^2 eig(S1^{-1} S2))``."""
    _sym_eig(S1)
    _sym_eig(S2)
    w = scipy.linalg.eigvalsh(np.asarray(S2, float), np.asarray(S1, float))
    return float(np.sqrt(0.5 * np.sum(np.log(w) ** 2)))


def spd_geodesic(S1, S2, t: float) -> np.ndarray:
    """Point at proportion ``t`` along the geodesic from ``S1`` to ``S2``."""
    w1, V1 = _sym_eig(S1)
    _sym_eig(S2)
    r = _apply(w1, V1, np.sqrt(w1))
    ri = _apply(w1, V1, 1.0 / np.sqrt(w1))
    A = ri @ np.asarray(S2, float) @ ri
    wa, Va = np.linalg.eigh(0.5 * (A + A.T))
    out = r @ _apply(wa, Va, wa**t) @ r
    return 0.5 * (out + out.T)


# ---------------------------------------------------------------------------
# covariance embedding


def covariance_from_weights(topo: Topology, lam) -> np.ndarray:
    """``S_uv = prod_e (1 - lam_e)^{sigma^e_uv}``, zero across components."""
    mu = 1.0 - np.asarray(lam, dtype=float)
    sig = topo.split_matrices
    S = np.prod(np.where(sig > 0, mu[:, None, None], 1.0), axis=0)
    S[~topo.same_component] = 0.0
    np.fill_diagonal(S, 1.0)
    return S


def covariance_from_lengths(topo: Topology, lengths) -> np.ndarray:
    return covariance_from_weights(topo, -np.expm1(-np.asarray(lengths, dtype=float)))


def covariance_of(w) -> np.ndarray:
    """Covariance matrix of a :class:`Wald` (or of a raw :class:`Forest`)."""
    if isinstance(w, Forest):
        with np.errstate(over="ignore"):
            S = np.exp(-w.path_length_matrix())
        np.fill_diagonal(S, 1.0)
        return S
    return covariance_from_weights(w.topology, w.lam)


def extrinsic_cov_distance(w1, w2) -> float:
    if w1.n_leaves != w2.n_leaves:
        raise DomainError("walds have different leaf counts")
    return spd_distance(covariance_of(w1), covariance_of(w2))


# ---------------------------------------------------------------------------
# trace-form metric


def _covariance_derivatives(topo, x, parametrization, order):
    """``S``, ``dS[i]`` and (optionally) ``d2S[i, k]`` in the given coordinates."""
    sig = topo.split_matrices
    m, n, _ = sig.shape
    x = np.asarray(x, dtype=float)
    lam = -np.expm1(-x) if parametrization == "length" else x
    S = covariance_from_weights(topo, lam)
    if parametrization == "length":
        dS = -S[None] * sig
        d2S = S[None, None] * sig[:, None] * sig[None, :] if order >= 2 else None
        return S, dS, d2S
    mu = 1.0 - lam
    factors = np.where(sig > 0, mu[:, None, None], 1.0)
    # product over all edges except i (and k)
    dS = np.empty((m, n, n))
    for i in range(m):
        dS[i] = -sig[i] * np.prod(np.delete(factors, i, axis=0), axis=0)
    d2S = None
    if order >= 2:
        d2S = np.zeros((m, m, n, n))
        for i in range(m):
            for k in range(i + 1, m):
                rest = np.prod(np.delete(factors, [i, k], axis=0), axis=0)
                d2S[i, k] = d2S[k, i] = sig[i] * sig[k] * rest
    same = topo.same_component
    dS[:, ~same] = 0.0
    if d2S is not None:
        d2S[:, :, ~same] = 0.0
    return S, dS, d2S


class GaussianMetric(MetricProvider):
    """Pull-back of the affine-invariant metric to one fully resolved orthant.

    ``g_ij = 1/2 tr(S^{-1} dS_i S^{-1} dS_j)`` with analytic ``dg``.  In
    weight coordinates the metric stays finite up to weight 1.
    """

    def __init__(self, topology: Topology, parametrization="length", length_max: float = 12.0):
        if not topology.is_fully_resolved:
            raise DomainError("metric provider needs a fully resolved topology")
        self.topology = topology
        super().__init__(topology.n_splits, parametrization, topology.pendant_mask, length_max)

    def _parts(self, x, order):
        S, dS, d2S = _covariance_derivatives(self.topology, x, self.parametrization, order)
        B = np.linalg.solve(S[None], dS)
        return S, B, d2S

    def g(self, x):
        _, B, _ = self._parts(x, 1)
        return 0.5 * np.einsum("iab,jba->ij", B, B)

    def g_and_dg(self, x):
        S, B, d2S = self._parts(x, 2)
        g = 0.5 * np.einsum("iab,jba->ij", B, B)
        Sinv = np.linalg.inv(S)
        # d_k (S^{-1} dS_i) = -B_k B_i + S^{-1} d2S_ik
        C = -np.einsum("kab,ibc->kiac", B, B) + np.einsum("ab,kibc->kiac", Sinv, d2S)
        T = np.einsum("kiab,jba->kij", C, B)
        dg = 0.5 * (T + T.transpose(0, 2, 1))
        return g, dg.transpose(1, 2, 0)

    def dg(self, x):
        return self.g_and_dg(x)[1]

    def covariance(self, x):
        return _covariance_derivatives(self.topology, x, self.parametrization, 0)[0]


def gaussian_metric_provider(t: Topology, parametrization="length", length_max: float = 12.0) -> GaussianMetric:
    return GaussianMetric(t, parametrization, length_max)


# ---------------------------------------------------------------------------
# gradient of the squared distance


def _grad_lengths(S0_half, S0_ihalf, topo, lengths):
    S = covariance_from_lengths(topo, lengths)
    A = S0_ihalf @ S @ S0_ihalf
    L = spd_log(0.5 * (A + A.T))
    # d/dl_i of S is -S o sigma^i
    dS = -S[None] * topo.split_matrices
    M = S0_half @ np.linalg.solve(S, dS) @ S0_ihalf  # (m, n, n)
    grad = np.einsum("ab,iba->i", L, M)
    return grad, float(0.5 * np.sum(np.linalg.eigvalsh(L) ** 2))


def grad_sq_dist(S0, w: Wald, parametrization="length") -> np.ndarray:
    """Gradient of ``d(S0, S_w)^2`` with respect to the edge coordinates of ``w``.

    ``d_i d^2 = tr(log(S0^{-1/2} S S0^{-1/2}) S0^{1/2} S^{-1} (d_i S) S0^{-1/2})``
    with ``d_i S = -S o sigma^i`` in length coordinates; the weight-coordinate
    gradient is the length gradient times ``1 / (1 - lam)``.
    """
    w0, V0 = _sym_eig(S0)
    half = _apply(w0, V0, np.sqrt(w0))
    ihalf = _apply(w0, V0, 1.0 / np.sqrt(w0))
    if np.any(w.lam >= 1):
        raise DomainError("gradient needs finite edge lengths")
    g, _ = _grad_lengths(half, ihalf, w.topology, w.lengths)
    if parametrization == "length":
        return g
    if parametrization == "lambda":
        return g / (1.0 - w.lam)
    raise DomainError("parametrization must be 'length' or 'lambda'")


# ---------------------------------------------------------------------------
# Frechet mean


def frechet_mean_spd(mats, tol: float = 1e-10, max_iter: int = 200, weights=None) -> np.ndarray:
    """Affine-invariant Frechet (Karcher) mean by fixed-point iteration.

    Starts at the arithmetic mean and iterates
    ``M <- M^{1/2} exp(mean_k log(M^{-1/2} S_k M^{-1/2})) M^{1/2}`` until the
    Frobenius norm of the tangent mean drops below ``tol``.
    """
    mats = [check_spd(S) for S in mats]
    if not mats:
        raise DomainError("need at least one matrix")
    n = mats[0].shape[0]
    if any(S.shape != (n, n) for S in mats):
        raise DomainError("matrices differ in size")
    wts = np.full(len(mats), 1.0 / len(mats)) if weights is None else np.asarray(weights, float) / np.sum(weights)
    M = sum(wk * S for wk, S in zip(wts, mats))
    for _ in range(max_iter):
        w, V = _sym_eig(M)
        half = _apply(w, V, np.sqrt(w))
        ihalf = _apply(w, V, 1.0 / np.sqrt(w))
        T = sum(wk * spd_log(_symmetrize(ihalf @ S @ ihalf)) for wk, S in zip(wts, mats))
        if np.linalg.norm(T) < tol:
            return M
        M = _symmetrize(half @ spd_exp(T) @ half)
    raise ConvergenceError(f"Frechet mean did not converge in {max_iter} iterations")


def _symmetrize(A):
    return 0.5 * (A + A.T)
