"""Riemannian machinery over an abstract metric provider.

A provider supplies the metric tensor ``g(x)`` on a coordinate box and,
optionally, its analytic derivative.  On top of that this module builds
Christoffel symbols, fourth-order Runge-Kutta geodesic shooting with
boundary detection, discrete path lengths and sectional curvature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError, SingularMetricError

COND_MAX = 1e12
EIG_FLOOR = 1e-12

REACHED_TIME = "reached_time"
HIT_BHV = "hit_bhv_boundary"
HIT_INFINITY = "hit_infinity_boundary"
PENDANT_CLAMPED = "pendant_clamped"


class MetricProvider:
    """Metric tensor on a box of coordinates.

    Parameters
    ----------
    dim : int
        Number of coordinates.
    parametrization : str
        ``"length"``, ``"lambda"`` or ``"euclidean"`` (free coordinates).
        For the first two the box is ``[0, length_max]`` or ``[0, 1]``.
    pendant_mask : array of bool, optional
        Coordinates that may be clamped at their lower bound during shooting.
    length_max : float
        Finite stand-in for infinite edge length in the ``"length"`` box.
    h_fd : float
        Step for the central-difference fallback of :meth:`dg`.
    """

    def __init__(self, dim, parametrization="euclidean", pendant_mask=None, length_max=12.0, h_fd=1e-5):
        self.dim = int(dim)
        self.parametrization = parametrization
        self.pendant_mask = (
            np.zeros(self.dim, dtype=bool) if pendant_mask is None else np.asarray(pendant_mask, dtype=bool)
        )
        if parametrization == "length":
            self.lower = np.zeros(self.dim)
            self.upper = np.full(self.dim, float(length_max))
        elif parametrization == "lambda":
            self.lower = np.zeros(self.dim)
            self.upper = np.ones(self.dim)
        elif parametrization == "euclidean":
            self.lower = np.full(self.dim, -np.inf)
            self.upper = np.full(self.dim, np.inf)
        else:
            raise DomainError(f"unknown parametrization {parametrization!r}")
        self.h_fd = h_fd

    def g(self, x) -> np.ndarray:
        raise NotImplementedError

    def dg(self, x) -> np.ndarray:
        """``out[i, j, l] = d g_ij / d x_l`` by central differences."""
        x = np.asarray(x, dtype=float)
        out = np.empty((self.dim, self.dim, self.dim))
        for l in range(self.dim):
            e = np.zeros(self.dim)
            e[l] = self.h_fd
            out[:, :, l] = (self.g(x + e) - self.g(x - e)) / (2 * self.h_fd)
        return out

    def g_and_dg(self, x):
        return self.g(x), self.dg(x)

    def inside(self, x, strict=True) -> bool:
        x = np.asarray(x, dtype=float)
        if strict:
            return bool(np.all(x > self.lower) and np.all(x < self.upper))
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


class EuclideanMetric(MetricProvider):
    """Identity metric."""

    def __init__(self, dim):
        super().__init__(dim)

    def g(self, x):
        return np.eye(self.dim)

    def dg(self, x):
        return np.zeros((self.dim,) * 3)


class FunctionMetric(MetricProvider):
    """Metric given by callables; ``dg`` falls back to finite differences."""

    def __init__(self, dim, g, dg=None, h_fd=1e-5):
        super().__init__(dim, h_fd=h_fd)
        self._g = g
        self._dg = dg

    def g(self, x):
        return np.asarray(self._g(np.asarray(x, dtype=float)), dtype=float)

    def dg(self, x):
        if self._dg is None:
            return super().dg(x)
        return np.asarray(self._dg(np.asarray(x, dtype=float)), dtype=float)


# ---------------------------------------------------------------------------
# Christoffel symbols


def metric_inverse(g: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric metric via eigendecomposition.

    Raises :class:`SingularMetricError` when the matrix is not finite or its
    condition number exceeds ``COND_MAX``.
    """
    if not np.all(np.isfinite(g)):
        raise SingularMetricError("metric has non-finite entries")
    w, V = np.linalg.eigh(0.5 * (g + g.T))
    top = w.max() if w.size else 1.0
    if w.size and (w.min() <= EIG_FLOOR * max(top, EIG_FLOOR) or top / w.min() > COND_MAX):
        raise SingularMetricError(f"metric is singular (eigenvalues {w.min():.3g}..{top:.3g})")
    return (V / w) @ V.T


def christoffel_from(g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """``Gamma[k, i, j]`` from the metric and ``dg[i, j, l] = d_l g_ij``."""
    ginv = metric_inverse(g)
    term = dg + dg.transpose(0, 2, 1) - dg.transpose(2, 0, 1)
    return 0.5 * np.einsum("kl,lij->kij", ginv, term)


def christoffel(m: MetricProvider, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (m.dim,):
        raise DomainError(f"point must have {m.dim} coordinates")
    g, dg = m.g_and_dg(x)
    return christoffel_from(g, dg)


# ---------------------------------------------------------------------------
# geodesic shooting


@dataclass(frozen=True, eq=False)
class GeodesicPath:
    """Samples of a shot geodesic.

    ``clamped[n, i]`` marks coordinates frozen at zero at sample ``n``.
    """

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    cumulative_length: np.ndarray
    clamped: np.ndarray
    termination: str
    parametrization: str = "euclidean"

    @property
    def length(self) -> float:
        return float(self.cumulative_length[-1])

    @property
    def end(self) -> np.ndarray:
        return self.x[-1]

    def __len__(self):
        return self.t.size


def _acceleration(m, x, v, free):
    if free.all():
        gam = christoffel(m, x)
        return -np.einsum("kij,i,j->k", gam, v, v)
    g, dg = m.g_and_dg(x)
    idx = np.flatnonzero(free)
    gam = christoffel_from(g[np.ix_(idx, idx)], dg[np.ix_(idx, idx, idx)])
    a = np.zeros_like(v)
    a[idx] = -np.einsum("kij,i,j->k", gam, v[idx], v[idx])
    return a


def _rk4(m, x, v, dt, free):
    def f(xx, vv):
        return vv, _acceleration(m, xx, vv, free)

    k1x, k1v = f(x, v)
    k2x, k2v = f(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v)
    k3x, k3v = f(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v)
    k4x, k4v = f(x + dt * k3x, v + dt * k3v)
    xn = x + dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
    vn = v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
    xn[~free] = x[~free]
    vn[~free] = 0.0
    return xn, vn


def _violation(m, x, free):
    """Classify a tentative state: ``None`` if admissible, else an event tag
    with the offending coordinate."""
    if not np.all(np.isfinite(x)):
        return ("nonfinite", None)
    low = np.flatnonzero(free & (x < m.lower))
    if low.size:
        i = int(low[np.argmin(x[low] - m.lower[low])])
        return ("pendant" if m.pendant_mask[i] else HIT_BHV, i)
    high = np.flatnonzero(free & (x > m.upper))
    if high.size:
        i = int(high[np.argmax(x[high] - m.upper[high])])
        return (HIT_INFINITY, i)
    return None


def _try_step(m, x, v, dt, free):
    try:
        xn, vn = _rk4(m, x, v, dt, free)
    except (SingularMetricError, FloatingPointError):
        return None, None, ("singular", None)
    if not (np.all(np.isfinite(xn)) and np.all(np.isfinite(vn))):
        return None, None, ("nonfinite", None)
    return xn, vn, _violation(m, xn, free)


def shoot_geodesic(
    m: MetricProvider,
    x0,
    v0,
    step_dt: float = 1e-3,
    max_time: float = 1.0,
    pendant_clamp: bool = False,
    bisect_tol: float = 1e-9,
) -> GeodesicPath:
    """Integrate the geodesic equation from ``(x0, v0)`` with classic RK4.

    Integration stops at ``max_time`` or when a coordinate leaves the box:
    an internal coordinate at its lower bound is a BHV boundary event, any
    coordinate at its upper bound (or a singular metric on the way there)
    an infinity event.  A pendant coordinate reaching zero either ends
    the path (``pendant_clamp=False``, event ``pendant_clamped``) or is
    frozen at zero with zero velocity while the remaining coordinates keep
    following the geodesic of the metric restricted to them.

    Steps that would cross the boundary are bisected to locate the crossing
    time within ``bisect_tol``.
    """
    x = np.array(x0, dtype=float)
    v = np.array(v0, dtype=float)
    if x.shape != (m.dim,) or v.shape != (m.dim,):
        raise DomainError(f"x0 and v0 must have {m.dim} coordinates")
    if step_dt <= 0 or max_time < 0:
        raise DomainError("step_dt must be positive and max_time non-negative")
    free = np.ones(m.dim, dtype=bool)
    if not np.all(x >= m.lower) or not np.all(x < m.upper):
        raise DomainError("initial point outside the coordinate domain")
    at_low = x <= m.lower
    if np.any(at_low & ~m.pendant_mask):
        raise DomainError("initial point on an internal boundary")
    if np.any(at_low):
        if not pendant_clamp:
            raise DomainError("initial point has a zero pendant; enable pendant_clamp")
        free &= ~at_low
        v[~free] = 0.0

    ts, xs, vs, cl = [0.0], [x.copy()], [v.copy()], [~free]
    t = 0.0
    termination = REACHED_TIME
    while t < max_time - 1e-15:
        dt = min(step_dt, max_time - t)
        xn, vn, bad = _try_step(m, x, v, dt, free)
        if bad is None:
            t += dt
            x, v = xn, vn
            ts.append(t)
            xs.append(x.copy())
            vs.append(v.copy())
            cl.append(~free)
            continue
        lo, hi = 0.0, 1.0
        good = (x, v)
        while (hi - lo) * dt > bisect_tol:
            mid = 0.5 * (lo + hi)
            xm, vm, bm = _try_step(m, x, v, mid * dt, free)
            if bm is None:
                lo, good = mid, (xm, vm)
            else:
                hi, bad = mid, bm
        kind, i = bad
        if kind in ("singular", "nonfinite"):
            if i is None and not _near_infinity(m, good[0], free):
                raise NumericalError(f"geodesic integration broke down at t={t + lo * dt:.6g}")
            kind = HIT_INFINITY
        x, v = good
        x = x.copy()
        t += lo * dt
        if kind == "pendant" and pendant_clamp:
            x[i] = m.lower[i]
            v = v.copy()
            v[i] = 0.0
            free = free.copy()
            free[i] = False
            if lo > 0:
                ts.append(t)
                xs.append(x.copy())
                vs.append(v.copy())
                cl.append(~free)
            else:
                xs[-1], vs[-1], cl[-1] = x.copy(), v.copy(), ~free
            if not free.any():
                termination = PENDANT_CLAMPED
                break
            continue
        if i is not None:
            x[i] = m.lower[i] if kind in (HIT_BHV, "pendant") else m.upper[i]
        termination = PENDANT_CLAMPED if kind == "pendant" else kind
        if lo > 0:
            ts.append(t)
            xs.append(x)
            vs.append(v.copy())
            cl.append(~free)
        else:
            xs[-1] = x
        break

    X = np.array(xs)
    cum = _cumulative_length(m, X)
    return GeodesicPath(
        np.array(ts), X, np.array(vs), cum, np.array(cl), termination, m.parametrization
    )


def _near_infinity(m, x, free):
    if m.parametrization == "length":
        return bool(np.any(free & (x > 0.5 * m.upper)))
    if m.parametrization == "lambda":
        return bool(np.any(free & (x > 0.99)))
    return False


def _cumulative_length(m, X):
    if X.shape[0] < 2:
        return np.zeros(X.shape[0])
    seg = np.empty(X.shape[0] - 1)
    for n in range(X.shape[0] - 1):
        d = X[n + 1] - X[n]
        mid = 0.5 * (X[n] + X[n + 1])
        try:
            q = d @ m.g(mid) @ d
        except (SingularMetricError, NumericalError):
            q = np.nan
        seg[n] = np.sqrt(max(q, 0.0)) if np.isfinite(q) else np.nan
    # a segment ending on the infinity boundary may have an undefined metric
    # at its midpoint; it is dropped from the length
    seg = np.nan_to_num(seg, nan=0.0)
    return np.concatenate([[0.0], np.cumsum(seg)])


def path_length(m: MetricProvider, path) -> float:
    """Sum over segments of ``sqrt(dx' g(midpoint) dx)``.

    ``path`` is a :class:`GeodesicPath` or an array of points.
    """
    X = path.x if isinstance(path, GeodesicPath) else np.asarray(path, dtype=float)
    return float(_cumulative_length(m, X)[-1]) if X.shape[0] else 0.0


# ---------------------------------------------------------------------------
# curvature


def _christoffel_derivative(m, x, h):
    """``out[a, k, i, j] = d_a Gamma[k, i, j]``, central differences with one
    Richardson extrapolation step."""
    d = m.dim

    def central(step):
        out = np.empty((d, d, d, d))
        for a in range(d):
            e = np.zeros(d)
            e[a] = step
            out[a] = (christoffel(m, x + e) - christoffel(m, x - e)) / (2 * step)
        return out

    return (4 * central(h / 2) - central(h)) / 3


def riemann_tensor(m: MetricProvider, x, h: float = 1e-4) -> np.ndarray:
    """``R[l, i, j, k] = d_i G^l_jk - d_j G^l_ik + G^l_im G^m_jk - G^l_jm G^m_ik``."""
    x = np.asarray(x, dtype=float)
    gam = christoffel(m, x)
    dgam = _christoffel_derivative(m, x, h)
    R = np.einsum("iljk->lijk", dgam) - np.einsum("jlik->lijk", dgam)
    R += np.einsum("lim,mjk->lijk", gam, gam) - np.einsum("ljm,mik->lijk", gam, gam)
    return R


def sectional_curvature(m: MetricProvider, x, u, v, h: float = 1e-4) -> float:
    """Sectional curvature of the plane spanned by ``u`` and ``v`` at ``x``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    g = m.g(x)
    gram = (u @ g @ u) * (v @ g @ v) - (u @ g @ v) ** 2
    scale = (u @ g @ u) * (v @ g @ v)
    if not np.isfinite(gram) or gram <= 1e-14 * max(scale, 1e-300):
        raise DomainError("tangent vectors span a degenerate plane")
    R = riemann_tensor(m, x, h)
    Ruvv = np.einsum("lijk,i,j,k->l", R, u, v, v)
    return float((Ruvv @ g @ u) / gram)
