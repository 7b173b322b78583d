"""Drivers for the geodesic experiments on the five-leaf example orthant.

The example tree is ``((1:p,2:p):a,3:p,(4:p,5:p):b)``: five pendant edges
of common length ``p`` and two internal edges.  In the canonical split
order the internal coordinate of ``{4,5}`` (length ``b``) precedes that of
``{1,2}`` (length ``a``); :func:`internal_axes` returns their indices.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import least_squares

from .errors import ConvergenceError, DomainError
from .forest import Wald, leaf_mask, canonical_split, random_wald, read_wald
from .riemann import GeodesicPath, MetricProvider, shoot_geodesic
from .spd import GaussianMetric
from .twostate import TwoStateMetric

# internal-length rows used for the fan experiments: long, medium, short
FAN_ROWS = ((1.0, 1.0), (0.5, 0.5), (0.2, 0.2))
FAN_PENDANTS = (0.1, 0.5)


def example_tree(pendant: float = 0.1, internal=(1.0, 1.0)) -> Wald:
    """``((1:p,2:p):a,3:p,(4:p,5:p):b)`` with ``internal = (a, b)``."""
    a, b = internal
    p = pendant
    return read_wald(f"((1:{p!r},2:{p!r}):{a!r},3:{p!r},(4:{p!r},5:{p!r}):{b!r})")


def internal_axes(w: Wald) -> tuple[int, int]:
    """Coordinate indices of the ``{1,2}`` split (east) and the ``{4,5}``
    split (north) in the example tree."""
    full = (1 << w.n_leaves) - 1
    east = w.topology.index(canonical_split(leaf_mask([1, 2]), full))
    north = w.topology.index(canonical_split(leaf_mask([4, 5]), full))
    return east, north


def make_metric(model: str, w: Wald, parametrization: str = "length") -> MetricProvider:
    if model == "twostate":
        return TwoStateMetric(w.topology, parametrization)
    if model == "gaussian":
        return GaussianMetric(w.topology, parametrization)
    raise DomainError(f"unknown model {model!r}")


def coordinates(w: Wald, parametrization: str) -> np.ndarray:
    return w.lengths.copy() if parametrization == "length" else w.lam.copy()


def direction_velocity(metric: MetricProvider, w: Wald, angle: float, parametrization: str = "length",
                       unit_speed: bool = True) -> np.ndarray:
    """Initial velocity moving the internal lengths in compass direction
    ``angle`` (radians, 0 = east = growing ``{1,2}`` edge, pi/2 = north),
    pendant velocity zero, scaled to unit metric speed."""
    east, north = internal_axes(w)
    v = np.zeros(w.topology.n_splits)
    v[east] = np.cos(angle)
    v[north] = np.sin(angle)
    if parametrization == "lambda":
        v = v * (1.0 - w.lam)
    if unit_speed:
        x = coordinates(w, parametrization)
        v = v / np.sqrt(v @ metric.g(x) @ v)
    return v


def shoot_fan(model: str = "gaussian", pendant: float = 0.1, internal=(1.0, 1.0), n_directions: int = 24,
              parametrization: str = "length", max_time: float = 2.0, step_dt: float = 1e-3,
              pendant_clamp: bool = True) -> list[tuple[float, GeodesicPath]]:
    """Geodesics fired from the example tree in ``n_directions`` equally
    spaced compass directions of the internal-edge plane."""
    w = example_tree(pendant, internal)
    metric = make_metric(model, w, parametrization)
    x0 = coordinates(w, parametrization)
    out = []
    for j in range(n_directions):
        angle = 2 * np.pi * j / n_directions
        v0 = direction_velocity(metric, w, angle, parametrization)
        out.append((angle, shoot_geodesic(metric, x0, v0, step_dt, max_time, pendant_clamp)))
    return out


# ---------------------------------------------------------------------------
# comparing loci


def _arclength_resample(X, s):
    seg = np.linalg.norm(np.diff(X, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    keep = np.concatenate([[True], seg > 0])
    cum, X = cum[keep], X[keep]
    return np.column_stack([np.interp(s, cum, X[:, j]) for j in range(X.shape[1])]), cum[-1]


def locus_deviation(X, Y, n_samples: int = 400) -> tuple[float, float]:
    """Compare two coordinate curves from a common start.

    Both are reparametrized by Euclidean arc length in coordinate space and
    compared over their common arc-length range.  Returns the sup-norm
    deviation and the common traversed length.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    lx = float(np.sum(np.linalg.norm(np.diff(X, axis=0), axis=1)))
    ly = float(np.sum(np.linalg.norm(np.diff(Y, axis=0), axis=1)))
    common = min(lx, ly)
    s = np.linspace(0.0, common, n_samples)
    A, _ = _arclength_resample(X, s)
    B, _ = _arclength_resample(Y, s)
    return float(np.max(np.abs(A - B))), common


def first_event_prefix(path: GeodesicPath) -> np.ndarray:
    """Samples up to (and including) the first pendant clamp or boundary."""
    clamped = path.clamped.any(axis=1)
    if clamped.any():
        return path.x[: int(np.argmax(clamped)) + 1]
    return path.x


# ---------------------------------------------------------------------------
# boundary-value geodesics


def ode_connect(metric: MetricProvider, x0, x1, step_dt: float = 1e-2, tol: float = 1e-12,
                max_nfev: int = 100, stages: int = 4) -> GeodesicPath:
    """Geodesic from ``x0`` to ``x1`` inside one orthant by single shooting.

    Solves ``shoot(x0, v, t=1).end = target`` for ``v`` with a trust-region
    least-squares solver.  The target walks from ``x0`` to ``x1`` in
    ``stages`` equal steps along the coordinate segment, each solve seeded by
    the rescaled previous velocity; a direct solve from ``v = x1 - x0`` often
    leaves the orthant when pendant edges are short.
    """
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    v = None
    for j in range(1, stages + 1):
        s = j / stages
        target = x0 + s * (x1 - x0)

        def residual(u, target=target):
            p = shoot_geodesic(metric, x0, u, step_dt, 1.0)
            if p.termination != "reached_time":
                return (p.end - target) + 10.0 * (1.0 - p.t[-1])
            return p.end - target

        guess = target - x0 if v is None else v * j / (j - 1)
        v = least_squares(residual, guess, xtol=tol, ftol=tol, gtol=tol, max_nfev=max_nfev).x
    path = shoot_geodesic(metric, x0, v, step_dt, 1.0)
    if path.termination != "reached_time" or np.max(np.abs(path.end - x1)) > 1e-6:
        raise ConvergenceError("boundary-value shooting did not reach the target point")
    return path


# ---------------------------------------------------------------------------
# synthetic samples


def perturbed_sample(base: Wald, count: int, sigma: float = 0.3, seed=None) -> list[Wald]:
    """Trees sharing the topology of ``base`` with lengths multiplied by
    independent log-normal factors."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = []
    for _ in range(count):
        ell = base.lengths * np.exp(sigma * rng.standard_normal(base.lengths.size))
        out.append(Wald(base.topology, -np.expm1(-ell)))
    return out


def synthetic_sample(n_leaves: int, count: int, sigma: float = 0.3, seed=None,
                     lam_range=(0.1, 0.6)) -> list[Wald]:
    """Perturbations of one random base tree."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    base = random_wald(n_leaves, rng, lam_range=lam_range)
    return perturbed_sample(base, count, sigma, rng)
