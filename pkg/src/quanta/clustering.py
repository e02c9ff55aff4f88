"""Weighted K-means over population positions and refinement of cluster
centres into local maxima of the target."""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _backend
from .errors import ConfigurationError, DomainError

SOURCES = ("raw_cluster", "refined_mode", "oracle")


@dataclass(frozen=True)
class ModeSet:
    """K distinct centring points in R^d."""

    centres: np.ndarray
    source: str = "raw_cluster"

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centres, dtype=float))
        if c.shape[0] < 1:
            raise ConfigurationError("a mode set needs at least one centre")
        if not np.all(np.isfinite(c)):
            raise DomainError("mode centres must be finite")
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")
        if len(np.unique(c, axis=0)) != c.shape[0]:
            raise DomainError("mode centres must be pairwise distinct")
        object.__setattr__(self, "centres", np.ascontiguousarray(c))

    def __len__(self):
        return self.centres.shape[0]

    @classmethod
    def from_points(cls, points, source="raw_cluster", merge_tol=0.0):
        """Build a mode set, merging points closer than ``merge_tol`` (first wins)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        kept = []
        for p in pts:
            if all(np.linalg.norm(p - q) > merge_tol for q in kept):
                kept.append(p)
        return cls(np.array(kept), source)


@dataclass(frozen=True)
class WeightedPointSet:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if pts.shape[0] != w.size:
            raise DomainError("points and weights must have equal lengths")
        if np.any(w <= 0):
            raise DomainError("weights must be positive")
        object.__setattr__(self, "points", np.ascontiguousarray(pts))
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.size


class KMeansResult(NamedTuple):
    modes: ModeSet
    assignment: np.ndarray
    objective: float


def weighted_objective(data, centres, assignment):
    """``sum_j beta_j ||x_j - mu_{S(j)}||^2``."""
    c = np.atleast_2d(centres)
    return float((data.weights * ((data.points - c[assignment]) ** 2).sum(axis=1)).sum())


def initial_centres(data, K, rng):
    """K distinct data points chosen by weighted k-means++ seeding.

    The first centre is drawn with probability proportional to weight (cold
    chains favoured); each further centre with probability proportional to
    ``weight * D^2``, D being the distance to the nearest centre so far. Pure
    weight-proportional seeding almost never picks a hot-chain point, so every
    centre lands on the mode the cold chains occupy and the modes the hot
    chains have found are never catalogued.
    """
    X, w = data.points, data.weights
    chosen = np.zeros(len(data), dtype=bool)
    first = rng.choice(len(data), p=w / w.sum())
    chosen[first] = True
    d2 = ((X - X[first]) ** 2).sum(axis=1)
    for _ in range(1, K):
        p = np.where(chosen, 0.0, w * d2)
        if not p.sum() > 0:  # every remaining point coincides with a centre
            p = np.where(chosen, 0.0, w)
        j = rng.choice(len(data), p=p / p.sum())
        chosen[j] = True
        d2 = np.minimum(d2, ((X - X[j]) ** 2).sum(axis=1))
    idx = np.flatnonzero(chosen)
    return X[idx].copy()


def weighted_kmeans(data, K, init=None, max_iter=50, rng=None, return_history=False):
    """Weighted Lloyd iterations until the allocation stops changing.

    Args:
        data: WeightedPointSet of chain positions and their inverse temperatures.
        K: number of clusters.
        init: (K, d) initial centres; drawn with ``initial_centres`` when None.
        max_iter: cap on allocation/update rounds.
        rng: generator used only for the default initialisation.
        return_history: also return the per-iteration objective values.

    Returns:
        ``KMeansResult(modes, assignment, objective)``. Coincident centres
        (possible when the data hold repeated points) are merged, so
        ``len(modes)`` can be smaller than K; ``assignment`` indexes the merged set.
    """
    if not isinstance(data, WeightedPointSet):
        data = WeightedPointSet(*data)
    if K < 1 or K > len(data):
        raise ConfigurationError(f"K={K} must lie in [1, {len(data)}]")
    if max_iter < 1:
        raise ConfigurationError("max_iter must be at least 1")
    if init is None:
        init = initial_centres(data, K, rng if rng is not None else np.random.default_rng())
    init = np.ascontiguousarray(np.atleast_2d(np.asarray(init, dtype=float)))
    if init.shape != (K, data.points.shape[1]):
        raise ConfigurationError(f"init must have shape ({K}, {data.points.shape[1]})")

    kern = _backend.kernels()
    C, labels, history, _ = kern.weighted_lloyd(data.points, data.weights, init, int(max_iter))
    modes = ModeSet.from_points(C, "raw_cluster")
    if len(modes) < K:
        labels = kern.nearest_centre(data.points, modes.centres)
    result = KMeansResult(modes, labels, weighted_objective(data, modes.centres, labels))
    if return_history:
        return result, np.asarray(history)
    return result


def refine_modes(centres, target, max_steps=200, tol=1e-8, merge_tol=None):
    """Move each centre uphill on ``log pi`` to a nearby local maximum.

    Gradient ascent with Armijo backtracking (Barzilai-Borwein trial steps)
    when the target has a gradient, coordinate-wise golden-section search
    otherwise. A centre never ends lower than it started. Centres that
    converge onto the same mode are merged.
    """
    C = np.ascontiguousarray(np.atleast_2d(getattr(centres, "centres", centres)).astype(float))
    params = target.mixture_params
    if params is not None:
        out = _backend.kernels().refine_mixture(C, int(max_steps), float(tol), *params)
    elif target.has_gradient:
        out = np.array([_ascend(c, target, max_steps, tol)[0] for c in C])
    else:
        out = np.array([_golden_polish(c, target, max_steps, tol) for c in C])
    if merge_tol is None:
        merge_tol = 1e-6 * (1.0 + np.abs(out).max())
    return ModeSet.from_points(out, "refined_mode", merge_tol=merge_tol)


def _ascend(x0, target, max_steps, tol):
    """Generic gradient ascent; returns (x, path of accepted log-density values)."""
    x = np.array(x0, dtype=float)
    f = target.log_density(x)
    path = [f]
    if not np.isfinite(f):
        return x, path
    g = target.gradient(x)
    gn2 = float(g @ g)
    alpha = 1.0 / max(1.0, np.sqrt(gn2))
    for _ in range(max_steps):
        if np.sqrt(gn2) < tol:
            break
        for _ in range(80):
            trial = x + alpha * g
            ft = target.log_density(trial)
            if np.isfinite(ft) and ft >= f + 1e-4 * alpha * gn2:
                break
            alpha *= 0.5
        else:
            break
        g_new = target.gradient(trial)
        s = trial - x
        sy = float(s @ (g_new - g))
        x, f, g = trial, ft, g_new
        gn2 = float(g @ g)
        path.append(f)
        alpha = -float(s @ s) / sy if sy < 0 else 2 * alpha
    return x, path


_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_polish(x0, target, max_steps, tol):
    x = np.array(x0, dtype=float)
    f = target.log_density(x)
    if not np.isfinite(f):
        return x
    width = np.full(x.size, 0.1 * (1.0 + np.abs(x)))
    for _ in range(max_steps):
        moved = 0.0
        for j in range(x.size):

            def line(t, j=j):
                y = x.copy()
                y[j] = t
                v = target.log_density(y)
                return v if np.isfinite(v) else -np.inf

            a, b = x[j] - width[j], x[j] + width[j]
            c, d = b - _INVPHI * (b - a), a + _INVPHI * (b - a)
            fc, fd = line(c), line(d)
            while b - a > tol:
                if fc > fd:
                    b, d, fd = d, c, fc
                    c = b - _INVPHI * (b - a)
                    fc = line(c)
                else:
                    a, c, fc = c, d, fd
                    d = a + _INVPHI * (b - a)
                    fd = line(d)
            t = 0.5 * (a + b)
            ft = line(t)
            if ft > f:
                moved = max(moved, abs(t - x[j]))
                # the optimum sat at the bracket edge: widen for the next sweep
                width[j] *= 2.0 if abs(t - x[j]) > 0.9 * width[j] else 0.5
                x[j], f = t, ft
            else:
                width[j] *= 0.5
        if moved < tol:
            break
    return x
