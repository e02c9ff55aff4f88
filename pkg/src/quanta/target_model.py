"""Target densities and their tempered versions.

All densities are handled in the log domain. Batched evaluation takes an
``(m, d)`` array and returns ``(m,)``; a single ``(d,)`` point returns a float.
"""

import warnings

import numpy as np

from .errors import DomainError
from .marginals import Marginal, get_marginal

_LOG_2PI = np.log(2.0 * np.pi)


def _as_batch(x, dimension):
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    x2 = x.reshape(1, -1) if single else x.reshape(-1, x.shape[-1])
    if x2.shape[1] != dimension:
        raise DomainError(f"expected points of dimension {dimension}, got {x2.shape[1]}")
    return x2, single


class TargetDensity:
    """Unnormalised log-density on R^d.

    Args:
        dimension: d.
        log_density: callable mapping an ``(m, d)`` batch to ``(m,)``.
        gradient: optional callable mapping ``(m, d)`` to ``(m, d)``.
        known_modes: optional list of d-vectors.
    """

    def __init__(self, dimension, log_density=None, gradient=None, known_modes=None):
        if int(dimension) < 1:
            raise DomainError("dimension must be a positive integer")
        self.dimension = int(dimension)
        self._log_density = log_density
        self._gradient = gradient
        self.known_modes = (
            None if known_modes is None else [np.asarray(m, dtype=float).reshape(self.dimension) for m in known_modes]
        )

    # subclasses override these two
    def _logpdf_batch(self, X):
        return np.asarray(self._log_density(X), dtype=float).reshape(-1)

    def _grad_batch(self, X):
        return np.asarray(self._gradient(X), dtype=float).reshape(X.shape)

    @property
    def has_gradient(self):
        return self._gradient is not None

    @property
    def mixture_params(self):
        """(means, log_coef, inv2var) when the compiled mixture kernels apply."""
        return None

    def log_density(self, x):
        X, single = _as_batch(x, self.dimension)
        out = self._logpdf_batch(X)
        return float(out[0]) if single else out

    def gradient(self, x):
        if not self.has_gradient:
            raise NotImplementedError("this target exposes no gradient")
        X, single = _as_batch(x, self.dimension)
        out = self._grad_batch(X)
        return out[0] if single else out


class GaussianMixtureTarget(TargetDensity):
    """Mixture of isotropic Gaussians ``sum_k w_k prod_j phi(x_j; mu_k, sigma_k^2)``.

    ``means`` may hold scalars (the same mean on every coordinate) or full
    d-vectors; ``sigmas`` holds one value per component or a single shared one.
    """

    def __init__(self, weights, means, sigmas, dimension):
        dimension = int(dimension)
        w = np.asarray(weights, dtype=float).reshape(-1)
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise DomainError("mixture weights must be positive and sum to 1")
        K = w.size
        mu = np.asarray(means, dtype=float)
        if mu.ndim == 1:
            if mu.size != K:
                raise DomainError("need one mean per component")
            mu = np.repeat(mu[:, None], dimension, axis=1)
        if mu.shape != (K, dimension):
            raise DomainError(f"means must have shape ({K},) or ({K}, {dimension})")
        sig = np.asarray(sigmas, dtype=float).reshape(-1)
        if sig.size == 1:
            sig = np.repeat(sig, K)
        if sig.size != K or np.any(sig <= 0):
            raise DomainError("sigmas must be positive, one per component")
        self.weights, self.means, self.sigmas = w, mu, sig
        self._log_coef = np.log(w) - dimension * np.log(sig) - 0.5 * dimension * _LOG_2PI
        self._inv2var = 0.5 / sig**2
        super().__init__(dimension, known_modes=list(mu))

    @property
    def has_gradient(self):
        return True

    @property
    def mixture_params(self):
        return self.means, self._log_coef, self._inv2var

    def _logpdf_batch(self, X):
        from ._backend import kernels

        return kernels().mixture_logpdf(np.ascontiguousarray(X), *self.mixture_params)

    def _grad_batch(self, X):
        from ._backend import kernels

        return kernels().mixture_grad(np.ascontiguousarray(X), *self.mixture_params)

    def min_separation_ratio(self):
        """Smallest pairwise mean distance divided by the largest sigma."""
        if len(self.weights) < 2:
            return np.inf
        diff = self.means[:, None, :] - self.means[None, :, :]
        dist = np.sqrt((diff**2).sum(-1))
        dist[np.diag_indices_from(dist)] = np.inf
        return float(dist.min() / self.sigmas.max())


class ProductMarginalTarget(TargetDensity):
    """Product target ``f_d(x) = prod_i f(x_i)`` built from a 1-D marginal."""

    def __init__(self, marginal, dimension):
        self.marginal = marginal if isinstance(marginal, Marginal) else get_marginal(marginal)
        super().__init__(dimension, known_modes=[np.full(int(dimension), self.marginal.mode)])

    @property
    def mode(self):
        return self.marginal.mode

    @property
    def has_gradient(self):
        return True

    def _logpdf_batch(self, X):
        lo, hi = self.marginal.support
        inside = np.all((X > lo) & (X < hi), axis=1)
        out = np.full(X.shape[0], -np.inf)
        if inside.any():
            with np.errstate(divide="ignore", invalid="ignore"):
                out[inside] = self.marginal.log_f(X[inside]).sum(axis=1)
        return out

    def _grad_batch(self, X):
        return np.asarray(self.marginal.h1(X), dtype=float)


def tempered_log_density(target, x, beta):
    """``beta * log pi(x)``, no normalisation."""
    if not beta > 0:
        raise DomainError(f"inverse temperature must be positive, got {beta}")
    xa = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xa)):
        raise DomainError("tempered_log_density needs a finite point")
    return beta * target.log_density(xa)


def mixture_mode_points(target):
    """The component means of a well-separated mixture, as d-vectors."""
    if target.min_separation_ratio() <= 6.0:
        warnings.warn("mixture components are not well separated; means may not be local maxima")
    return [m.copy() for m in target.means]
