"""Single-step Markov kernels: within-temperature RWM, the standard PT swap
and the mode-rescaling (QuanTA) swap.

The scalar functions operate on one chain or one pair. The ``*_batch``
functions are what the population engine calls; they dispatch to the compiled
mixture kernels when the target allows it and fall back to generic numpy code
otherwise.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _backend
from .errors import ConfigurationError, DomainError


@dataclass
class ChainState:
    """Position of one chain, its level index and its private RNG stream."""

    position: np.ndarray
    level_index: int
    rng: np.random.Generator
    log_density: Optional[float] = None

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(-1)
        if not np.all(np.isfinite(self.position)):
            raise DomainError("chain position must be finite")


@dataclass(frozen=True)
class SwapOutcome:
    accepted: bool
    log_acceptance_ratio: float
    proposed_positions: tuple


def _centres(modes):
    c = np.asarray(getattr(modes, "centres", modes), dtype=float)
    if c.size == 0:
        raise ConfigurationError("mode set is empty")
    return c.reshape(c.shape[0], -1) if c.ndim > 1 else c.reshape(-1, 1)


def rwm_step(state, beta, scale, target):
    """One Gaussian random-walk Metropolis step at inverse temperature ``beta``."""
    if not scale > 0:
        raise DomainError("RWM scale must be positive")
    x = state.position
    lx = state.log_density if state.log_density is not None else target.log_density(x)
    y = x + scale * state.rng.standard_normal(x.size)
    ly = target.log_density(y)
    log_u = np.log(state.rng.random())
    if log_u < beta * (ly - lx):
        return ChainState(y, state.level_index, state.rng, ly)
    return ChainState(x.copy(), state.level_index, state.rng, lx)


def pt_swap_log_ratio(x_i, x_j, beta_i, beta_j, target):
    """Log acceptance ratio of exchanging ``x_i`` (at beta_i) and ``x_j`` (at beta_j)."""
    if beta_i == beta_j:
        return 0.0
    return (beta_i - beta_j) * (target.log_density(x_j) - target.log_density(x_i))


def quanta_transform(x, beta_from, beta_to, mu):
    """Rescale ``x`` about ``mu`` by ``sqrt(beta_from / beta_to)``."""
    if not (beta_from > 0 and beta_to > 0):
        raise DomainError("inverse temperatures must be positive")
    x = np.asarray(x, dtype=float)
    if beta_from == beta_to:
        return x.copy()
    mu = np.asarray(mu, dtype=float)
    return np.sqrt(beta_from / beta_to) * (x - mu) + mu


def mode_allocate(x, modes):
    """Index of the nearest centre (Euclidean); ties go to the lowest index."""
    c = _centres(modes)
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return int(_backend.kernels("numpy").nearest_centre(x, c)[0])


def quanta_proposal(x_i, x_j, beta_i, beta_j, modes, log_density):
    """Proposed pair and log ratio of a mode-rescaling swap.

    ``x_i`` sits at the colder level ``beta_i``. Returns ``(y_j, y_i, log_r)``
    where ``y_j`` is the point proposed for level i (the shrunk ``x_j``) and
    ``y_i`` the point proposed for level j (the expanded ``x_i``). ``log_r`` is
    ``-inf`` when either transformed point changes mode allocation.
    ``log_density`` is any callable returning ``log pi`` of a single point.
    """
    c = _centres(modes)
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    z_i, z_j = mode_allocate(x_i, c), mode_allocate(x_j, c)
    y_i = quanta_transform(x_i, beta_i, beta_j, c[z_i])
    y_j = quanta_transform(x_j, beta_j, beta_i, c[z_j])
    if mode_allocate(y_i, c) != z_i or mode_allocate(y_j, c) != z_j:
        return y_j, y_i, -np.inf
    log_r = (
        beta_j * log_density(y_i)
        + beta_i * log_density(y_j)
        - beta_i * log_density(x_i)
        - beta_j * log_density(x_j)
    )
    return y_j, y_i, float(log_r)


def quanta_swap(x_i, x_j, beta_i, beta_j, modes, target, rng=None, log_u=None):
    """Propose and accept/reject one mode-rescaling swap between two levels.

    The Jacobian factors of the two rescalings cancel, so none appears in the
    ratio. Supply either ``rng`` or a pre-drawn ``log_u``.
    """
    if beta_i < beta_j or beta_j <= 0:
        raise DomainError("quanta_swap expects beta_i >= beta_j > 0")
    new_i, new_j, log_r = quanta_proposal(x_i, x_j, beta_i, beta_j, modes, target.log_density)
    if log_u is None:
        log_u = np.log((rng or np.random.default_rng()).random())
    return SwapOutcome(bool(log_u < log_r), log_r, (new_i, new_j))


# -- batched paths used by the population engine ---------------------------


def rwm_sweeps(X, logp, beta, scale, noise, log_u, target):
    """Apply ``noise.shape[0]`` RWM sweeps to every row of ``X`` in place."""
    params = target.mixture_params
    if params is not None:
        return _backend.kernels().rwm_mixture(X, logp, beta, scale, noise, log_u, *params)
    k, m, _ = noise.shape
    accepted = np.zeros((k, m), dtype=np.uint8)
    for t in range(k):
        prop = X + scale[:, None] * noise[t]
        lp = target.log_density(prop)
        with np.errstate(invalid="ignore"):
            acc = log_u[t] < beta * (lp - logp)
        X[acc] = prop[acc]
        logp[acc] = lp[acc]
        accepted[t] = acc
    return accepted


def swap_batch(Xa, Xb, logpa, logpb, beta_a, beta_b, use_quanta, log_u, centres, target):
    """One swap proposal per row pair, applied in place; returns (accepted, log_ratio)."""
    if centres is None:
        centres = np.zeros((1, Xa.shape[1]))
        if np.any(use_quanta):
            raise ConfigurationError("QuanTA swaps requested without mode centres")
    params = target.mixture_params
    if params is not None:
        return _backend.kernels().swap_mixture(
            Xa, Xb, logpa, logpb, beta_a, beta_b, use_quanta, log_u, centres, *params
        )
    return _swap_generic(Xa, Xb, logpa, logpb, beta_a, beta_b, use_quanta, log_u, centres, target)


def _swap_generic(Xa, Xb, logpa, logpb, beta_a, beta_b, use_quanta, log_u, centres, target):
    npk = _backend.kernels("numpy")
    n_pairs = Xa.shape[0]
    log_ratio = np.empty(n_pairs)
    ya = Xb.copy()
    yb = Xa.copy()
    lya = logpb.copy()
    lyb = logpa.copy()
    pt = ~use_quanta
    with np.errstate(invalid="ignore"):
        log_ratio[pt] = (beta_a[pt] - beta_b[pt]) * (logpb[pt] - logpa[pt])
    q = np.flatnonzero(use_quanta)
    if q.size:
        ba, bb = beta_a[q], beta_b[q]
        za = npk.nearest_centre(Xa[q], centres)
        zb = npk.nearest_centre(Xb[q], centres)
        up = centres[za] + np.sqrt(ba / bb)[:, None] * (Xa[q] - centres[za])
        down = centres[zb] + np.sqrt(bb / ba)[:, None] * (Xb[q] - centres[zb])
        keep = (npk.nearest_centre(up, centres) == za) & (npk.nearest_centre(down, centres) == zb)
        lr = np.full(q.size, -np.inf)
        if keep.any():
            l_up = target.log_density(up[keep])
            l_down = target.log_density(down[keep])
            kq = q[keep]
            lr[keep] = bb[keep] * l_up + ba[keep] * l_down - ba[keep] * logpa[kq] - bb[keep] * logpb[kq]
            lya[kq], lyb[kq] = l_down, l_up
        ya[q], yb[q] = down, up
        log_ratio[q] = lr
    with np.errstate(invalid="ignore"):
        accepted = log_u < log_ratio
    Xa[accepted], Xb[accepted] = ya[accepted], yb[accepted]
    logpa[accepted], logpb[accepted] = lya[accepted], lyb[accepted]
    return accepted, log_ratio
