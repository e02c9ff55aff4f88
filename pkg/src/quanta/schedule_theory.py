"""Temperature schedules, the quadrature engine for the optimal-scaling
functionals, ESJD-limit maximisation and a stochastic-approximation schedule
tuner.

Notation for a 1-D marginal ``f`` with mode ``mu`` and ``h = log f``::

    k(x) = (x - mu) h'(x)          r(x) = (x - mu)^2 h''(x)
    M = E[h]   S = E[k]   I = Var(h)   V = Cov(h, k)   R = E[r - k]

with every expectation taken under ``f**beta`` (normalised). The bracket
``V/2 - I + R/(4 beta)`` controls the limiting swap acceptance between two
consecutive levels. Using ``R/(4 beta) = -Var(k)/4 + V/2`` it equals
``-Var(h - k/2)``, so it is never positive; only its magnitude enters the
ESJD limit.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .errors import ConfigurationError, DomainError, NumericalError
from .marginals import Marginal, get_marginal

#: Acceptance rate at the ESJD-optimal spacing, 2*Phi(-u*/sqrt(2)).
OPTIMAL_ACCEPTANCE = 0.234


# -- schedules ---------------------------------------------------------------


@dataclass(frozen=True)
class TemperatureSchedule:
    """Strictly decreasing inverse temperatures starting at 1."""

    betas: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=float).reshape(-1)
        if b.size < 1:
            raise ConfigurationError("a schedule needs at least one level")
        if b[0] != 1.0:
            raise ConfigurationError(f"the coldest level must be beta=1, got {b[0]}")
        if np.any(b <= 0) or not np.all(np.isfinite(b)):
            raise ConfigurationError("inverse temperatures must be positive and finite")
        if np.any(np.diff(b) >= 0):
            raise ConfigurationError("inverse temperatures must be strictly decreasing")
        b.setflags(write=False)
        object.__setattr__(self, "betas", b)

    def __len__(self):
        return self.betas.size

    @property
    def n_adjacencies(self):
        return self.betas.size - 1

    @property
    def ratios(self):
        return self.betas[1:] / self.betas[:-1]

    def tolist(self):
        return self.betas.tolist()


def geometric_schedule(ratio, levels):
    """``{1, r, r^2, ..., r^(levels-1)}``."""
    if not 0 < ratio < 1:
        raise ConfigurationError(f"geometric ratio must lie in (0, 1), got {ratio}")
    if int(levels) < 1:
        raise ConfigurationError("levels must be at least 1")
    return TemperatureSchedule(float(ratio) ** np.arange(int(levels), dtype=float))


def composite_schedule(segments):
    """Concatenate geometric segments.

    Each segment is ``(ratio, count)`` or ``(ratio, count, start_power)``. The
    first segment starts at power 0. A later segment without an explicit start
    power starts at the smallest power that keeps the ladder strictly
    decreasing, so ``[(0.08, 4), (0.4, 8)]`` gives
    ``{1, 0.08, 0.08^2, 0.08^3, 0.4^9, ..., 0.4^16}``.
    """
    if not segments:
        raise ConfigurationError("composite schedule needs at least one segment")
    betas = []
    for idx, seg in enumerate(segments):
        if len(seg) not in (2, 3):
            raise ConfigurationError(f"segment {idx} must be (ratio, count[, start_power])")
        ratio, count = float(seg[0]), int(seg[1])
        if not 0 < ratio < 1 or count < 1:
            raise ConfigurationError(f"segment {idx}: need 0 < ratio < 1 and count >= 1")
        if len(seg) == 3:
            start = int(seg[2])
        elif not betas:
            start = 0
        else:
            # smallest p with ratio**p < last, guarding against rounding at the boundary
            start = max(0, int(math.floor(math.log(betas[-1]) / math.log(ratio))))
            while ratio**start >= betas[-1]:
                start += 1
        betas.extend(ratio ** np.arange(start, start + count, dtype=float))
    return TemperatureSchedule(np.array(betas))


# -- quadrature functionals ----------------------------------------------------


@dataclass(frozen=True)
class QuadSettings:
    """Controls for ``marginal_functionals``.

    The integration variable is ``t = (x - mode) sqrt(beta) / sigma_eff`` with
    ``sigma_eff = 1/sqrt(-h''(mode))``. The central window ``|t| <= window``
    doubles until the mass outside it is below ``tail_tol``; the tails are
    still integrated, not dropped.
    """

    epsrel: float = 1e-13
    limit: int = 400
    window: float = 12.0
    tail_tol: float = 1e-14
    max_expansions: int = 40
    fail_rtol: float = 1e-7


@dataclass(frozen=True)
class MarginalFunctionals:
    """Functionals of ``f**beta``; ``bracket = V/2 - I + R/(4 beta)`` with ``V = 1/beta^2``."""

    beta: float
    M: float
    S: float
    I: float
    V: float
    R: float
    bracket: float
    V_quadrature: float = float("nan")
    var_k: float = float("nan")
    bracket_direct: float = float("nan")
    tail_mass: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.I < 0:
            raise NumericalError("I is a variance and cannot be negative", self.as_dict())

    @property
    def magnitude(self):
        """``|bracket|``, the quantity entering the ESJD limit."""
        return abs(self.bracket)

    @property
    def identity_gap(self):
        """``R/(4 beta) - (-Var(k)/4 + V/2)``; zero up to quadrature error."""
        return self.R / (4 * self.beta) - (-0.25 * self.var_k + 0.5 * self.V)

    def as_dict(self):
        return {
            "name": self.name,
            "beta": self.beta,
            "M": self.M,
            "S": self.S,
            "I": self.I,
            "V": self.V,
            "R": self.R,
            "bracket": self.bracket,
            "V_quadrature": self.V_quadrature,
            "var_k": self.var_k,
            "bracket_direct": self.bracket_direct,
            "tail_mass": self.tail_mass,
        }


class _Integrator:
    """Expectations under ``f**beta`` on the standardised variable ``t``."""

    def __init__(self, marg, beta, settings):
        self.m, self.beta, self.s = marg, float(beta), settings
        self.mode = float(marg.mode)
        curv = marg.curvature
        if not curv > 0:
            raise NumericalError("h''(mode) must be negative for a unimodal marginal", {"curvature": curv})
        self.scale = 1.0 / math.sqrt(curv * self.beta)
        self.h0 = float(marg.log_f(np.array(self.mode)))
        lo, hi = marg.support
        self.t_lo = -math.inf if lo == -math.inf else (lo - self.mode) / self.scale
        self.t_hi = math.inf if hi == math.inf else (hi - self.mode) / self.scale
        self.issues = []

    def x(self, t):
        return self.mode + self.scale * t

    def weight(self, t):
        return math.exp(self.beta * (float(self.m.log_f(self.x(t))) - self.h0))

    def _quad(self, fn, a, b):
        if not a < b:
            return 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(fn, a, b, epsabs=0.0, epsrel=self.s.epsrel, limit=self.s.limit)
        if not math.isfinite(val):
            raise NumericalError("non-finite quadrature value", {"beta": self.beta, "panel": (a, b)})
        self.issues.append((a, b, val, err))
        return val

    def panels(self, c):
        lo, hi = max(self.t_lo, -c), min(self.t_hi, c)
        inner = [p for p in (-4.0, -1.0, 0.0, 1.0, 4.0) if lo < p < hi]
        edges = [lo] + inner + [hi]
        central = list(zip(edges[:-1], edges[1:]))
        tails = [(self.t_lo, lo), (hi, self.t_hi)]
        return central, tails

    def integrate(self, fn, c):
        """``int fn(t) w(t) dt`` over the whole support, split into panels."""
        central, tails = self.panels(c)
        g = lambda t: fn(t) * self.weight(t)  # noqa: E731
        return sum(self._quad(g, a, b) for a, b in central + tails)


def marginal_functionals(h, mode=None, beta=1.0, quad=None):
    """Compute ``M, S, I, V, R`` and the bracket for ``f**beta`` by adaptive quadrature.

    Args:
        h: a ``Marginal`` or catalogue spec such as ``"student_t(5)"``.
        mode: overrides ``h.mode`` when given.
        beta: inverse temperature, must exceed the marginal's ``min_beta``.
        quad: optional ``QuadSettings``.

    Returns:
        MarginalFunctionals. ``V`` is set to ``1/beta^2``; the quadrature value
        is kept in ``V_quadrature`` for checking.
    """
    marg = get_marginal(h) if not isinstance(h, Marginal) else h
    if mode is not None and float(mode) != marg.mode:
        marg = Marginal(marg.name, marg.log_f, float(mode), marg.d1, marg.d2, marg.support,
                        marg.symmetric, marg.min_beta, marg.params)
    beta = float(beta)
    if not beta > 0:
        raise DomainError(f"beta must be positive, got {beta}")
    if beta <= marg.min_beta:
        raise DomainError(f"{marg.name}: functionals are finite only for beta > {marg.min_beta:g}")
    settings = quad or QuadSettings()
    ig = _Integrator(marg, beta, settings)

    # widen the central window until the tails carry negligible mass
    c = settings.window
    for _ in range(settings.max_expansions):
        central, tails = ig.panels(c)
        Z = sum(ig._quad(ig.weight, a, b) for a, b in central + tails)
        tail = sum(ig._quad(ig.weight, a, b) for a, b in tails) / Z
        if tail < settings.tail_tol:
            break
        c *= 2.0
    else:
        warnings.warn(f"{marg.name}: tail mass {tail:.2e} above {settings.tail_tol:g} at beta={beta:g}")

    mu = marg.mode

    def hv(t):
        return float(marg.log_f(ig.x(t))) - ig.h0

    def kv(t):
        x = ig.x(t)
        return (x - mu) * float(marg.h1(x))

    def rv(t):
        x = ig.x(t)
        return (x - mu) ** 2 * float(marg.h2(x))

    E = lambda fn: ig.integrate(fn, c) / Z  # noqa: E731
    ig.issues.clear()
    Mc = E(hv)
    S = E(kv)
    I = E(lambda t: (hv(t) - Mc) ** 2)
    Vq = E(lambda t: (hv(t) - Mc) * (kv(t) - S))
    var_k = E(lambda t: (kv(t) - S) ** 2)
    R = E(lambda t: rv(t) - kv(t))
    shift = Mc - 0.5 * S
    direct = -E(lambda t: (hv(t) - 0.5 * kv(t) - shift) ** 2)

    worst = max((err / abs(val) if val else 0.0) for _, _, val, err in ig.issues) if ig.issues else 0.0
    V = 1.0 / beta**2
    out = MarginalFunctionals(
        beta=beta,
        M=Mc + ig.h0,
        S=S,
        I=I,
        V=V,
        R=R,
        bracket=0.5 * V - I + R / (4 * beta),
        V_quadrature=Vq,
        var_k=var_k,
        bracket_direct=direct,
        tail_mass=tail,
        name=marg.name,
    )
    if not all(math.isfinite(v) for v in (out.M, S, I, Vq, var_k, R)):
        raise NumericalError("quadrature produced non-finite functionals", out.as_dict())
    if abs(Vq - V) > settings.fail_rtol * V and worst > settings.fail_rtol:
        raise NumericalError(
            f"{marg.name}: quadrature did not converge at beta={beta:g}",
            dict(out.as_dict(), worst_panel_rel_error=worst),
        )
    return out


# -- ESJD limit ----------------------------------------------------------------


def _bracket_value(bracket):
    return bracket.magnitude if isinstance(bracket, MarginalFunctionals) else float(bracket)


def esjd_limit(ell, bracket):
    """``2 ell^2 Phi(-ell sqrt(b) / sqrt(2))``.

    ``bracket`` is the non-negative magnitude ``b`` (a ``MarginalFunctionals``
    is accepted and contributes ``|bracket|``).
    """
    b = _bracket_value(bracket)
    if b < 0:
        raise DomainError(f"bracket magnitude must be non-negative, got {b!r}")
    ell = np.asarray(ell, dtype=float)
    out = 2.0 * ell**2 * ndtr(-ell * np.sqrt(b) / np.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


def induced_acceptance(ell, bracket):
    """Limiting swap acceptance ``2 Phi(-ell sqrt(b) / sqrt(2))``."""
    b = _bracket_value(bracket)
    return float(2.0 * ndtr(-ell * math.sqrt(b) / math.sqrt(2.0)))


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(fn, a, b, rtol=1e-12, max_iter=500):
    """Maximiser of a unimodal ``fn`` on ``[a, b]`` by golden-section search."""
    c, d = b - _INVPHI * (b - a), a + _INVPHI * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(max_iter):
        if b - a <= rtol * (abs(a) + abs(b)):
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


class OptimalEll(tuple):
    """``(ell_hat, induced_acceptance)`` with a ``degenerate`` flag."""

    def __new__(cls, ell, acc, degenerate=False):
        obj = super().__new__(cls, (ell, acc))
        obj.degenerate = degenerate
        return obj

    @property
    def ell(self):
        return self[0]

    @property
    def acceptance(self):
        return self[1]


def optimal_ell(bracket, zero_tol=0.0):
    """Maximise ``esjd_limit`` over ``ell``.

    Returns ``(ell_hat, induced_acceptance)``. When the bracket magnitude is at
    most ``zero_tol`` the limit grows without bound; the result is then
    ``(inf, nan)`` with ``.degenerate`` set.
    """
    b = _bracket_value(bracket)
    if b < 0:
        raise DomainError(f"bracket magnitude must be non-negative, got {b!r}")
    if b <= zero_tol:
        return OptimalEll(math.inf, math.nan, degenerate=True)
    lo, hi = 1e-6, 50.0 / math.sqrt(b)
    fn = lambda ell: esjd_limit(ell, b)  # noqa: E731
    for _ in range(20):
        ell = golden_section_max(fn, lo, hi)
        if ell > hi * (1 - 1e-6):
            hi *= 4.0
        elif ell < lo * (1 + 1e-6) and lo > 1e-300:
            lo *= 1e-4
        else:
            break
    return OptimalEll(ell, induced_acceptance(ell, b))


# -- cold-order scan -----------------------------------------------------------


@dataclass(frozen=True)
class ColdOrderReport:
    betas: np.ndarray
    brackets: np.ndarray
    slope: float
    expected_k: float
    gamma: float
    intercept: float = float("nan")
    dropped: tuple = ()
    degenerate: bool = False
    name: str = ""

    @property
    def expected_slope(self):
        return -self.expected_k

    def as_dict(self):
        return {
            "name": self.name,
            "betas": self.betas.tolist(),
            "brackets": self.brackets.tolist(),
            "slope": self.slope,
            "expected_slope": self.expected_slope,
            "expected_k": self.expected_k,
            "gamma": self.gamma,
            "dropped": list(self.dropped),
            "degenerate": self.degenerate,
        }


def cold_order_scan(h, mode=None, betas=None, gamma=1.0, quad=None, floor=1e-15):
    """Fit the log-log decay rate of ``|bracket(beta)|`` over a cold grid.

    The reference order is ``k = min(2 + gamma, 3)`` for symmetric marginals
    and ``min(2 + gamma, 5/2)`` otherwise; ``gamma`` is supplied by the caller.
    Points with ``|bracket| < floor`` are dropped with a warning. When fewer
    than two remain the report is flagged degenerate (the Gaussian case).
    """
    marg = get_marginal(h) if not isinstance(h, Marginal) else h
    betas = np.asarray(betas if betas is not None else np.logspace(1, 3, 9), dtype=float)
    if betas.size < 2 or np.any(np.diff(betas) <= 0):
        raise ConfigurationError("probed betas must be strictly increasing")
    if betas[-1] / betas[0] < 100 * (1 - 1e-12):
        raise ConfigurationError("probed betas must span at least two decades")
    if not gamma > 0:
        raise ConfigurationError("gamma must be positive")
    vals = np.array([marginal_functionals(marg, mode, b, quad).bracket for b in betas])
    mags = np.abs(vals)
    keep = mags >= floor
    dropped = tuple(float(b) for b in betas[~keep])
    if dropped:
        warnings.warn(f"{marg.name}: dropped {len(dropped)} bracket values below {floor:g}")
    cap = 3.0 if marg.symmetric else 2.5
    expected_k = min(2.0 + gamma, cap)
    if keep.sum() < 2:
        return ColdOrderReport(betas, vals, math.nan, expected_k, gamma, math.nan, dropped, True, marg.name)
    slope, intercept = np.polyfit(np.log(betas[keep]), np.log(mags[keep]), 1)
    return ColdOrderReport(betas, vals, float(slope), expected_k, float(gamma), float(intercept),
                           dropped, False, marg.name)


# -- schedule tuning -----------------------------------------------------------


@dataclass
class PilotConfig:
    """Settings for ``tune_schedule``.

    Attributes:
        algorithm: ``"pt"`` or ``"quanta"`` swap kernel being tuned for.
        n_chains: pilot chains per level.
        burn_in, n_samples: RWM steps per pilot, discarded / kept.
        target_rate, tol: stop once the pilot swap rate is within ``tol``.
        max_rounds: Robbins-Monro rounds per level before giving up.
        gain: Robbins-Monro step size multiplier.
        initial_log_spacing: starting ``log(beta_l / beta_{l+1})``.
        K: cluster count for QuanTA centres when the target has no known modes.
        seed: pilot RNG seed.
    """

    algorithm: str = "pt"
    n_chains: int = 64
    burn_in: int = 300
    n_samples: int = 300
    target_rate: float = OPTIMAL_ACCEPTANCE
    tol: float = 0.02
    max_rounds: int = 60
    gain: float = 2.0
    initial_log_spacing: float = 1.0
    K: Optional[int] = None
    seed: int = 0
    max_levels: int = 500
    history: list = field(default_factory=list, repr=False)


def _pilot_rate(samples_a, logp_a, samples_b, logp_b, beta_a, beta_b, algorithm, centres, target):
    """Rao-Blackwellised swap acceptance ``mean(min(1, exp(log_r)))`` from paired pilot draws."""
    from .kernels import swap_batch

    Xa = samples_a.reshape(-1, samples_a.shape[-1]).copy()
    Xb = samples_b.reshape(-1, samples_b.shape[-1]).copy()
    la, lb = logp_a.reshape(-1).copy(), logp_b.reshape(-1).copy()
    n = Xa.shape[0]
    use_q = np.full(n, algorithm == "quanta")
    _, log_r = swap_batch(Xa, Xb, la, lb, np.full(n, beta_a), np.full(n, beta_b), use_q,
                          np.full(n, np.inf), centres, target)
    return float(np.mean(np.exp(np.minimum(log_r, 0.0))))


def tune_schedule(target, hottest_beta, pilot_cfg=None):
    """Build a ladder from beta=1 down to ``hottest_beta`` by pilot runs.

    For each new level the log of the log-spacing is updated by Robbins-Monro
    on the pilot swap rate until it lies within ``tol`` of ``target_rate``.
    A direct jump to ``hottest_beta`` is taken as soon as its pilot rate is at
    least ``target_rate - tol``, so a kernel that accepts everything (QuanTA
    on a Gaussian) yields ``{1, hottest_beta}``.
    """
    from .clustering import WeightedPointSet, weighted_kmeans
    from .population import sample_tempered

    cfg = pilot_cfg or PilotConfig()
    if not 0 < hottest_beta < 1:
        raise ConfigurationError("hottest_beta must lie in (0, 1)")
    if cfg.algorithm not in ("pt", "quanta"):
        raise ConfigurationError("pilot algorithm must be 'pt' or 'quanta'")
    rng = np.random.default_rng(cfg.seed)
    d = target.dimension

    modes = target.known_modes
    starts = np.array(modes) if modes else np.zeros((1, d))
    X0 = np.ascontiguousarray(starts[np.arange(cfg.n_chains) % len(starts)], dtype=float)
    scale0 = 2.38 / math.sqrt(d) * _rough_width(target)

    def pilot(beta, X_init, scale_init):
        return sample_tempered(target, beta, X_init, scale_init, cfg.burn_in, cfg.n_samples, rng)

    cur_beta = 1.0
    cur_X, cur_lp, cur_scale = pilot(1.0, X0, scale0)
    centres = None
    if cfg.algorithm == "quanta":
        if modes:
            centres = np.array(modes, dtype=float)
        else:
            pts = cur_X.reshape(-1, d)
            K = cfg.K or 1
            centres = weighted_kmeans(WeightedPointSet(pts, np.ones(len(pts))), K, rng=rng).modes.centres

    betas = [1.0]
    theta = math.log(cfg.initial_log_spacing)
    warned = False
    cfg.history.clear()
    while betas[-1] > hottest_beta and len(betas) < cfg.max_levels:
        last = (cur_X[-1], cur_scale)

        def evaluate(beta):
            scale = cur_scale * math.sqrt(cur_beta / beta)
            X, lp, sc = pilot(beta, np.ascontiguousarray(last[0]), scale)
            rate = _pilot_rate(cur_X, cur_lp, X, lp, cur_beta, beta, cfg.algorithm, centres, target)
            cfg.history.append((cur_beta, beta, rate))
            return rate, X, lp, sc

        rate, X, lp, sc = evaluate(hottest_beta)
        if rate >= cfg.target_rate - cfg.tol:
            betas.append(hottest_beta)
            break
        best = None
        for rnd in range(cfg.max_rounds):
            beta_new = max(cur_beta * math.exp(-math.exp(theta)), hottest_beta)
            rate, X, lp, sc = evaluate(beta_new)
            err = abs(rate - cfg.target_rate)
            if best is None or err < best[0]:
                best = (err, beta_new, X, lp, sc, theta)
            if err <= cfg.tol:
                break
            theta += cfg.gain * (rate - cfg.target_rate) / (rnd + 1) ** 0.6
        else:
            if not warned:
                warnings.warn("schedule tuner did not converge; returning best-effort ladder")
                warned = True
            _, beta_new, X, lp, sc, theta = best
        if beta_new <= hottest_beta * (1 + 1e-12):
            betas.append(hottest_beta)
            break
        betas.append(beta_new)
        cur_beta, cur_X, cur_lp, cur_scale = beta_new, X, lp, sc
    return TemperatureSchedule(np.array(betas))


def _rough_width(target):
    sig = getattr(target, "sigmas", None)
    if sig is not None:
        return float(np.min(sig))
    marg = getattr(target, "marginal", None)
    if marg is not None:
        return 1.0 / math.sqrt(marg.curvature)
    return 1.0
