"""Catalogue of one-dimensional marginal log-densities.

Each entry carries the log-density and its first two derivatives in closed
form, its mode, support and symmetry. The catalogue feeds both
``ProductMarginalTarget`` and the quadrature routines in ``schedule_theory``.
"""

import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln

from .errors import ConfigurationError


@dataclass(frozen=True)
class Marginal:
    """A unimodal 1-D density ``f`` described through ``h = log f``.

    Attributes:
        name: Catalogue label, e.g. ``"student_t(5)"``.
        log_f: Vectorised ``h(x)``.
        mode: Maximiser of ``f``.
        d1, d2: Optional analytic ``h'`` and ``h''``; finite differences are
            used when absent.
        support: Open interval ``(lo, hi)`` carrying the mass.
        symmetric: Whether ``f`` is symmetric about its mode.
        min_beta: ``f**beta`` and every functional used downstream are finite
            only for ``beta > min_beta``.
    """

    name: str
    log_f: Callable
    mode: float
    d1: Optional[Callable] = None
    d2: Optional[Callable] = None
    support: tuple = (-np.inf, np.inf)
    symmetric: bool = False
    min_beta: float = 0.0
    params: dict = field(default_factory=dict)

    def h1(self, x):
        if self.d1 is not None:
            return self.d1(x)
        return _central_diff(self.log_f, x, order=1)

    def h2(self, x):
        if self.d2 is not None:
            return self.d2(x)
        return _central_diff(self.log_f, x, order=2)

    @property
    def curvature(self):
        """``-h''(mode)``, the precision of the Laplace approximation."""
        return float(-self.h2(np.asarray(self.mode, dtype=float)))


def _central_diff(fn, x, order):
    x = np.asarray(x, dtype=float)
    step = 1e-5 * (1.0 + np.abs(x))
    fm2, fm1 = fn(x - 2 * step), fn(x - step)
    fp1, fp2 = fn(x + step), fn(x + 2 * step)
    if order == 1:
        return (fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * step)
    f0 = fn(x)
    return (-fm2 + 16 * fm1 - 30 * f0 + 16 * fp1 - fp2) / (12 * step**2)


def gaussian(mu=0.0, sigma=1.0):
    mu, sigma = float(mu), float(sigma)
    c = -np.log(sigma) - 0.5 * np.log(2 * np.pi)
    return Marginal(
        name=f"gaussian({mu:g},{sigma:g})",
        log_f=lambda x: c - 0.5 * ((np.asarray(x) - mu) / sigma) ** 2,
        mode=mu,
        d1=lambda x: -(np.asarray(x) - mu) / sigma**2,
        d2=lambda x: np.full(np.shape(x), -1.0 / sigma**2),
        symmetric=True,
        params={"mu": mu, "sigma": sigma},
    )


def student_t(nu):
    nu = float(nu)
    if nu <= 0:
        raise ConfigurationError("student_t needs nu > 0")
    c = gammaln((nu + 1) / 2) - gammaln(nu / 2) - 0.5 * np.log(nu * np.pi)
    a = (nu + 1) / 2

    def d2(x):
        x = np.asarray(x, dtype=float)
        return -(nu + 1) * (nu - x * x) / (nu + x * x) ** 2

    return Marginal(
        name=f"student_t({nu:g})",
        log_f=lambda x: c - a * np.log1p(np.asarray(x, dtype=float) ** 2 / nu),
        mode=0.0,
        d1=lambda x: -(nu + 1) * np.asarray(x) / (nu + np.asarray(x) ** 2),
        d2=d2,
        symmetric=True,
        min_beta=1.0 / (nu + 1),
        params={"nu": nu},
    )


def gamma(shape, rate=1.0):
    s, r = float(shape), float(rate)
    if s <= 1:
        raise ConfigurationError("gamma marginal needs shape > 1 for an interior mode")
    c = s * np.log(r) - gammaln(s)
    return Marginal(
        name=f"gamma({s:g})" if r == 1.0 else f"gamma({s:g},{r:g})",
        log_f=lambda x: c + (s - 1) * np.log(x) - r * np.asarray(x),
        mode=(s - 1) / r,
        d1=lambda x: (s - 1) / np.asarray(x) - r,
        d2=lambda x: -(s - 1) / np.asarray(x) ** 2,
        support=(0.0, np.inf),
        symmetric=False,
        # Var(k) and R need E[x^-2] under f^beta
        min_beta=1.0 / (s - 1),
        params={"shape": s, "rate": r},
    )


CATALOGUE = {"gaussian": gaussian, "normal": gaussian, "student_t": student_t, "gamma": gamma}

_SPEC_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\(([^)]*)\))?\s*$")


def get_marginal(spec, **params):
    """Look up a catalogue marginal.

    ``spec`` is a name (``"gamma"``) with ``params`` as keywords, or a compact
    string such as ``"student_t(5)"`` / ``"gaussian(0,2)"``.
    """
    if isinstance(spec, Marginal):
        return spec
    m = _SPEC_RE.match(str(spec).lower())
    if not m or m.group(1) not in CATALOGUE:
        raise ConfigurationError(
            f"unknown marginal {spec!r}; catalogue: {', '.join(sorted(CATALOGUE))}"
        )
    args = [float(a) for a in m.group(2).split(",")] if m.group(2) else []
    return CATALOGUE[m.group(1)](*args, **params)
