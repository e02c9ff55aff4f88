import math

import mpmath
import numpy as np
import pytest
from scipy.special import erfc

from quanta import (
    ConfigurationError,
    DomainError,
    GaussianMixtureTarget,
    PilotConfig,
    cold_order_scan,
    composite_schedule,
    esjd_limit,
    geometric_schedule,
    get_marginal,
    marginal_functionals,
    optimal_ell,
    tune_schedule,
)
from quanta.schedule_theory import TemperatureSchedule, golden_section_max


# -- schedules -------------------------------------------------------------------


def test_geometric_examples():
    np.testing.assert_allclose(geometric_schedule(0.0002, 3).betas, [1, 2e-4, 4e-8], rtol=1e-15)
    np.testing.assert_allclose(geometric_schedule(0.002, 4).betas, [1, 0.002, 0.002**2, 0.002**3], rtol=1e-15)
    assert geometric_schedule(0.5, 1).tolist() == [1.0]


@pytest.mark.parametrize("ratio,levels", [(0.0, 3), (1.0, 3), (1.5, 2), (0.5, 0)])
def test_geometric_rejects_bad_input(ratio, levels):
    with pytest.raises(ConfigurationError):
        geometric_schedule(ratio, levels)


def test_composite_reproduces_mixed_ladder():
    s = composite_schedule([(0.08, 4), (0.4, 8)])
    expected = [1, 0.08, 0.08**2, 0.08**3] + [0.4**p for p in range(9, 17)]
    assert len(s) == 12
    np.testing.assert_allclose(s.betas, expected, rtol=1e-14)


def test_composite_single_segment_is_geometric():
    np.testing.assert_array_equal(composite_schedule([(0.3, 5)]).betas, geometric_schedule(0.3, 5).betas)


def test_composite_non_monotone_junction_rejected():
    with pytest.raises(ConfigurationError):
        composite_schedule([(0.08, 4), (0.4, 8, 2)])


def test_schedule_invariants():
    for bad in ([0.5, 0.2], [1.0, 1.0], [1.0, 0.3, 0.4], [1.0, -0.1]):
        with pytest.raises(ConfigurationError):
            TemperatureSchedule(np.array(bad))


# -- functionals -------------------------------------------------------------------


@pytest.mark.parametrize("beta", [0.01, 0.3, 1.0, 10.0, 100.0, 1000.0])
@pytest.mark.parametrize("mu,sigma", [(0.0, 1.0), (3.0, 0.01), (-50.0, 7.0)])
def test_gaussian_closed_forms(beta, mu, sigma):
    f = marginal_functionals(get_marginal(f"gaussian({mu},{sigma})"), beta=beta)
    assert f.I == pytest.approx(1 / (2 * beta**2), rel=1e-9)
    assert abs(f.bracket) < 1e-8
    assert f.S == pytest.approx(-1 / beta, rel=1e-8)


CATALOGUE_GRID = [
    ("gaussian", [0.01, 0.1, 1, 10, 100, 1000]),
    ("gamma(5)", [0.5, 1, 10, 100, 1000]),
    ("student_t(5)", [0.5, 1, 10, 100, 1000]),
    ("student_t(10)", [0.5, 1, 10, 100, 1000]),
]


@pytest.mark.parametrize("name,betas", CATALOGUE_GRID)
def test_score_and_covariance_identities(name, betas):
    for beta in betas:
        f = marginal_functionals(name, beta=beta)
        assert abs(f.S + 1 / beta) <= 1e-8 / beta
        assert abs(f.V_quadrature - 1 / beta**2) <= 1e-8 / beta**2
        assert f.V == 1 / beta**2
        assert f.I >= 0


@pytest.mark.parametrize("name,betas", CATALOGUE_GRID)
def test_variance_identity_for_R(name, betas):
    for beta in betas:
        f = marginal_functionals(name, beta=beta)
        assert abs(f.identity_gap) <= 1e-6 * max(1.0, abs(f.R / (4 * beta)))
        # the bracket therefore equals -Var(h - k/2)
        assert abs(f.bracket - f.bracket_direct) <= 1e-6 * abs(f.bracket_direct) + 1e-12 * f.V


def test_student_t_identity_examples():
    for beta in (1, 10, 100):
        f = marginal_functionals("student_t(5)", beta=beta)
        assert abs(f.R / (4 * beta) - (-0.25 * f.var_k + 0.5 * f.V)) < 1e-6


def _mp_bracket(logf, mode, beta, lo=-mpmath.inf, hi=mpmath.inf):
    """Independent arbitrary-precision bracket via -Var(h - k/2)."""
    mpmath.mp.dps = 40
    h = lambda x: logf(x)  # noqa: E731
    k = lambda x: (x - mode) * mpmath.diff(h, x)  # noqa: E731
    w = lambda x: mpmath.exp(beta * (h(x) - h(mode)))  # noqa: E731
    pts = [lo, mode - 1, mode, mode + 1, hi] if lo == -mpmath.inf else [lo, mode / 2, mode, 2 * mode, hi]
    Z = mpmath.quad(w, pts)
    g = lambda x: h(x) - k(x) / 2  # noqa: E731
    m1 = mpmath.quad(lambda x: g(x) * w(x), pts) / Z
    m2 = mpmath.quad(lambda x: (g(x) - m1) ** 2 * w(x), pts) / Z
    return -float(m2)


@pytest.mark.parametrize("beta", [2.0, 10.0])
def test_bracket_against_mpmath_oracle(beta):
    nu = 10
    logt = lambda x: -(nu + 1) / 2 * mpmath.log(1 + x * x / nu)  # noqa: E731
    ours = marginal_functionals("student_t(10)", beta=beta).bracket
    assert ours == pytest.approx(_mp_bracket(logt, 0, beta), rel=1e-6)
    logg = lambda x: 4 * mpmath.log(x) - x  # noqa: E731
    ours = marginal_functionals("gamma(5)", beta=beta).bracket
    assert ours == pytest.approx(_mp_bracket(logg, 4, beta, 0, mpmath.inf), rel=1e-6)


def test_invalid_beta_and_domain():
    with pytest.raises(DomainError):
        marginal_functionals("gaussian", beta=0.0)
    with pytest.raises(DomainError):
        marginal_functionals("gamma(5)", beta=0.2)  # E[x^-2] under f^beta diverges
    with pytest.raises(ConfigurationError, match="catalogue"):
        get_marginal("laplace")


# -- ESJD limit and its maximiser ---------------------------------------------------


def test_esjd_limit_examples():
    assert esjd_limit(3.0, 0.0) == 9.0
    assert esjd_limit(0.0, 2.0) == 0.0
    # 2 * Phi(-1) with Phi(-1) = erfc(1/sqrt 2)/2
    assert esjd_limit(1.0, 2.0) == pytest.approx(erfc(1 / math.sqrt(2)), rel=1e-14)
    with pytest.raises(DomainError):
        esjd_limit(1.0, -1e-3)


def test_esjd_accepts_functionals_magnitude():
    f = marginal_functionals("student_t(5)", beta=1.0)
    assert f.bracket < 0
    assert esjd_limit(1.0, f) == esjd_limit(1.0, abs(f.bracket))


@pytest.mark.parametrize("b", np.logspace(-6, 6, 13))
def test_optimal_acceptance_is_0_234(b):
    ell, acc = optimal_ell(b)
    assert float(f"{acc:.3g}") == 0.234
    assert 0.2335 <= acc <= 0.2345


def test_optimum_matches_dense_grid():
    b = 0.37
    ell, _ = optimal_ell(b)
    grid = np.linspace(1e-3, 20, 2_000_001)
    best = grid[np.argmax(esjd_limit(grid, b))]
    assert abs(ell - best) / best < 1e-4


def test_bracket_scaling():
    e1, a1 = optimal_ell(2.0)
    e4, a4 = optimal_ell(8.0)
    # a flat maximum: golden-section locates it to about sqrt(machine epsilon)
    assert e4 == pytest.approx(e1 / 2, rel=1e-6)
    assert a4 == pytest.approx(a1, abs=1e-8)


def test_zero_bracket_sentinel():
    opt = optimal_ell(0.0)
    assert opt.ell == math.inf and math.isnan(opt.acceptance) and opt.degenerate
    g = marginal_functionals("gaussian", beta=3.0)
    assert optimal_ell(g, zero_tol=1e-10 * g.V).degenerate


def test_golden_section_on_parabola():
    assert golden_section_max(lambda x: -(x - 1.234) ** 2, -10, 10) == pytest.approx(1.234, abs=1e-9)


# -- cold-order scan ------------------------------------------------------------------


def test_cold_order_gaussian_is_degenerate():
    with pytest.warns(UserWarning, match="dropped"):
        r = cold_order_scan("gaussian", betas=np.logspace(1, 3, 5))
    assert r.degenerate and math.isnan(r.slope)


def test_cold_order_reference_orders():
    t = cold_order_scan("student_t(10)", betas=np.logspace(1, 3, 5), gamma=1.0)
    g = cold_order_scan("gamma(5)", betas=np.logspace(1, 3, 5), gamma=1.0)
    assert t.expected_k == 3.0 and g.expected_k == 2.5
    assert cold_order_scan("gamma(5)", betas=np.logspace(1, 3, 3), gamma=0.2).expected_k == pytest.approx(2.2)
    # the measured decay is at least as fast as the reference order
    assert t.slope <= t.expected_slope + 0.3 and g.slope <= g.expected_slope + 0.3


def test_cold_order_preconditions():
    with pytest.raises(ConfigurationError):
        cold_order_scan("gamma(5)", betas=[10.0, 20.0, 500.0])
    with pytest.raises(ConfigurationError):
        cold_order_scan("gamma(5)", betas=[1000.0, 10.0])


# -- tuner ---------------------------------------------------------------------------


def test_tuner_quanta_single_gaussian_returns_two_levels():
    t = GaussianMixtureTarget([1.0], [2.0], 0.5, 5)
    s = tune_schedule(t, 1e-6, PilotConfig(algorithm="quanta", n_chains=16, burn_in=100, n_samples=100))
    np.testing.assert_allclose(s.betas, [1.0, 1e-6])


def test_tuner_pt_gaussian_hits_target_rate():
    t = GaussianMixtureTarget([1.0], [0.0], 1.0, 10)
    cfg = PilotConfig(seed=2)
    s = tune_schedule(t, 1e-3, cfg)
    assert s.betas[-1] == 1e-3
    accepted = {(a, b): r for a, b, r in cfg.history}
    for a, b in zip(s.betas[:-2], s.betas[1:-1]):
        assert abs(accepted[(a, b)] - 0.234) <= 0.02


def test_tuner_rejects_bad_hottest():
    with pytest.raises(ConfigurationError):
        tune_schedule(GaussianMixtureTarget([1.0], [0.0], 1.0, 1), 1.5)
