import itertools
import math

import numpy as np
import pytest

from quanta import (
    ConfigurationError,
    GaussianMixtureTarget,
    PopulationState,
    SweepConfig,
    TargetDensity,
    geometric_schedule,
    run,
    swap_phase,
    within_sweep,
)
from quanta.kernels import quanta_proposal
from quanta.population import ChainStreams
from quanta.schedule_theory import TemperatureSchedule


def test_streams_do_not_depend_on_chunking():
    a = ChainStreams(np.random.SeedSequence(5), 3, 2, block=4)
    b = ChainStreams(np.random.SeedSequence(5), 3, 2, block=4)
    n1, u1 = a.draw(3)
    n2, u2 = a.draw(6)
    n, u = b.draw(9)
    np.testing.assert_array_equal(np.concatenate([n1, n2]), n)
    np.testing.assert_array_equal(np.concatenate([u1, u2]), u)


def test_single_chain_single_level_is_one_rwm_step():
    t = GaussianMixtureTarget([1.0], [0.0], 1.0, 2)
    st = PopulationState.initialise(t, TemperatureSchedule([1.0]), 1, [0.3, -0.2], seed=11, block=8)
    x0 = st.positions[0, 0].copy()
    # rebuild the chain's stream: first block of normals, then first block of uniforms
    g = np.random.Generator(np.random.PCG64(np.random.SeedSequence(11).spawn(3)[0].spawn(1)[0]))
    z = g.standard_normal((8, 2))[0]
    u = g.random(8)[0]
    within_sweep(st, [0.9])
    y = x0 + 0.9 * z
    accept = math.log(u) < t.log_density(y) - t.log_density(x0)
    np.testing.assert_array_equal(st.positions[0, 0], y if accept else x0)
    assert st.within_proposals[0] == 1 and st.within_acceptances[0] == int(accept)


def test_huge_scale_on_peaked_target_leaves_state_unchanged():
    t = GaussianMixtureTarget([1.0], [0.0], 0.01, 1)
    st = PopulationState.initialise(t, geometric_schedule(0.5, 2), 3, 0.0, seed=1)
    before = st.positions.copy()
    within_sweep(st, [1e6, 1e6], k=5)
    np.testing.assert_array_equal(st.positions, before)
    assert st.within_acceptances.sum() == 0


def test_non_positive_scale_rejected():
    t = GaussianMixtureTarget([1.0], [0.0], 1.0, 1)
    st = PopulationState.initialise(t, geometric_schedule(0.5, 2), 1, 0.0, seed=1)
    with pytest.raises(ConfigurationError):
        within_sweep(st, [1.0, 0.0])
    with pytest.raises(ConfigurationError):
        within_sweep(st, [1.0, 1.0, 1.0])


class _Spy:
    """Mode finder returning the exact mode and recording its input."""

    def __init__(self, centre):
        self.centre, self.calls = np.atleast_2d(centre), []

    def __call__(self, points, weights, rng):
        self.calls.append((points.copy(), weights.copy()))
        return self.centre


def test_two_schemes_one_swap_each_and_disjoint_clustering_input():
    t = GaussianMixtureTarget([1.0], [0.0], 1.0, 1)
    sched = geometric_schedule(0.3, 4)
    st = PopulationState.initialise(t, sched, 2, 0.0, seed=3)
    st.positions[0, :, 0] = [1.0, 2.0, 3.0, 4.0]
    st.positions[1, :, 0] = [-1.0, -2.0, -3.0, -4.0]
    st.log_density[:] = t.log_density(st.positions.reshape(-1, 1)).reshape(2, 4)
    spy = _Spy([[0.0]])
    snapshot = st.positions.copy()
    swap_phase(st, SweepConfig(algorithm="quanta", mode_finder=spy))
    assert st.swap_proposals.sum() == 2
    assert len(spy.calls) == 2
    # phase 1 clusters scheme 0 only (all levels, weights beta)
    np.testing.assert_array_equal(spy.calls[0][0][:, 0], snapshot[0, :, 0])
    np.testing.assert_array_equal(spy.calls[0][1], sched.betas)
    # phase 2 clusters scheme 1 only (after its phase-1 swap), never scheme 0
    assert not set(spy.calls[1][0][:, 0]) & set(snapshot[0, :, 0])


def test_single_mode_gaussian_every_swap_accepted():
    t = GaussianMixtureTarget([1.0], [1.0], 0.01, 5)
    sched = geometric_schedule(1e-3, 4)
    st = PopulationState.initialise(t, sched, 10, 1.0, seed=2)
    _, log = run(st, SweepConfig(k=2, T=200, algorithm="quanta", K=1))
    assert log.swap_proposals.sum() > 0
    np.testing.assert_array_equal(log.swap_acceptances, log.swap_proposals)


def test_empty_quanta_levels_matches_pt_run(five_mode):
    sched = geometric_schedule(2e-4, 3)
    logs = []
    for cfg in (SweepConfig(k=3, T=150, algorithm="quanta", quanta_levels=frozenset(), K=5),
                SweepConfig(k=3, T=150, algorithm="pt")):
        st = PopulationState.initialise(five_mode, sched, 6, -200.0, seed=9)
        st, log = run(st, cfg)
        logs.append((st.positions.copy(), log))
    np.testing.assert_array_equal(logs[0][0], logs[1][0])
    np.testing.assert_array_equal(logs[0][1].swap_acceptances, logs[1][1].swap_acceptances)
    np.testing.assert_array_equal(logs[0][1].swap_proposals, logs[1][1].swap_proposals)
    np.testing.assert_array_equal(logs[0][1].cold_samples, logs[1][1].cold_samples)


def test_identical_seeds_give_identical_traces(five_mode):
    sched = geometric_schedule(2e-4, 3)

    def go(seed):
        st = PopulationState.initialise(five_mode, sched, 8, -200.0, seed=seed)
        return run(st, SweepConfig(k=3, T=120, algorithm="quanta", K=5))[1]

    a, b, c = go(4), go(4), go(5)
    for field in ("cold_samples", "swap_proposals", "swap_acceptances", "within_acceptances", "scales"):
        np.testing.assert_array_equal(getattr(a, field), getattr(b, field))
    assert not np.array_equal(a.cold_samples, c.cold_samples)


def test_degenerate_single_scheme_quanta_skips_swaps():
    t = GaussianMixtureTarget([1.0], [0.0], 1.0, 1)
    st = PopulationState.initialise(t, geometric_schedule(0.5, 2), 1, 0.0, seed=0)
    with pytest.warns(UserWarning, match="swap phase skipped"):
        _, log = run(st, SweepConfig(k=1, T=1, algorithm="quanta"))
    assert log.swap_proposals.sum() == 0
    np.testing.assert_array_equal(log.within_proposals, [1, 1])
    assert log.warnings


def test_single_scheme_pt_swaps_every_iteration():
    t = GaussianMixtureTarget([1.0], [0.0], 1.0, 1)
    st = PopulationState.initialise(t, geometric_schedule(0.5, 3), 1, 0.0, seed=0)
    _, log = run(st, SweepConfig(k=1, T=50, algorithm="pt", burn_in=0))
    assert log.swap_proposals.sum() == 50


def test_run_records_thinned_cold_samples():
    t = GaussianMixtureTarget([1.0], [0.0], 1.0, 3)
    st = PopulationState.initialise(t, geometric_schedule(0.5, 2), 4, 0.0, seed=0)
    _, log = run(st, SweepConfig(k=1, T=10, algorithm="pt", thin=3, record="all"))
    assert log.cold_samples.shape == (4, 4, 3)
    np.testing.assert_array_equal(log.record_iterations, [0, 3, 6, 9])
    assert log.burn_in == 1 and log.seconds > 0


def test_burn_in_adapts_scales_toward_target_rate():
    t = GaussianMixtureTarget([1.0], [0.0], 1.0, 10)
    sched = geometric_schedule(0.1, 3)
    st = PopulationState.initialise(t, sched, 20, 0.0, seed=0)
    _, log = run(st, SweepConfig(k=3, T=2000, algorithm="pt", burn_in=1000), scales=[5.0, 5.0, 5.0])
    rates = log.within_acceptances / log.within_proposals
    np.testing.assert_allclose(rates, 0.234, atol=0.04)


@pytest.mark.parametrize(
    "cfg",
    [
        SweepConfig(k=0),
        SweepConfig(T=0),
        SweepConfig(algorithm="other"),
        SweepConfig(quanta_levels=frozenset({5})),
        SweepConfig(T=10, burn_in=10),
        SweepConfig(K=50),
    ],
)
def test_config_validation(cfg):
    t = GaussianMixtureTarget([1.0], [0.0], 1.0, 1)
    st = PopulationState.initialise(t, geometric_schedule(0.5, 3), 4, 0.0, seed=0)
    with pytest.raises(ConfigurationError):
        run(st, cfg)


# -- composite-kernel stationarity on a lattice ---------------------------------------

M = 7
BETAS = (1.0, 0.25)  # expansion factor 2, so scaled lattice points stay integer or fall off-grid
_LOGW = np.log(0.6 * np.exp(-((np.arange(M) - 1.0) ** 2) / 2) + 0.4 * np.exp(-((np.arange(M) - 5.0) ** 2) / 1.5))


def _lattice_log_density(X):
    out = np.full(X.shape[0], -np.inf)
    for i, v in enumerate(X[:, 0]):
        if float(v).is_integer() and 0 <= v < M:
            out[i] = _LOGW[int(v)]
    return out


LATTICE = TargetDensity(1, log_density=_lattice_log_density)


def _finder(points, weights, rng):
    # cluster centre = beta-weighted mean rounded onto the lattice (K = 1)
    return np.array([[np.rint((points[:, 0] * weights).sum() / weights.sum())]])


def _within_matrix(beta):
    P = np.zeros((M, M))
    for x in range(M):
        for y in (x - 1, x + 1):
            if 0 <= y < M:
                P[x, y] = 0.5 * min(1.0, math.exp(beta * (_LOGW[y] - _LOGW[x])))
        P[x, x] = 1.0 - P[x].sum()
    return P


def _phase_matrix(states, index, src, dst):
    P = np.zeros((len(states), len(states)))
    for s, st in enumerate(states):
        pos = np.array(st, dtype=float).reshape(2, 2)
        c = _finder(pos[src][:, None], np.array(BETAS), None)
        new_i, new_j, lr = quanta_proposal(pos[dst, 0:1], pos[dst, 1:2], BETAS[0], BETAS[1], c, LATTICE.log_density)
        p = min(1.0, math.exp(lr)) if np.isfinite(lr) else 0.0
        if p > 0:
            moved = pos.copy()
            moved[dst] = [new_i[0], new_j[0]]
            P[s, index[tuple(int(v) for v in moved.reshape(-1))]] += p
        P[s, s] += 1.0 - p
    return P


def build_lattice_system():
    states = list(itertools.product(range(M), repeat=4))  # (x10, x11, x20, x21)
    index = {s: i for i, s in enumerate(states)}
    logpi = np.array([BETAS[0] * _LOGW[a] + BETAS[1] * _LOGW[b] + BETAS[0] * _LOGW[c] + BETAS[1] * _LOGW[d]
                      for a, b, c, d in states])
    pi = np.exp(logpi - logpi.max())
    pi /= pi.sum()
    W = [_within_matrix(b) for b in BETAS]
    P1 = np.kron(np.kron(W[0], W[1]), np.kron(W[0], W[1]))
    Q1 = _phase_matrix(states, index, src=0, dst=1)
    Q2 = _phase_matrix(states, index, src=1, dst=0)
    return states, index, pi, P1, Q1 @ Q2


@pytest.fixture(scope="module")
def lattice_system():
    return build_lattice_system()


def lattice_stationarity_tv(system):
    states, _, pi, P1, P2 = system
    P = np.linalg.matrix_power(P1, 3) @ P2
    return 0.5 * np.abs(pi @ P - pi).sum(), np.abs(P2 - np.eye(len(states))).sum()


def test_composite_kernel_leaves_target_invariant(lattice_system):
    tv, moved = lattice_stationarity_tv(lattice_system)
    assert moved > 1.0  # the swap phase really moves mass
    assert tv < 1e-6


def test_swap_phase_matches_lattice_transition_matrix(lattice_system):
    states, index, _, _, P2 = lattice_system
    cfg = SweepConfig(algorithm="quanta", mode_finder=_finder)
    rng = np.random.default_rng(0)
    candidates = [i for i in range(len(states)) if P2[i, i] < 0.9]
    for s in rng.choice(candidates, size=3, replace=False):
        st0 = np.array(states[s], dtype=float).reshape(2, 2, 1)
        counts = np.zeros(len(states))
        st = PopulationState.initialise(LATTICE, TemperatureSchedule(np.array(BETAS)), 2, st0, seed=int(s))
        reps = 3000
        for _ in range(reps):
            st.positions[:] = st0
            st.log_density[:] = LATTICE.log_density(st0.reshape(-1, 1)).reshape(2, 2)
            swap_phase(st, cfg)
            counts[index[tuple(int(v) for v in st.positions.reshape(-1))]] += 1
        p = P2[s]
        se = np.sqrt(p * (1 - p) / reps) + 1e-12
        assert np.all(np.abs(counts / reps - p) <= 5 * se + 1e-9)
