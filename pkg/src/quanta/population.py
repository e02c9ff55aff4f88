"""Population engine: N parallel-tempering schemes, the two-phase clustered
swap update and the ``(P2 o P1^k)^T`` composition.

Random streams
--------------
A run seed is expanded with ``SeedSequence.spawn`` into

* one generator per chain ``(scheme, level)``, used only for that chain's RWM
  noise and accept/reject uniforms;
* an orchestration generator, used only for swap adjacency choices and swap
  uniforms;
* a clustering generator, used only for K-means initialisation.

Keeping the clustering draws apart means a QuanTA run with no transformed
adjacencies makes exactly the same swap decisions as a PT run with the same
seed.
"""

import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .clustering import WeightedPointSet, refine_modes, weighted_kmeans
from .diagnostics import TraceLog
from .errors import ConfigurationError, DomainError
from .kernels import rwm_sweeps, swap_batch
from .schedule_theory import OPTIMAL_ACCEPTANCE, TemperatureSchedule


class ChainStreams:
    """Per-chain generators with block-buffered draws.

    Draws are generated ``block`` steps at a time per chain, so a chain's
    sequence of normals and uniforms does not depend on how many sweeps are
    requested per call.
    """

    def __init__(self, seed_seq, n_chains, dimension, block=256):
        self.gens = [np.random.Generator(np.random.PCG64(s)) for s in seed_seq.spawn(n_chains)]
        self.m, self.d, self.block = n_chains, dimension, int(block)
        self._noise = np.empty((n_chains, self.block, dimension))
        self._unif = np.empty((n_chains, self.block))
        self._pos = self.block

    def _refill(self):
        for i, g in enumerate(self.gens):
            g.standard_normal(out=self._noise[i])
            g.random(out=self._unif[i])
        self._pos = 0

    def draw(self, k):
        """Return ``(noise (k, m, d), log_u (k, m))`` for k sweeps."""
        noise = np.empty((k, self.m, self.d))
        unif = np.empty((k, self.m))
        t = 0
        while t < k:
            if self._pos == self.block:
                self._refill()
            take = min(k - t, self.block - self._pos)
            noise[t : t + take] = self._noise[:, self._pos : self._pos + take].transpose(1, 0, 2)
            unif[t : t + take] = self._unif[:, self._pos : self._pos + take].T
            self._pos += take
            t += take
        with np.errstate(divide="ignore"):
            return noise, np.log(unif)


@dataclass
class PopulationState:
    """Positions ``(N, n+1, d)`` of every chain plus cached ``log pi`` values."""

    positions: np.ndarray
    schedule: TemperatureSchedule
    target: object
    log_density: np.ndarray
    streams: ChainStreams
    orchestration_rng: np.random.Generator
    cluster_rng: np.random.Generator
    swap_proposals: np.ndarray = None
    swap_acceptances: np.ndarray = None
    within_proposals: np.ndarray = None
    within_acceptances: np.ndarray = None
    last_modes: Optional[np.ndarray] = None

    def __post_init__(self):
        N, L, d = self.positions.shape
        if L != len(self.schedule):
            raise ConfigurationError("positions must have one column per temperature level")
        if not np.all(np.isfinite(self.positions)):
            raise DomainError("chain positions must be finite")
        self.reset_counters()

    @classmethod
    def initialise(cls, target, schedule, n_schemes, start, seed=None, block=256):
        """All chains start at ``start`` (scalar broadcast, d-vector, or full array)."""
        if int(n_schemes) < 1:
            raise ConfigurationError("need at least one scheme")
        N, L, d = int(n_schemes), len(schedule), target.dimension
        pos = np.empty((N, L, d))
        pos[...] = np.asarray(start, dtype=float)
        chain_ss, orch_ss, clus_ss = np.random.SeedSequence(seed).spawn(3)
        logp = np.asarray(target.log_density(pos.reshape(-1, d)), dtype=float).reshape(N, L)
        if not np.all(np.isfinite(logp)):
            raise DomainError("start position lies outside the target's support")
        return cls(
            positions=pos,
            schedule=schedule,
            target=target,
            log_density=logp,
            streams=ChainStreams(chain_ss, N * L, d, block),
            orchestration_rng=np.random.default_rng(orch_ss),
            cluster_rng=np.random.default_rng(clus_ss),
        )

    @property
    def n_schemes(self):
        return self.positions.shape[0]

    @property
    def n_levels(self):
        return self.positions.shape[1]

    @property
    def dimension(self):
        return self.positions.shape[2]

    def reset_counters(self):
        n = self.n_levels - 1
        self.swap_proposals = np.zeros(n, dtype=np.int64)
        self.swap_acceptances = np.zeros(n, dtype=np.int64)
        self.within_proposals = np.zeros(self.n_levels, dtype=np.int64)
        self.within_acceptances = np.zeros(self.n_levels, dtype=np.int64)


@dataclass
class SweepConfig:
    """Settings of one population run.

    Attributes:
        k: within-temperature sweeps per swap phase.
        T: composite iterations.
        algorithm: ``"quanta"`` or ``"pt"``.
        quanta_levels: adjacency indices using the transformation swap; all
            others use the plain swap. ``None`` means every adjacency.
        K: number of clusters.
        refine: polish cluster centres into local maxima; defaults to whether
            the target has a gradient.
        burn_in: iterations excluded from counters (and used for scale
            adaptation); default 10% of T.
        adapt: Robbins-Monro scale adaptation toward 0.234 during burn-in.
        thin: record cold samples every ``thin`` iterations.
        record: ``"first"`` coordinate or ``"all"`` coordinates.
        mode_finder: optional ``fn(points, weights, rng) -> (K', d) centres``
            replacing clustering (used for oracle-centre experiments).
    """

    k: int = 3
    T: int = 1
    algorithm: str = "quanta"
    quanta_levels: Optional[frozenset] = None
    K: int = 1
    refine: Optional[bool] = None
    burn_in: Optional[int] = None
    adapt: bool = True
    thin: int = 1
    record: str = "first"
    kmeans_max_iter: int = 50
    refine_tol: float = 1e-8
    refine_steps: int = 200
    mode_finder: Optional[Callable] = None
    target_rate: float = OPTIMAL_ACCEPTANCE

    def validate(self, n_levels, n_points=None):
        if self.k < 1 or self.T < 1:
            raise ConfigurationError("k and T must be at least 1")
        if self.algorithm not in ("pt", "quanta"):
            raise ConfigurationError(f"algorithm must be 'pt' or 'quanta', got {self.algorithm!r}")
        if self.thin < 1:
            raise ConfigurationError("thin must be at least 1")
        if self.record not in ("first", "all"):
            raise ConfigurationError("record must be 'first' or 'all'")
        if self.quanta_levels is not None:
            bad = [l for l in self.quanta_levels if not 0 <= int(l) < n_levels - 1]
            if bad:
                raise ConfigurationError(f"quanta_levels {bad} outside 0..{n_levels - 2}")
        if self.burn_in is not None and not 0 <= self.burn_in < self.T:
            raise ConfigurationError("burn_in must lie in [0, T)")
        if self.K < 1:
            raise ConfigurationError("K must be at least 1")
        if n_points is not None and self.algorithm == "quanta" and self.mode_finder is None and self.K > n_points:
            raise ConfigurationError(f"K={self.K} exceeds the {n_points} points available for clustering")

    def quanta_mask(self, n_levels):
        mask = np.zeros(max(n_levels - 1, 0), dtype=bool)
        if self.algorithm == "quanta":
            if self.quanta_levels is None:
                mask[:] = True
            else:
                mask[[int(l) for l in self.quanta_levels]] = True
        return mask

    def echo(self):
        return {
            "k": self.k,
            "T": self.T,
            "algorithm": self.algorithm,
            "quanta_levels": None if self.quanta_levels is None else sorted(int(l) for l in self.quanta_levels),
            "K": self.K,
            "refine": self.refine,
            "burn_in": self.burn_in,
            "adapt": self.adapt,
            "thin": self.thin,
            "record": self.record,
        }


def _check_scales(scales, n_levels):
    s = np.asarray(scales, dtype=float).reshape(-1)
    if s.size == 1:
        s = np.repeat(s, n_levels)
    if s.size != n_levels:
        raise ConfigurationError(f"need {n_levels} per-level scales, got {s.size}")
    if not np.all((s > 0) & np.isfinite(s)):
        raise ConfigurationError("RWM scales must be positive and finite")
    return s


def default_scales(target, schedule, width=None):
    """``2.38 / sqrt(d) * width / sqrt(beta)`` per level."""
    if width is None:
        sig = getattr(target, "sigmas", None)
        width = float(np.min(sig)) if sig is not None else 1.0
    return 2.38 / np.sqrt(target.dimension) * width / np.sqrt(schedule.betas)


def _within(state, scales, k):
    """k RWM sweeps of every chain; returns acceptance indicators (k, N, L)."""
    N, L, d = state.positions.shape
    X = state.positions.reshape(N * L, d)
    logp = state.log_density.reshape(N * L)
    beta = np.tile(state.schedule.betas, N)
    scale = np.tile(scales, N)
    noise, log_u = state.streams.draw(k)
    acc = rwm_sweeps(X, logp, beta, scale, noise, log_u, state.target)
    return np.asarray(acc).reshape(k, N, L)


def within_sweep(state, scales, k=1):
    """Apply ``k`` RWM steps to every chain at its own level's scale (kernel P1)."""
    scales = _check_scales(scales, state.n_levels)
    acc = _within(state, scales, k)
    state.within_proposals += k * state.n_schemes
    state.within_acceptances += acc.sum(axis=(0, 1)).astype(np.int64)
    return state


def find_modes(state, schemes, cfg):
    """Cluster the positions of ``schemes`` (all levels, weights beta) into centres."""
    pts = state.positions[schemes].reshape(-1, state.dimension)
    w = np.tile(state.schedule.betas, len(schemes))
    if cfg.mode_finder is not None:
        return np.atleast_2d(np.asarray(cfg.mode_finder(pts, w, state.cluster_rng), dtype=float))
    K = min(cfg.K, len(pts))
    res = weighted_kmeans(WeightedPointSet(pts, w), K, max_iter=cfg.kmeans_max_iter, rng=state.cluster_rng)
    refine = cfg.refine if cfg.refine is not None else state.target.has_gradient
    if refine:
        return refine_modes(res.modes, state.target, cfg.refine_steps, cfg.refine_tol).centres
    return res.modes.centres


def _swap_schemes(state, dst, centres, mask):
    n = state.n_levels - 1
    orch = state.orchestration_rng
    l = orch.integers(0, n, size=len(dst))
    with np.errstate(divide="ignore"):
        log_u = np.log(orch.random(len(dst)))
    use_q = mask[l]
    betas = state.schedule.betas
    Xa = np.ascontiguousarray(state.positions[dst, l])
    Xb = np.ascontiguousarray(state.positions[dst, l + 1])
    la = state.log_density[dst, l].copy()
    lb = state.log_density[dst, l + 1].copy()
    accepted, _ = swap_batch(Xa, Xb, la, lb, betas[l], betas[l + 1], use_q, log_u, centres, state.target)
    state.positions[dst, l], state.positions[dst, l + 1] = Xa, Xb
    state.log_density[dst, l], state.log_density[dst, l + 1] = la, lb
    state.swap_proposals += np.bincount(l, minlength=n)
    state.swap_acceptances += np.bincount(l, weights=np.asarray(accepted, dtype=float), minlength=n).astype(np.int64)


def swap_phase(state, cfg):
    """One swap proposal per scheme, in two phases (kernel P2).

    Phase 1 clusters the first ``N // 2`` schemes (every level, weighted by
    beta) and proposes one swap in each remaining scheme at a uniformly drawn
    adjacency; phase 2 swaps the roles. The clustering input never contains
    the schemes whose swaps it centres. PT runs skip clustering, so a single
    scheme is allowed and receives one swap per call.
    """
    n = state.n_levels - 1
    if n < 1:
        return state
    mask = cfg.quanta_mask(state.n_levels)
    N = state.n_schemes
    halves = (np.arange(0, N // 2), np.arange(N // 2, N))
    needs_modes = bool(mask.any())
    if needs_modes and N < 2:
        raise ConfigurationError("the clustered swap update needs at least two schemes")
    for src, dst in ((halves[0], halves[1]), (halves[1], halves[0])):
        if dst.size == 0:
            continue
        centres = find_modes(state, src, cfg) if needs_modes else None
        if centres is not None:
            state.last_modes = centres
        _swap_schemes(state, dst, centres, mask)
    return state


def run(state, cfg, scales=None, seed=None):
    """T repetitions of ``k`` within sweeps followed by one swap phase.

    Returns ``(state, TraceLog)``. Scales are adapted on the log scale toward
    ``cfg.target_rate`` per level during burn-in and frozen afterwards;
    counters cover post-burn-in iterations only.
    """
    cfg.validate(state.n_levels)
    notes = []
    do_swaps = True
    if cfg.algorithm == "quanta" and cfg.quanta_mask(state.n_levels).any():
        if state.n_schemes < 2:
            msg = "QuanTA needs at least two schemes; swap phase skipped"
            warnings.warn(msg)
            notes.append(msg)
            do_swaps = False
        else:
            cfg.validate(state.n_levels, (state.n_schemes // 2) * state.n_levels)
    scales = _check_scales(default_scales(state.target, state.schedule) if scales is None else scales, state.n_levels)
    log_scale = np.log(scales)
    burn = int(0.1 * cfg.T) if cfg.burn_in is None else int(cfg.burn_in)

    rec_dims = 1 if cfg.record == "first" else state.dimension
    rec_iters = np.arange(0, cfg.T, cfg.thin)
    cold = np.empty((rec_iters.size, state.n_schemes, rec_dims))
    state.reset_counters()
    r = 0
    t0 = time.perf_counter()
    for t in range(cfg.T):
        if t == burn:
            state.reset_counters()
        acc = _within(state, np.exp(log_scale), cfg.k)
        if t >= burn:
            state.within_proposals += cfg.k * state.n_schemes
            state.within_acceptances += acc.sum(axis=(0, 1)).astype(np.int64)
        elif cfg.adapt:
            rate = acc.mean(axis=(0, 1))
            log_scale += (rate - cfg.target_rate) / (t + 1) ** 0.6
        if do_swaps:
            swap_phase(state, cfg)
        if t % cfg.thin == 0:
            cold[r] = state.positions[:, 0, :rec_dims]
            r += 1
    seconds = max(time.perf_counter() - t0, 1e-9)

    log = TraceLog(
        betas=state.schedule.betas.copy(),
        n_schemes=state.n_schemes,
        algorithm=cfg.algorithm,
        record_iterations=rec_iters,
        cold_samples=cold,
        swap_proposals=state.swap_proposals.copy(),
        swap_acceptances=state.swap_acceptances.copy(),
        within_proposals=state.within_proposals.copy(),
        within_acceptances=state.within_acceptances.copy(),
        seconds=seconds,
        burn_in=burn,
        scales=np.exp(log_scale),
        config=cfg.echo(),
        seed=seed,
        warnings=notes,
    )
    return state, log


def sample_tempered(target, beta, X0, scale, burn_in, n_samples, rng, target_rate=OPTIMAL_ACCEPTANCE):
    """Independent RWM chains at one inverse temperature (used by pilot runs).

    Returns ``(samples (n_samples, m, d), logp (n_samples, m), scale)`` where
    the scale was adapted toward ``target_rate`` during burn-in.
    """
    X = np.array(X0, dtype=float, copy=True)
    m, d = X.shape
    logp = np.asarray(target.log_density(X), dtype=float).reshape(m)
    b = np.full(m, float(beta))
    log_s = np.log(float(scale))
    for t in range(burn_in):
        acc = rwm_sweeps(X, logp, b, np.full(m, np.exp(log_s)), rng.standard_normal((1, m, d)),
                         np.log(rng.random((1, m))), target)
        log_s += 2.0 * (acc.mean() - target_rate) / (t + 1) ** 0.6
    out = np.empty((n_samples, m, d))
    out_lp = np.empty((n_samples, m))
    s = np.full(m, np.exp(log_s))
    noise = rng.standard_normal((n_samples, m, d))
    log_u = np.log(rng.random((n_samples, m)))
    for t in range(n_samples):
        rwm_sweeps(X, logp, b, s, noise[t : t + 1], log_u[t : t + 1], target)
        out[t], out_lp[t] = X, logp
    return out, out_lp, float(np.exp(log_s))
