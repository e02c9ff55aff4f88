"""Run traces and the estimators computed from them: swap acceptance per
adjacency, empirical ESJD, running mode-weight estimates and the
run-time-standardised A/R cost metric."""

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass
class TraceLog:
    """Everything a population run records.

    ``cold_samples`` has shape (records, schemes, recorded_dims) and holds the
    level-0 positions after each recorded swap phase. Swap and within-move
    counters cover post-burn-in iterations only.
    """

    betas: np.ndarray
    n_schemes: int
    algorithm: str
    record_iterations: np.ndarray
    cold_samples: np.ndarray
    swap_proposals: np.ndarray
    swap_acceptances: np.ndarray
    within_proposals: np.ndarray
    within_acceptances: np.ndarray
    seconds: float
    burn_in: int = 0
    scales: Optional[np.ndarray] = None
    config: dict = field(default_factory=dict)
    seed: Optional[int] = None
    warnings: list = field(default_factory=list)
    status: str = "ok"

    def __post_init__(self):
        if np.any(self.swap_acceptances > self.swap_proposals):
            raise ValueError("swap acceptances exceed proposals")
        if np.any(self.within_acceptances > self.within_proposals):
            raise ValueError("within-move acceptances exceed proposals")
        if not self.seconds > 0:
            raise ValueError("run time must be positive")

    @property
    def n_levels(self):
        return len(self.betas)


@dataclass
class WeightEstimate:
    mode_index: int
    lower: float
    upper: float
    series: np.ndarray
    burn_in: int

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("band needs lower < upper")

    @property
    def final(self):
        return float(self.series[-1]) if self.series.size else float("nan")


def _rates(acc, prop):
    acc = np.asarray(acc, dtype=float)
    prop = np.asarray(prop, dtype=float)
    out = np.full(prop.shape, np.nan)
    ok = prop > 0
    out[ok] = acc[ok] / prop[ok]
    return out


def swap_rates(log):
    """Acceptance fraction per adjacency; NaN flags an adjacency never proposed."""
    return _rates(log.swap_acceptances, log.swap_proposals)


def within_rates(log):
    return _rates(log.within_acceptances, log.within_proposals)


def empirical_esjd(log, schedule=None):
    """Per adjacency, squared inverse-temperature gap times acceptance rate."""
    betas = np.asarray(getattr(schedule, "betas", schedule) if schedule is not None else log.betas, dtype=float)
    return np.diff(betas) ** 2 * swap_rates(log)


def mode_weight_series(samples, lower, upper, burn_in, mode_index=0):
    """Running fraction of post-burn-in samples falling in ``(lower, upper]``.

    The first ``burn_in`` samples are discarded; the last series entry is the
    weight estimate over everything that remains.
    """
    x = np.asarray(samples, dtype=float).reshape(-1)
    if not 0 <= burn_in < x.size:
        raise ValueError("burn-in must be smaller than the number of samples")
    hit = ((x[burn_in:] > lower) & (x[burn_in:] <= upper)).astype(float)
    series = np.cumsum(hit) / np.arange(1, hit.size + 1)
    return WeightEstimate(mode_index, float(lower), float(upper), series, int(burn_in))


def default_bands(mode_locations):
    """Bands split at midpoints between sorted mode locations; outer bands are unbounded."""
    locs = np.sort(np.asarray(mode_locations, dtype=float).reshape(-1))
    cuts = np.concatenate([[-np.inf], 0.5 * (locs[1:] + locs[:-1]), [np.inf]])
    return [(float(cuts[i]), float(cuts[i + 1])) for i in range(locs.size)]


def cost_report(log_a, log_b):
    """Run-time standardised first-adjacency acceptance (A/R) for two runs.

    A QuanTA run's time is divided by its number of schemes, since it produces
    that many times more output.
    """

    def entry(log):
        R = log.seconds / (log.n_schemes if log.algorithm == "quanta" else 1)
        A = float(swap_rates(log)[0])
        return {"algorithm": log.algorithm, "R": R, "A": A, "A_over_R": A / R}

    a, b = entry(log_a), entry(log_b)
    if a["A_over_R"] == 0:
        ratio = 1.0 if b["A_over_R"] == 0 else float("inf")
    else:
        ratio = b["A_over_R"] / a["A_over_R"]
    return {"a": a, "b": b, "ratio_b_over_a": ratio}


# -- serialisation ---------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (set, frozenset)):
        return sorted(_jsonable(v) for v in obj)
    return obj


def run_summary(log):
    """Deterministic summary of a run (no timings)."""
    return _jsonable(
        {
            "status": log.status,
            "algorithm": log.algorithm,
            "seed": log.seed,
            "betas": log.betas,
            "n_schemes": log.n_schemes,
            "burn_in": log.burn_in,
            "swap_proposals": log.swap_proposals,
            "swap_acceptances": log.swap_acceptances,
            "swap_rates": swap_rates(log),
            "empirical_esjd": empirical_esjd(log),
            "within_rates": within_rates(log),
            "scales": log.scales,
            "warnings": log.warnings,
            "config": log.config,
        }
    )


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_trace_csv(log, path, thin=1):
    """One row per recorded iteration per scheme: iteration, scheme, level, x0, x1, ..."""
    dims = log.cold_samples.shape[2]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "scheme", "level"] + [f"x{j}" for j in range(dims)])
        for r in range(0, log.cold_samples.shape[0], thin):
            it = int(log.record_iterations[r])
            for s in range(log.n_schemes):
                w.writerow([it, s, 0] + [repr(float(v)) for v in log.cold_samples[r, s]])


def write_weight_csv(estimates, path):
    """Columns ``index`` then one running-estimate column per (scheme, mode) series."""
    cols = {name: est.series for name, est in estimates.items()}
    length = max((len(v) for v in cols.values()), default=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index"] + list(cols))
        for i in range(length):
            w.writerow([i] + [repr(float(v[i])) if i < len(v) else "" for v in cols.values()])
