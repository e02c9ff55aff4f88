"""Command-line driver: ``quanta run | verify-theory | tune-schedule``."""

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import diagnostics as dg
from .config import load_experiment, load_theory, load_tune
from .errors import ConfigurationError, DomainError, NumericalError
from .population import PopulationState, SweepConfig, run
from .schedule_theory import cold_order_scan, marginal_functionals, optimal_ell, tune_schedule

log = logging.getLogger("quanta")

# a bracket this small relative to V = 1/beta^2 is treated as exactly zero
ZERO_BRACKET_REL = 1e-10


def _repeat_seeds(seed, repeats):
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(repeats)]


def _bands(cfg):
    if cfg.bands is not None:
        return cfg.bands
    means = getattr(cfg.target, "means", None)
    if means is None:
        return []
    return dg.default_bands(np.asarray(means)[:, 0])


def _one_run(cfg, algorithm, rep, seed, schedule, out_dir):
    n_schemes = cfg.N if algorithm == "quanta" else cfg.pt_schemes
    sweep = SweepConfig(
        k=cfg.k, T=cfg.T, algorithm=algorithm,
        quanta_levels=None if cfg.quanta_levels is None else frozenset(cfg.quanta_levels),
        K=cfg.K, refine=cfg.refine, burn_in=cfg.burn_in, adapt=cfg.adapt, thin=cfg.thin, record=cfg.record,
    )
    run_dir = os.path.join(out_dir, algorithm, f"run_{rep:02d}")
    os.makedirs(run_dir, exist_ok=True)
    echo = {"experiment": cfg.raw, "algorithm": algorithm, "repeat": rep, "n_schemes": n_schemes}
    try:
        state = PopulationState.initialise(cfg.target, schedule, n_schemes, cfg.start, seed=seed)
        _, trace = run(state, sweep, cfg.scales, seed=seed)
    except (NumericalError, DomainError, FloatingPointError) as exc:
        dg.write_json({"status": "failed", "error": str(exc), "seed": seed, "config": echo},
                      os.path.join(run_dir, "summary.json"))
        return {"algorithm": algorithm, "repeat": rep, "status": "failed", "error": str(exc)}
    trace.config = dict(trace.config, **echo)

    bands = _bands(cfg)
    rec_burn = min(-(-trace.burn_in // cfg.thin), trace.cold_samples.shape[0] - 1)
    if cfg.weight_scheme == "random":
        scheme = int(np.random.default_rng(seed).integers(n_schemes))
    else:
        scheme = min(int(cfg.weight_scheme), n_schemes - 1)
    x = trace.cold_samples[:, scheme, 0]
    estimates = {f"w{i}": dg.mode_weight_series(x, lo, hi, rec_burn, i) for i, (lo, hi) in enumerate(bands)}

    summary = dg.run_summary(trace)
    summary["weight_scheme"] = scheme
    summary["bands"] = bands
    summary["final_weights"] = [est.final for est in estimates.values()]
    dg.write_json(summary, os.path.join(run_dir, "summary.json"))
    dg.write_json({"seconds": trace.seconds, "R": _R(trace), "A": float(dg.swap_rates(trace)[0]) if trace.n_levels > 1 else None},
                  os.path.join(run_dir, "timing.json"))
    dg.write_trace_csv(trace, os.path.join(run_dir, "trace.csv"))
    if estimates:
        dg.write_weight_csv(estimates, os.path.join(run_dir, "weights.csv"))
    return {"algorithm": algorithm, "repeat": rep, "status": "ok", "trace": trace, "summary": summary}


def _R(trace):
    return trace.seconds / (trace.n_schemes if trace.algorithm == "quanta" else 1)


def _mean_sd(rows):
    arr = np.array(rows, dtype=float)
    if arr.size == 0:
        return None, None
    with np.errstate(invalid="ignore"):
        sd = np.nanstd(arr, axis=0, ddof=1) if arr.shape[0] > 1 else np.zeros(arr.shape[1:])
        return np.nanmean(arr, axis=0).tolist(), sd.tolist()


def run_experiment(cfg, out=None, threads=1, seed=None, repeats=None):
    """Execute every (algorithm, repeat) of ``cfg``; returns (exit code, aggregate summary)."""
    out = out or cfg.out
    if seed is not None:
        cfg.seed = seed
    if repeats is not None:
        cfg.repeats = repeats
    os.makedirs(out, exist_ok=True)
    schedule = cfg.schedule
    if schedule is None:
        cfg.tune.algorithm = cfg.tune.algorithm or cfg.algorithms[0]
        schedule = tune_schedule(cfg.target, cfg.hottest_beta, cfg.tune)
        log.info("tuned schedule with %d levels", len(schedule))
    seeds = _repeat_seeds(cfg.seed, cfg.repeats)
    jobs = [(alg, r, seeds[r]) for alg in cfg.algorithms for r in range(cfg.repeats)]
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        results = list(pool.map(lambda j: _one_run(cfg, j[0], j[1], j[2], schedule, out), jobs))

    agg = {"name": cfg.name, "seed": cfg.seed, "repeat_seeds": seeds, "betas": schedule.tolist(),
           "config": cfg.raw, "algorithms": {}}
    cost = {"algorithms": {}}
    failed = [r for r in results if r["status"] != "ok"]
    for alg in cfg.algorithms:
        ok = [r for r in results if r["algorithm"] == alg and r["status"] == "ok"]
        rates_mean, rates_sd = _mean_sd([dg.swap_rates(r["trace"]) for r in ok])
        w_mean, w_sd = _mean_sd([r["summary"]["final_weights"] for r in ok])
        agg["algorithms"][alg] = {
            "runs": len(ok),
            "failed": sum(1 for r in failed if r["algorithm"] == alg),
            "swap_rates_mean": rates_mean,
            "swap_rates_sd": rates_sd,
            "final_weights_mean": w_mean,
            "final_weights_sd": w_sd,
            "final_weights": [r["summary"]["final_weights"] for r in ok],
        }
        if ok and len(schedule) > 1:
            R = float(np.mean([_R(r["trace"]) for r in ok]))
            A = float(np.nanmean([dg.swap_rates(r["trace"])[0] for r in ok]))
            cost["algorithms"][alg] = {"R": R, "A": A, "A_over_R": A / R}
    if {"pt", "quanta"} <= set(cost["algorithms"]) and cost["algorithms"]["pt"]["A_over_R"] > 0:
        cost["quanta_over_pt"] = cost["algorithms"]["quanta"]["A_over_R"] / cost["algorithms"]["pt"]["A_over_R"]
    agg["status"] = "partial" if failed else "ok"
    dg.write_json(agg, os.path.join(out, "summary.json"))
    dg.write_json(cost, os.path.join(out, "cost_report.json"))
    return (3 if failed else 0), agg


def verify_theory(tcfg):
    """Functionals, identity residuals, optimal spacing and cold-order fits as a JSON-ready dict."""
    report = {"functionals": [], "optimal_ell": [], "cold_order": []}
    for name in tcfg.marginals:
        for beta in tcfg.betas:
            entry = {"marginal": name, "beta": beta}
            try:
                f = marginal_functionals(name, beta=beta)
            except (DomainError, NumericalError) as exc:
                entry["error"] = str(exc)
                report["functionals"].append(entry)
                continue
            entry.update(f.as_dict())
            entry["checks"] = {
                "S_times_beta_plus_1": f.S * beta + 1.0,
                "V_quadrature_rel_err": f.V_quadrature * beta**2 - 1.0,
                "identity_gap": f.identity_gap,
                "bracket_vs_direct": f.bracket - f.bracket_direct,
            }
            opt = optimal_ell(f.magnitude, zero_tol=ZERO_BRACKET_REL * f.V)
            if opt.degenerate:
                entry["optimal_ell"] = {"ell": None, "acceptance": None,
                                        "skipped": "bracket is zero: the ESJD limit has no finite maximiser"}
            else:
                entry["optimal_ell"] = {"ell": opt.ell, "acceptance": opt.acceptance,
                                        "acceptance_3sf": float(f"{opt.acceptance:.3g}")}
            report["functionals"].append(entry)
        try:
            scan = cold_order_scan(name, betas=tcfg.cold_betas, gamma=tcfg.gamma)
            report["cold_order"].append(scan.as_dict())
        except (DomainError, NumericalError, ConfigurationError) as exc:
            report["cold_order"].append({"name": name, "error": str(exc)})
    for b in tcfg.brackets:
        opt = optimal_ell(b)
        report["optimal_ell"].append({"bracket": b, "ell": opt.ell, "acceptance": opt.acceptance,
                                      "ell_times_sqrt_bracket": opt.ell * math.sqrt(b)})
    return report


def _parser():
    p = argparse.ArgumentParser(prog="quanta", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run a PT / QuanTA experiment"),
                           ("verify-theory", "quadrature checks of the optimal-scaling theory"),
                           ("tune-schedule", "build a temperature ladder from pilot runs")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", required=True, help="YAML config file")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--out", default=None, help="output directory (overrides the config)")
        s.add_argument("--threads", type=int, default=1, help="concurrent repeats")
        s.add_argument("--repeats", type=int, default=None, help="override the number of repeats")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return 2
    if args.repeats is not None and args.repeats < 1:
        print("error: --repeats must be at least 1", file=sys.stderr)
        return 2
    try:
        if args.command == "run":
            cfg = load_experiment(args.config)
            code, agg = run_experiment(cfg, args.out, args.threads, args.seed, args.repeats)
            for alg, block in agg["algorithms"].items():
                rates = ", ".join("nan" if v is None else f"{v:.3f}" for v in (block["swap_rates_mean"] or []))
                print(f"{alg}: swap rates [{rates}] over {block['runs']} run(s)")
            print(f"outputs in {args.out or cfg.out}")
            return code
        if args.command == "verify-theory":
            tcfg = load_theory(args.config)
            out = args.out or tcfg.out
            os.makedirs(out, exist_ok=True)
            report = verify_theory(tcfg)
            dg.write_json(report, os.path.join(out, "theory_report.json"))
            for c in report["cold_order"]:
                if "error" in c:
                    print(f"{c['name']}: {c['error']}")
                elif c["degenerate"]:
                    print(f"{c['name']}: bracket is zero at every beta (degenerate)")
                else:
                    print(f"{c['name']}: cold-order slope {c['slope']:.3f} (reference {c['expected_slope']:.2f})")
            print(f"report in {os.path.join(out, 'theory_report.json')}")
            return 0
        target, hot, pilot, out = load_tune(args.config)
        out = args.out or out
        if args.seed is not None:
            pilot.seed = args.seed
        os.makedirs(out, exist_ok=True)
        sched = tune_schedule(target, hot, pilot)
        dg.write_json({"betas": sched.betas, "ratios": sched.ratios, "levels": len(sched),
                       "algorithm": pilot.algorithm, "hottest_beta": hot,
                       "pilot_history": [list(h) for h in pilot.history]},
                      os.path.join(out, "schedule.json"))
        print(f"{len(sched)} levels: {json.dumps([float(f'{b:.4g}') for b in sched.betas])}")
        return 0
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
