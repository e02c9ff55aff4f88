"""Wall-clock comparison of the numba and numpy kernel backends.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel is timed on the 1-D five-mode and the 20-D three-mode targets at
population sizes typical of a QuanTA run (100 schemes x a few levels). The
numba timings exclude compilation (one warm-up call per kernel).
"""

import argparse
import timeit

import numpy as np

from quanta import GaussianMixtureTarget
from quanta._backend import HAS_NUMBA, kernels


def cases(n=300):
    rng = np.random.default_rng(0)
    targets = {
        "1d-5mode": GaussianMixtureTarget([0.2] * 5, [-200, -100, 0, 100, 200], 0.01, 1),
        "20d-3mode": GaussianMixtureTarget([1 / 3] * 3, [-20, 0, 20], 0.01, 20),
    }
    for name, t in targets.items():
        d = t.dimension
        params = t.mixture_params
        X = t.means[rng.integers(0, len(t.means), n)] + 0.01 * rng.normal(size=(n, d))
        Y = t.means[rng.integers(0, len(t.means), n)] + rng.normal(size=(n, d))
        logp = kernels("numpy").mixture_logpdf(X, *params)
        logq = kernels("numpy").mixture_logpdf(Y, *params)
        noise = rng.normal(size=(3, n, d))
        log_u3 = np.log(rng.random((3, n)))
        log_u = np.log(rng.random(n))
        beta = np.full(n, 1.0)
        scale = np.full(n, 0.01)
        use_q = np.ones(n, bool)

        def make(mod):
            return {
                "mixture_logpdf": lambda: mod.mixture_logpdf(X, *params),
                "rwm_mixture(k=3)": lambda: mod.rwm_mixture(X.copy(), logp.copy(), beta, scale, noise, log_u3, *params),
                "swap_mixture(quanta)": lambda: mod.swap_mixture(X.copy(), Y.copy(), logp.copy(), logq.copy(), beta,
                                                                 np.full(n, 2e-4), use_q, log_u, t.means.copy(), *params),
                "weighted_lloyd": lambda: mod.weighted_lloyd(np.concatenate([X, Y]), np.ones(2 * n),
                                                             X[: len(t.means)].copy(), 50),
            }

        yield name, make


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--number", type=int, default=20)
    args = p.parse_args(argv)
    backends = ["numpy"] + (["numba"] if HAS_NUMBA else [])
    print(f"{'target':<10} {'kernel':<22}" + "".join(f"{b:>12}" for b in backends) + f"{'speed-up':>10}")
    for name, make in cases():
        fns = {b: make(kernels(b)) for b in backends}
        for kernel in fns["numpy"]:
            times = {}
            for b in backends:
                fns[b][kernel]()  # warm-up / compile
                times[b] = min(timeit.repeat(fns[b][kernel], number=args.number, repeat=args.repeat)) / args.number
            ratio = times["numpy"] / times["numba"] if "numba" in times else float("nan")
            print(f"{name:<10} {kernel:<22}" + "".join(f"{times[b] * 1e6:>10.1f}us" for b in backends)
                  + f"{ratio:>9.1f}x")


if __name__ == "__main__":
    main()
