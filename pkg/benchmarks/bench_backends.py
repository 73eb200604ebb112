"""Time the numba kernels against the pure-numpy fallback.

Usage: python3 benchmarks/bench_backends.py [--repeat N]

Each case runs once to warm up (numba compiles or loads its cache), then
``--repeat`` times; the best wall time is reported together with the largest
difference between the two backends' outputs.
"""

import argparse
import time

import numpy as np

from wmm import _backend
from wmm.bayes import HiddenHyper, PriorSpec, posterior_hidden
from wmm.estimator import estimate
from wmm.io import load_fixture
from wmm.linalg import symmetric_eigh
from wmm.simulation import ExperimentConfig, run_experiment


def hcv_estimate():
    spec, evidence = load_fixture("hcv_scotland", warn=False)
    return estimate(spec, evidence, runs=100_000, seed=2009).per_run_log_estimates


def hidden_posterior():
    prior = PriorSpec.uniform(900, 1150)
    hyper = HiddenHyper(13, 39, 41, 11, 30, 20, 2, 5)
    return posterior_hidden(200, 450, 300, hyper, prior, mc_samples=20_000).log_pmf


def simulation():
    cfg = ExperimentConfig.for_experiment(1, trials=50, seed=1)
    res = run_experiment(cfg, threads=1)
    return np.array([[r.log_estimates[m] for m in cfg.methods] for r in res.records])


def jacobi():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((400, 60))
    return symmetric_eigh(x.T @ x)[0]


CASES = {
    "estimate hcv_scotland M=1e5": hcv_estimate,
    "hidden posterior 20k draws": hidden_posterior,
    "experiment 1, 50 trials": simulation,
    "jacobi eigh 60x60": jacobi,
}


def best_time(fn, repeat):
    out = fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"{'case':<32}{'numba s':>10}{'numpy s':>10}{'speedup':>9}{'max diff':>11}")
    for name, fn in CASES.items():
        res = {}
        for backend in ("numba", "numpy"):
            old = _backend.set_backend(backend)
            try:
                res[backend] = best_time(fn, args.repeat)
            finally:
                _backend.set_backend(old)
        (tn, a), (tp, b) = res["numba"], res["numpy"]
        diff = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
        print(f"{name:<32}{tn:>10.3f}{tp:>10.3f}{tp / tn:>9.1f}{diff:>11.2e}")


if __name__ == "__main__":
    main()
