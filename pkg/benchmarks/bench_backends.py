"""Time the compiled and numpy backends on the same workloads.

    python3 benchmarks/bench_backends.py --episodes 20000

Compilation is excluded by a warm-up call (kernels are also cached on disk).
"""
import argparse
import time

import numpy as np

from varac import engine, oracle
from varac._accel import NUMBA_AVAILABLE
from varac.actor import StepSchedule
from varac.features import compatible_features
from varac.mdp import SoftmaxPolicy
from varac.models import geo, random_mdp


def timed(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def workloads(episodes):
    g = geo()
    r = random_mdp(np.random.default_rng(1000))
    for name, model in (("geo", g), ("random5x3", r)):
        pol = SoftmaxPolicy.tabular(model)
        fmap = compatible_features(pol)
        fp = oracle.critic_fixed_point(model, pol, fmap, fmap)

        def train(backend, model=model, pol=pol, fmap=fmap):
            return engine.train(model, pol, fmap, fmap, 0.2, StepSchedule(), episodes, np.random.default_rng(0),
                                eval_every=episodes, backend=backend).theta[-1]

        def estimates(backend, model=model, pol=pol, fmap=fmap, fp=fp):
            return engine.actor_estimates(model, pol, fp, fmap, fmap, 0.2, episodes, np.random.default_rng(0),
                                          backend=backend).mean(axis=0)

        yield f"train/{name}", train
        yield f"actor_estimates/{name}", estimates


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--episodes", type=int, default=20_000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if not NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'workload':28s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}  max |diff|")
    for name, fn in workloads(args.episodes):
        fn("numba")  # warm-up / compile
        t_nb, a = timed(lambda: fn("numba"), args.repeat)
        t_np, b = timed(lambda: fn("numpy"), 1)
        print(f"{name:28s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f}  {np.max(np.abs(a - b)):.1e}")


if __name__ == "__main__":
    main()
