"""Throughput of the compiled step loop against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--steps 200000] [--repeat 3]

Both backends run the same seeded trajectories; the script also confirms
that their final iterates agree bit for bit.
"""
import argparse
import time

import numpy as np

from tdfinite import _kernels
from tdfinite.algorithms import run_qlearn_optstop, run_td0, run_td_lambda
from tdfinite.instances import GeneratorConfig, random_instance, random_stopping_problem
from tdfinite.sampling import iid_sampler, markov_sampler, trial_generator
from tdfinite.schedules import StepSchedule


def cases(steps):
    inst = random_instance(trial_generator(0), GeneratorConfig(n=20, d=4, gamma=0.9))
    m, f, geo = inst.mrp, inst.features, inst.geometry
    prob = random_stopping_problem(trial_generator(0, 1), m)
    sched = StepSchedule.constant(0.01)
    return {
        "td0/iid": lambda b: run_td0(iid_sampler(m, geo, 1), f, sched, steps, backend=b),
        "projected-td0/markov": lambda b: run_td0(markov_sampler(m, 1), f, sched, steps,
                                                  radius=10.0, backend=b),
        "td-lambda/markov": lambda b: run_td_lambda(markov_sampler(m, 1), f, sched, steps, 0.7,
                                                    10.0, backend=b),
        "optstop/markov": lambda b: run_qlearn_optstop(markov_sampler(prob.reward_chain, 1),
                                                       prob, f, sched, steps, radius=10.0,
                                                       backend=b),
    }


def best_of(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    try:
        _kernels.load_backend("cython")
    except ImportError:
        raise SystemExit("compiled backend not built; run `pip install -e .` first")

    print(f"{'case':<22}{'cython steps/s':>16}{'python steps/s':>16}{'speedup':>10}  same")
    for name, run in cases(args.steps).items():
        tc, rc = best_of(lambda: run("cython"), args.repeat)
        tp, rp = best_of(lambda: run("python"), 1)
        same = np.array_equal(rc.final.theta, rp.final.theta)
        print(f"{name:<22}{args.steps / tc:>16,.0f}{args.steps / tp:>16,.0f}{tp / tc:>10.1f}"
              f"  {'yes' if same else 'NO'}")


if __name__ == "__main__":
    main()
