"""Time the compiled and pure-Python kernel backends on the workloads that
dominate real runs: field evaluation, batched one-step prediction, and a
trending sweep.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from trendflow import kernels
from trendflow.field import Domain, evaluate
from trendflow.integrate import advance_many
from trendflow.portrait import trending_check
from trendflow.presets import readers_edits_normalized

UNIT = Domain.box([0, 1, 0, 1])


def workloads():
    model = readers_edits_normalized()
    states = np.random.default_rng(0).uniform(0, 1, size=(10_000, 2))
    return {
        "evaluate 10k states": lambda: evaluate(model, states),
        "advance 1k states by 1.0": lambda: advance_many(model, states[:1000], 1.0),
        "trending sweep 21x21": lambda: trending_check(model, UNIT, 21),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = ["python"] + (["compiled"] if kernels.compiled_available() else [])
    if len(backends) == 1:
        print("compiled backend not built; timing the python fallback only")
    results = {}
    for name in backends:
        kernels.use_backend(name)
        for label, fn in workloads().items():
            fn()  # warm-up
            results[label, name] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
    print(f"{'workload':<28}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for label in workloads():
        row = f"{label:<28}" + "".join(f"{results[label, b]:>11.4f}s" for b in backends)
        if len(backends) > 1:
            row += f"{results[label, 'python'] / results[label, 'compiled']:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
