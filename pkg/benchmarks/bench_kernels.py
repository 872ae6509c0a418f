"""Compare the compiled kernels with the numpy fallback.

Times each kernel on random inputs for both backends, then runs the same IHT
solve end to end in two subprocesses, one forced onto the fallback through
``HARDSHRINK_PURE_PYTHON=1``.

    python3 benchmarks/bench_kernels.py [--sizes 2000 20000 200000] [--repeat 7]
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from hardshrink._backend import available_backends

_END_TO_END = r"""
import json, time
from hardshrink._backend import BACKEND
from hardshrink.numkit import RngStream
from hardshrink.objectives import make_least_squares
from hardshrink.solvers import SolverConfig, iht_solve
from hardshrink.statgen import synth_linear
inst = synth_linear({p}, {s}, {n}, 0.1, rng=RngStream(0, 0))
obj = make_least_squares(inst.X, inst.y)
cfg = SolverConfig(s={s}, eta={eta})
best = float("inf")
for _ in range({repeat}):
    t0 = time.perf_counter()
    _, tr = iht_solve(obj, cfg)
    best = min(best, time.perf_counter() - t0)
print(json.dumps(dict(backend=BACKEND, seconds=best, iterations=tr.iterations)))
"""


def best_of(fn, repeat):
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def kernel_table(sizes, repeat):
    backends = available_backends()
    rng = np.random.default_rng(0)
    rows = []
    for p in sizes:
        v = rng.standard_normal(p)
        k = max(1, p // 100)
        mask = np.zeros(p, dtype=np.uint8)
        mask[rng.choice(p, size=k, replace=False)] = 1
        cases = {
            "top_k": lambda m: m.top_k(v, k),
            "partial_select": lambda m: m.partial_select(v, mask, k, max(1, k // 4)),
            "soft_threshold": lambda m: m.soft_threshold(v, 0.5),
        }
        for name, call in cases.items():
            times = {b: best_of(lambda m=m: call(m), repeat) for b, m in backends.items()}
            rows.append((name, p, times))
    return rows


def end_to_end(p, s, n, repeat):
    # a fixed step keeps the comparison about the kernels, not the estimator
    code = _END_TO_END.format(p=p, s=s, n=n, eta=0.6, repeat=repeat)
    out = {}
    for forced in ("0", "1"):
        env = dict(os.environ, HARDSHRINK_PURE_PYTHON=forced)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                             text=True, check=True)
        row = json.loads(res.stdout)
        out[row["backend"]] = row
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[2000, 20000, 200000])
    parser.add_argument("--repeat", type=int, default=7)
    parser.add_argument("--p", type=int, default=2000, help="dimension of the end-to-end solve")
    args = parser.parse_args(argv)

    backends = sorted(available_backends())
    print(f"{'kernel':<16}{'p':>9}" + "".join(f"{b + ' (us)':>16}" for b in backends)
          + f"{'speedup':>10}")
    for name, p, times in kernel_table(args.sizes, args.repeat):
        line = f"{name:<16}{p:>9}" + "".join(f"{times[b] * 1e6:>16.1f}" for b in backends)
        if "cython" in times:
            line += f"{times['python'] / times['cython']:>9.2f}x"
        print(line)

    n = int(np.ceil(2 * 20 * np.log(args.p)))
    res = end_to_end(args.p, 20, n, max(1, args.repeat // 2))
    print(f"\nIHT end to end (p={args.p}, s=20, n={n}):")
    for b, row in sorted(res.items()):
        print(f"  {b:<8}{row['seconds'] * 1e3:9.1f} ms  ({row['iterations']} iterations)")


if __name__ == "__main__":
    main()
