"""Compare the compiled and pure-Python chart decoders.

    python benchmarks/bench_cky.py --lengths 10,20,40 --labels 30 --repeat 5
"""

import argparse
import time

import numpy as np

from lalparse.kernels import compiled_cky_tables, python_cky_tables


def best_time(fn, chart, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn(chart)
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lengths", default="10,20,40")
    ap.add_argument("--labels", type=int, default=30)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    print("n,labels,python_ms,compiled_ms,speedup")
    for n in (int(x) for x in args.lengths.split(",")):
        chart = rng.normal(size=(n + 1, n + 1, args.labels))
        chart[..., 0] = 0.0
        py = best_time(python_cky_tables, chart, args.repeat)
        if compiled_cky_tables is None:
            print(f"{n},{args.labels},{py * 1e3:.3f},,")
            continue
        ext = best_time(compiled_cky_tables, chart, args.repeat)
        a, b = python_cky_tables(chart), compiled_cky_tables(chart)
        assert all(np.array_equal(x, y) for x, y in zip(a, b)), "backends disagree"
        print(f"{n},{args.labels},{py * 1e3:.3f},{ext * 1e3:.3f},{py / ext:.1f}")


if __name__ == "__main__":
    main()
