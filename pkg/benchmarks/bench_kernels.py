"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel and problem size with the best time of each
backend and the speed-up.
"""

import argparse
import timeit

import numpy as np

from colourvq import kernels


def lab_pairs(n, rng):
    lo, hi = np.array([0.0, -100.0, -100.0]), np.array([100.0, 100.0, 100.0])
    return rng.uniform(lo, hi, (n, 3)), rng.uniform(lo, hi, (n, 3))


def cases(rng):
    for n in (1_000, 100_000):
        a, b = lab_pairs(n, rng)
        yield f"ciede2000 n={n}", lambda a=a, b=b: kernels.ciede2000(a, b)
    for n, k, d in ((64, 8, 8), (4096, 64, 8), (16384, 512, 64)):
        z, book = rng.normal(size=(n, d)), rng.normal(size=(k, d))
        mask = np.zeros(k, dtype=bool)
        yield f"nearest_code n={n} K={k} D={d}", lambda z=z, book=book, m=mask: kernels.nearest_code(z, book, m)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the numpy fallback is available")
    previous = kernels.active_backend()
    rows = []
    try:
        for name, fn in cases(np.random.default_rng(0)):
            times = {}
            for b in backends:
                kernels.use_backend(b)
                number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
                times[b] = min(timeit.repeat(fn, number=number, repeat=args.repeat)) / number
            rows.append((name, times))
    finally:
        kernels.use_backend(previous)

    print(f"{'kernel':<36}" + "".join(f"{b:>14}" for b in backends) + f"{'speed-up':>10}")
    for name, times in rows:
        line = f"{name:<36}" + "".join(f"{times[b] * 1e3:>11.3f} ms" for b in backends)
        if "compiled" in times:
            line += f"{times['python'] / times['compiled']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
