"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one row per kernel with the best-of-``repeat`` time for each backend
and the speed-up of the compiled version.
"""
import argparse
import itertools
import timeit

import numpy as np

from sada.kernels import available_backends


def cases(rng):
    img = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
    deg = rng.integers(0, 256, size=img.shape, dtype=np.uint8)
    c, s = np.cos(0.3), np.sin(0.3)
    m = (c, s, 15.5 - c * 15.5 - s * 15.5, -s, c, 15.5 + s * 15.5 - c * 15.5)
    n, k, cap = 5000, 10, 5
    p = rng.dirichlet(np.ones(k), size=n)
    q = rng.dirichlet(np.ones(k), size=n)
    window = rng.random((n, cap))
    count = np.full(n, cap, dtype=np.int64)
    batch = np.sort(rng.choice(n, size=8, replace=False)).astype(np.int64)

    def record(mod):
        state = [q.copy(), np.zeros(n, dtype=np.int64), window.copy(), count.copy(),
                 np.zeros(n, dtype=np.int64), np.zeros(n)]
        probs = np.ascontiguousarray(p[batch])
        epochs = itertools.count(1)  # each call must advance the epoch
        return lambda: mod.record_rows(*state, batch, probs, next(epochs), 1e-8)

    return {
        "warp_nearest 32x32x3": lambda mod: (lambda: mod.warp_nearest(img, *m, 128)),
        "blend 32x32x3": lambda mod: (lambda: mod.blend(img, deg, 1.4)),
        "box_blur3 32x32x3": lambda mod: (lambda: mod.box_blur3(img)),
        "kl_rows 5000x10": lambda mod: (lambda: mod.kl_rows(p, q, 1e-8)),
        "window_variance 5000x5": lambda mod: (lambda: mod.window_variance(window, count)),
        "record_rows batch of 8": record,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=200)
    args = ap.parse_args()
    backends = available_backends()
    names = sorted(backends)
    print(f"{'kernel':<26}" + "".join(f"{n + ' us':>14}" for n in names) + "   speed-up")
    for label, make in cases(np.random.default_rng(0)).items():
        times = {}
        for name in names:
            fn = make(backends[name])
            best = min(timeit.repeat(fn, number=args.number, repeat=args.repeat))
            times[name] = best / args.number * 1e6
        row = f"{label:<26}" + "".join(f"{times[n]:>14.1f}" for n in names)
        if "cython" in times:
            row += f"   {times['python'] / times['cython']:.1f}x"
        print(row)


if __name__ == "__main__":
    main()
