"""Time each kernel under the numba and numpy backends.

    python benchmarks/bench_kernels.py [--size 256] [--iters 50] [--repeat 5]
"""

import argparse
import time

import numpy as np

from roi_unc import _kernels


def best_of(fn, repeat):
    fn()  # warm-up (numba compile / cache load)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--iters", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    g = np.random.default_rng(0)
    stack = g.random((args.iters, args.size, args.size)).astype(np.float32)
    pred = g.random((args.size, args.size)) < 0.3
    gt = g.random((args.size, args.size)) < 0.3
    scores = np.round(g.random(args.size * args.size), 3)

    cases = {
        "mc_mean": lambda: _kernels.mc_mean(stack, True),
        "percentile_spread": lambda: _kernels.percentile_spread(stack, 67, 33),
        "rank_sum": lambda: _kernels.rank_sum(scores, gt.ravel()),
        "confusion": lambda: _kernels.confusion(pred, gt),
    }
    previous = _kernels.get_backend()
    print(f"stack {args.iters}x{args.size}x{args.size}, best of {args.repeat}")
    print(f"{'kernel':<20}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    try:
        for name, fn in cases.items():
            t = {}
            for backend in _kernels.BACKENDS:
                _kernels.set_backend(backend)
                t[backend] = best_of(fn, args.repeat)
            print(f"{name:<20}{t['numba']:>12.4f}{t['numpy']:>12.4f}{t['numpy'] / t['numba']:>9.2f}x")
    finally:
        _kernels.set_backend(previous)


if __name__ == "__main__":
    main()
