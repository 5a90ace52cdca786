"""Compare the compiled and numpy kernel backends.

Run with ``python3 benchmarks/bench_kernels.py``; prints the median time per
call and the speed-up of each backend relative to numpy.
"""

import argparse
import time

import numpy as np

from globaltrait._kernels import backends


def _median_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return float(np.median(times))


def cases(rng, batch, tokens, dim, filters, width, points):
    E = rng.standard_normal((batch, tokens, dim))
    W = rng.standard_normal((width, dim, filters)) * 0.1
    b = np.zeros(filters)
    P = rng.random((points, points))
    P = P + P.T
    np.fill_diagonal(P, 0)
    P /= P.sum()
    Y = rng.standard_normal((points, 2))
    return E, W, b, P, Y


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=10)
    ap.add_argument("--tokens", type=int, default=300)
    ap.add_argument("--dim", type=int, default=16)
    ap.add_argument("--filters", type=int, default=64)
    ap.add_argument("--width", type=int, default=5)
    ap.add_argument("--points", type=int, default=300)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    E, W, b, P, Y = cases(rng, args.batch, args.tokens, args.dim, args.filters, args.width,
                          args.points)
    results = {}
    for name, mod in backends().items():
        pooled, pos = mod.conv_maxpool_forward(E, W, b)
        dpooled = rng.standard_normal(pooled.shape)
        results[name] = {
            "conv forward": _median_time(lambda: mod.conv_maxpool_forward(E, W, b), args.repeat),
            "conv backward": _median_time(
                lambda: mod.conv_maxpool_backward(E, W, pos, dpooled, True), args.repeat),
            "tsne gradient": _median_time(lambda: mod.tsne_gradient(Y, P), args.repeat),
        }
    base = results["numpy"]
    print(f"{'kernel':<15}" + "".join(f"{n:>14}" for n in results) + "   speed-up")
    for kernel in base:
        row = f"{kernel:<15}" + "".join(f"{r[kernel] * 1e3:>12.3f}ms" for r in results.values())
        if "cython" in results:
            row += f"   {base[kernel] / results['cython'][kernel]:8.1f}x"
        print(row)
    return results


if __name__ == "__main__":
    main()
