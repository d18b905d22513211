"""Compare the compiled scan kernel, the numpy fallback and a plain sequential loop.

    python benchmarks/bench_scan.py [--lengths 256 1024 4096] [--state 64] [--batch 4]
"""

import argparse
import timeit

import numpy as np

from r2i.ssm import reset_scan
from r2i.ssm import scan as scan_mod


def sequential(a, bu, is_first, x0):
    x = x0.copy()
    out = np.empty_like(bu)
    for t in range(bu.shape[1]):
        x = (1 - is_first[:, t, None]) * a * x + bu[:, t]
        out[:, t] = x
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--lengths", type=int, nargs="+", default=[256, 1024, 4096])
    parser.add_argument("--state", type=int, default=64)
    parser.add_argument("--batch", type=int, default=4)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(0)
    runners = {"sequential": lambda *p: sequential(*p), "python": lambda *p: reset_scan(*p, backend="python")}
    if scan_mod._compiled_kernel is not None:
        runners["compiled"] = lambda *p: reset_scan(*p, backend="compiled")
    else:
        print("compiled kernel not built; showing fallback only")

    print(f"{'L':>6} " + " ".join(f"{name:>12}" for name in runners) + "   (ms, best of %d)" % args.repeat)
    for length in args.lengths:
        n = args.state
        a = 0.9 * np.exp(1j * rng.uniform(-np.pi, np.pi, n))
        bu = rng.normal(size=(args.batch, length, n)) + 1j * rng.normal(size=(args.batch, length, n))
        is_first = (rng.uniform(size=(args.batch, length)) < 0.01).astype(np.float64)
        x0 = np.zeros((args.batch, n), complex)
        ref = sequential(a, bu, is_first, x0)
        row = []
        for name, fn in runners.items():
            assert np.allclose(fn(a, bu, is_first, x0), ref, atol=1e-8), name
            best = min(timeit.repeat(lambda: fn(a, bu, is_first, x0), number=1, repeat=args.repeat))
            row.append(f"{1e3 * best:12.2f}")
        print(f"{length:6d} " + " ".join(row))


if __name__ == "__main__":
    main()
