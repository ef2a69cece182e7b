"""Time the compiled kernels against the numpy fallback.

Run with ``python benchmarks/bench_kernels.py``. Each kernel is called on the
same inputs through both backends; results are checked for equality before
timings are reported.
"""

import argparse
import sys
import timeit

import numpy as np

from dyadflow import _backend, _fallback


def cases(rng):
    a = rng.normal(size=1536)
    b = rng.normal(size=1536)
    X = rng.normal(size=(1000, 52))
    y = rng.integers(0, 2, size=1000).astype(np.intp)
    rows = np.arange(1000, dtype=np.intp)
    feats = np.arange(52, dtype=np.intp)
    return {
        "dtw 1536x1536, window 64": (lambda k: k.dtw(a, b, 64)),
        "dtw 256x256, full": (lambda k: k.dtw(a[:256], b[:256], -1)),
        "best_split 1000x52": (lambda k: k.best_split(X, y, rows, feats, 2, 1)),
        "grow_tree 1000x52, mtry 7": (lambda k: k.grow_tree(X, y, rows, 2, 7, -1, 1, 3)),
    }


def same(r1, r2):
    if isinstance(r1, tuple):
        return all(same(a, b) for a, b in zip(r1, r2))
    return np.array_equal(np.asarray(r1), np.asarray(r2), equal_nan=True)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _backend.compiled is None:
        print("compiled extension not available; build with `pip install -e . --no-build-isolation`")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'compiled (s)':>14}{'fallback (s)':>14}{'speedup':>10}")
    for name, call in cases(rng).items():
        if not same(call(_backend.compiled), call(_fallback)):
            print(f"{name}: backends disagree")
            return 1
        tc = min(timeit.repeat(lambda: call(_backend.compiled), number=1, repeat=args.repeat))
        tf = min(timeit.repeat(lambda: call(_fallback), number=1, repeat=args.repeat))
        print(f"{name:<28}{tc:>14.4f}{tf:>14.4f}{tf / tc:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
