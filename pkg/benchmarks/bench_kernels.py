"""Time the compiled DistMult kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--entities N] [--dim D] [--repeat R]

Prints the best-of-R wall time per call and the speedup for each kernel.
"""

import argparse
import sys
import timeit

import numpy as np

from kgfuse import _pykernels

try:
    from kgfuse import _ckernels
except ImportError:
    _ckernels = None


def sgd_case(n_ent, dim, batch, seed=0):
    rng = np.random.default_rng(seed)
    ent = rng.uniform(-0.1, 0.1, size=(n_ent, dim)).astype(np.float32)
    rel = rng.uniform(-0.1, 0.1, size=(8, dim)).astype(np.float32)
    h = rng.integers(n_ent, size=batch).astype(np.int64)
    r = rng.integers(8, size=batch).astype(np.int64)
    t = rng.integers(n_ent, size=batch).astype(np.int64)
    y = np.where(rng.random(batch) < 0.5, 1.0, -1.0)
    return ent, rel, h, r, t, y


def rank_case(n_ent, queries, seed=0):
    rng = np.random.default_rng(seed)
    scores = rng.normal(size=(queries, n_ent))
    targets = rng.integers(n_ent, size=queries).astype(np.int64)
    counts = rng.integers(0, 20, size=queries)
    ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    flt = rng.integers(n_ent, size=int(ptr[-1])).astype(np.int64)
    return scores, targets, ptr, flt


def best_time(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--entities", type=int, default=20000)
    ap.add_argument("--dim", type=int, default=100)
    ap.add_argument("--batch", type=int, default=200, help="positives plus negatives per SGD step")
    ap.add_argument("--queries", type=int, default=500)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1

    rows = []
    ent, rel, h, r, t, y = sgd_case(args.entities, args.dim, args.batch)
    for name, mod in (("python", _pykernels), ("cython", _ckernels)):
        e, rr = ent.copy(), rel.copy()
        sec = best_time(lambda: mod.sgd_step(e, rr, h, r, t, y, 1e-4, False), args.repeat, 50)
        rows.append(("sgd_step", name, sec))
        e, rr = ent.copy(), rel.copy()
        sec = best_time(lambda: mod.sgd_step(e, rr, h, r, t, y, 1e-4, True), args.repeat, 50)
        rows.append(("sgd_step+renorm", name, sec))
    scores, targets, ptr, flt = rank_case(args.entities, args.queries)
    for name, mod in (("python", _pykernels), ("cython", _ckernels)):
        sec = best_time(lambda: mod.filtered_ranks(scores, targets, ptr, flt), args.repeat, 3)
        rows.append(("filtered_ranks", name, sec))

    print(f"entities={args.entities} dim={args.dim} batch={args.batch} queries={args.queries}")
    print(f"{'kernel':<16} {'python':>12} {'cython':>12} {'speedup':>8}")
    times = {(k, b): s for k, b, s in rows}
    for kernel in dict.fromkeys(k for k, _, _ in rows):
        py, cy = times[(kernel, "python")], times[(kernel, "cython")]
        print(f"{kernel:<16} {py * 1e6:>10.1f}us {cy * 1e6:>10.1f}us {py / cy:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
