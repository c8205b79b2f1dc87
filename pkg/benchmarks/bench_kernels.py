"""Compare the compiled scoring kernels with the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--n 512] [--dims 64] [--repeat 5]

Times the two hot kernels on one batch of candidate partners, then a full
greedy build with each backend, and checks the backends agree.
"""
import argparse
import contextlib
import timeit

import numpy as np

from bayesrose import _kernels_py, kernels
from bayesrose.builder import build
from bayesrose.core import log_mixing_table
from bayesrose.likelihood import BetaBernoulli

try:
    from bayesrose import _ckernels
except ImportError:
    _ckernels = None


@contextlib.contextmanager
def backend(impl):
    saved = kernels.bb_merged_log_f, kernels.select_ops
    kernels.bb_merged_log_f, kernels.select_ops = impl.bb_merged_log_f, impl.select_ops
    try:
        yield
    finally:
        kernels.bb_merged_log_f, kernels.select_ops = saved


def best_time(fn, repeat, number=1):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def kernel_args(n, dims, rng):
    model = BetaBernoulli(rng.integers(0, 2, size=(n, dims)))
    pool = model.pool(n)
    for i in range(n):
        pool.put(i, model.leaf_stats(i))
    partners = np.arange(1, n, dtype=np.int64)
    merged = (pool.counts, pool.sizes, 0, partners, pool.lg_alpha, pool.lg_beta,
              pool.lg_total, pool.offset)
    m = partners.size
    log_keep, log_split = log_mixing_table(n, 0.5)
    select = (rng.normal(-40, 5, m), -42.0, -45.0, 3, rng.normal(-20, 3, m),
              rng.normal(-22, 3, m), rng.integers(0, 4, m).astype(np.int64),
              log_keep, log_split, True)
    return merged, select


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--dims", type=int, default=64)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    impls = {"numpy": _kernels_py}
    if _ckernels is not None:
        impls["cython"] = _ckernels
    else:
        print("compiled kernels unavailable; timing the numpy fallback only")

    merged, select = kernel_args(args.n, args.dims, rng)
    data = rng.integers(0, 2, size=(args.n, args.dims))
    print(f"n={args.n} dims={args.dims} (best of {args.repeat})")
    print(f"{'kernel':<18}" + "".join(f"{k:>12}" for k in impls) + "     speedup")
    rows = [
        ("merged_log_f", lambda impl: impl.bb_merged_log_f(*merged), 50),
        ("select_ops", lambda impl: impl.select_ops(*select), 50),
    ]
    for name, call, number in rows:
        times = {k: best_time(lambda: call(impl), args.repeat, number) for k, impl in impls.items()}
        print_row(name, times)
    times, trees = {}, {}
    for k, impl in impls.items():
        with backend(impl):
            times[k] = best_time(lambda: build(BetaBernoulli(data), 0.5), args.repeat)
            trees[k] = build(BetaBernoulli(data), 0.5)
    print_row("full build", times)
    if len(trees) == 2:
        same = trees["numpy"].log_p == trees["cython"].log_p
        print(f"backends agree on the built tree: {same}")


def print_row(name, times):
    cells = "".join(f"{t * 1e3:>10.3f}ms" for t in times.values())
    speedup = f"{times['numpy'] / times['cython']:>10.1f}x" if "cython" in times else ""
    print(f"{name:<18}{cells}{speedup}")


if __name__ == "__main__":
    main()
