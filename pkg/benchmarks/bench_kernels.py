"""Benchmark the numba kernels against the pure-numpy fallback.

Times the two hot kernels (pairwise squared distances, row log-sum-exp) and
an end-to-end credibility scoring run under each backend. Run:

    python benchmarks/bench_kernels.py [--n 4000] [--dim 64] [--repeat 5]
"""
import argparse
import time

import numpy as np

from reanno import _kernels, build_index, fit_density
from reanno.datastore import SynthConfig, synth_generate
from reanno.detector import credibility_scores


def timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--n", type=int, default=4000)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    backends = {"numpy": (_kernels.sqdist_numpy, _kernels.row_logsumexp_numpy)}
    if _kernels.sqdist_numba is not None:
        backends["numba"] = (_kernels.sqdist_numba, _kernels.row_logsumexp_numba)
    else:
        print("numba unavailable; benchmarking numpy only")

    rng = np.random.default_rng(0)
    queries = rng.normal(size=(args.n // 4, args.dim))
    keys = rng.normal(size=(args.n, args.dim))
    logs = rng.normal(size=(args.n, 256)) * 10

    print(f"active backend: {_kernels.backend_name()}")
    print(f"{'kernel':<28}" + "".join(f"{b:>12}" for b in backends))
    rows = {
        f"sqdist {queries.shape[0]}x{args.n}x{args.dim}":
            {b: timeit(lambda f=fns[0]: f(queries, keys), args.repeat)
             for b, fns in backends.items()},
        f"row_logsumexp {args.n}x256":
            {b: timeit(lambda f=fns[1]: f(logs), args.repeat)
             for b, fns in backends.items()},
    }
    if _kernels.sqdist_numba is not None:
        d_np = _kernels.sqdist_numpy(queries, keys)
        d_nb = _kernels.sqdist_numba(queries, keys)
        assert np.array_equal(d_np, d_nb), "backends disagree on distances"

    store, _ = synth_generate(SynthConfig(clusters=5, dim=16, per_cluster=args.n // 10,
                                          flip_rate=0.1, seed=1))
    index = build_index(store)
    density = fit_density(store, h=0.5)
    k = min(250, len(index) - 1)
    rows[f"credibility end-to-end N={len(store)}"] = {
        _kernels.backend_name(): timeit(
            lambda: credibility_scores(index, density, store, store.ids, k),
            max(1, args.repeat // 2)),
    }

    for name, cols in rows.items():
        line = f"{name:<28}"
        for b in backends:
            line += f"{cols[b] * 1000:>10.1f}ms" if b in cols else f"{'-':>12}"
        print(line)


if __name__ == "__main__":
    main()
