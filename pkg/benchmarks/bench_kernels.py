"""Compare the compiled and pure-NumPy kernel backends.

Times per-frequency symbol inversion, symbol application and the pairwise
quadrature sum on the symbols of a Dirac-type tensor over an ``M^3`` grid, and
checks that both backends return the same numbers.

Usage::

    python benchmarks/bench_kernels.py --grid 32 --repeat 5 --threads 4
"""
import argparse
import timeit

import numpy as np

from fnes import kernels
from fnes.core import GridSpec, symbol_matrix
from fnes.problems import builtin_tensor


def workload(M, seed):
    grid = GridSpec.cube(3, M)
    xi = grid.frequency_grid().reshape(-1, 3)
    xi = xi[np.any(xi != 0, axis=1)]
    S = symbol_matrix(builtin_tensor("dirac"), xi)
    r = np.random.default_rng(seed)
    rhs = r.standard_normal((len(S), 4)) + 1j * r.standard_normal((len(S), 4))
    values = r.random(grid.size * 4)
    return S, rhs, values


def bench(mod, S, rhs, values, threads, repeat):
    inv, _ = mod.invert_symbols(S, threads)
    scale = np.full(len(S), -1j)
    cases = {
        "invert_symbols": lambda: mod.invert_symbols(S, threads),
        "apply_symbols": lambda: mod.apply_symbols(inv, rhs, scale, threads),
        "pairwise_sum": lambda: mod.pairwise_sum(values),
    }
    return {name: min(timeit.repeat(fn, number=1, repeat=repeat)) for name, fn in cases.items()}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--grid", type=int, default=32, help="points per axis")
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    S, rhs, values = workload(args.grid, args.seed)
    mods = kernels.backends()
    print(f"{len(S)} symbols of size 4x4, {len(values)} summands, threads = {args.threads}")
    results = {name: bench(mod, S, rhs, values, args.threads, args.repeat) for name, mod in mods.items()}

    if len(mods) == 2:
        a, _ = mods["cython"].invert_symbols(S, args.threads)
        b, _ = mods["python"].invert_symbols(S, 1)
        same_sum = mods["cython"].pairwise_sum(values) == mods["python"].pairwise_sum(values)
        print(f"max inverse difference {np.max(np.abs(a - b)):.2e}; pairwise sums identical: {same_sum}")

    print(f"{'kernel':<16}" + "".join(f"{name:>12}" for name in results) + ("     speedup" if len(mods) == 2 else ""))
    for case in next(iter(results.values())):
        row = f"{case:<16}" + "".join(f"{results[n][case] * 1e3:>10.2f}ms" for n in results)
        if len(mods) == 2:
            row += f"{results['python'][case] / results['cython'][case]:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
