"""Time the compiled and pure-Python tridiagonal kernels, and both linear-solve routes.

    python3 benchmarks/bench_kernels.py [--sizes 1000 10000 100000] [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from grafflow import kernels
from grafflow.discretization import assemble_h, build_mesh
from grafflow.graph import build_graph, delta_condition, dirichlet_condition
from grafflow.linsolve import StructuredSystem, solve_linear


def operator(n_edge):
    g = build_graph([("e1", "O", "L", 30.0), ("e2", "O", "R", 30.0)],
                    {"O": delta_condition(2, -1.0), "L": dirichlet_condition(), "R": dirichlet_condition()})
    return assemble_h(g, build_mesh(g, per_edge_counts=n_edge))


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[1000, 10_000, 100_000])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--dt", type=float, default=1e-2)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    print(f"backends: {backends} (default {kernels.BACKEND})")
    header = ["n_total"] + [f"structured[{b}] ms" for b in backends] + ["sparse LU ms", "max |diff|"]
    print("  ".join(f"{h:>20}" for h in header))
    rng = np.random.default_rng(0)
    for n_edge in args.sizes:
        H = operator(n_edge)
        n = H.mesh.n_total
        gvals, rhs = rng.uniform(0, 2, n), rng.normal(size=n)
        row, sols = [n], []
        for b in backends:
            system = StructuredSystem(H, args.dt, kernel=b)
            row.append(1e3 * best(lambda: system.solve(gvals, rhs), args.repeat))
            sols.append(system.solve(gvals, rhs))
        mat = StructuredSystem(H, args.dt).matrix(gvals)
        row.append(1e3 * best(lambda: solve_linear(mat, rhs), args.repeat))
        sols.append(solve_linear(mat, rhs))
        row.append(max(float(np.abs(s - sols[0]).max()) for s in sols))
        print("  ".join(f"{v:>20}" if isinstance(v, int) else f"{v:>20.3g}" for v in row))


if __name__ == "__main__":
    main()
