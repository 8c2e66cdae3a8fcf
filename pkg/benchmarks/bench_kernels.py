"""Compare the compiled and numpy kernels on a realistic sweep.

    python benchmarks/bench_kernels.py [--cells 120,60] [--steps 2000] [--repeat 3] [--csv out.csv]

Both backends are imported directly, so the comparison runs whatever
LIMITVALUE_PURE_PYTHON says. Prints one row per (kernel, backend) and the
largest disagreement between backends.
"""

import argparse
import csv
import sys
import time

import numpy as np

from limitvalue import _kernels_py
from limitvalue.examples import builtin
from limitvalue.grid import GridSpec
from limitvalue.integrate import rk4_step
from limitvalue.reach import transition_table

try:
    from limitvalue import _kernels as _compiled
except ImportError:
    _compiled = None


def sweep_inputs(problem, grid, step):
    C, nu = grid.n_cells, problem.n_controls
    Y = np.repeat(grid.centers(), nu, axis=0)
    U = np.tile(problem.codebook, (C, 1))
    F, cost = rk4_step(problem, Y, U, step, problem.substep(step))
    idx, w = grid.interp_weights(F)
    J = idx.shape[1]
    return (np.zeros(C), np.ascontiguousarray(cost.reshape(C, nu)),
            np.ascontiguousarray(idx.reshape(C, nu, J).astype(np.int64)),
            np.ascontiguousarray(w.reshape(C, nu, J)))


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--example", default="ex5")
    ap.add_argument("--cells", default="120,60")
    ap.add_argument("--step", type=float, default=0.05)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, default=1, help="threads for the compiled sweep")
    ap.add_argument("--csv")
    args = ap.parse_args(argv)

    problem = builtin(args.example).problem
    grid = GridSpec(problem.box, [int(c) for c in args.cells.split(",")])
    v0, cost, idx, w = sweep_inputs(problem, grid, args.step)
    table = transition_table(problem, grid, args.step)
    q = np.random.default_rng(0).random(grid.n_cells)

    backends = [("python", _kernels_py)]
    if _compiled is not None:
        backends.append(("cython", _compiled))
    else:
        print("compiled kernels not built; timing the numpy fallback only", file=sys.stderr)

    rows, results = [], {}
    for name, mod in backends:
        t, out = best_of(lambda: mod.backward_sweep(v0, cost, idx, w, args.steps, args.steps, args.threads), args.repeat)
        rows.append(("backward_sweep", name, t))
        results[("sweep", name)] = np.asarray(out[0])
        t, out = best_of(lambda: mod.min_closure(q, table, 10 ** 9), args.repeat)
        rows.append(("min_closure", name, t))
        results[("closure", name)] = np.asarray(out[0])

    base = {k: t for k, b, t in rows if b == "python"}
    print(f"{'kernel':16s} {'backend':8s} {'seconds':>10s} {'speedup':>8s}")
    for k, b, t in rows:
        print(f"{k:16s} {b:8s} {t:10.4f} {base[k] / t:8.1f}")
    if _compiled is not None:
        for kind in ("sweep", "closure"):
            diff = float(np.max(np.abs(results[(kind, "python")] - results[(kind, "cython")])))
            print(f"max |python - cython| ({kind}): {diff:.3e}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["kernel", "backend", "seconds", "cells", "steps"])
            for k, b, t in rows:
                wr.writerow([k, b, repr(t), grid.n_cells, args.steps])


if __name__ == "__main__":
    main()
