"""Command-line interface.

Exit codes: 0 success, 1 operational error, 2 a hypothesis check or a
synthesis was refuted (the report is still written).
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .examples import NAMES, Settings, builtin, ex3_steer, ex3_tiny
from .grid import GridSpec
from .integrate import PiecewiseConstantControl
from .nonexpansive import (check_delta, check_scalar, l1_metric, sample_pairs, shadow_control,
                           squared_euclidean_metric)
from .problem import load_problem, normalize_cost, validate_hypotheses
from .reach import propagate_reach, reach_saturation
from .synth import synthesize
from .value import VStarOracle, build_tables, limit_diagnostics, value_backward

EXIT_OK, EXIT_ERROR, EXIT_REFUTED = 0, 1, 2

VARIANTS = {"ex3_tiny": ex3_tiny, "ex3_steer": ex3_steer}
COMMANDS = ("validate", "value", "aux", "vstar", "check", "shadow", "synth", "report", "export-example")


def _floats(text):
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _grid_arg(text):
    """'a:b:s' (inclusive range) or a comma list."""
    if ":" in text:
        a, b, s = (float(x) for x in text.split(":"))
        n = int(round((b - a) / s))
        return [round(a + k * s, 12) for k in range(n + 1)]
    return _floats(text)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("problem")
    src.add_argument("--example", help=f"built-in example: {', '.join(NAMES + tuple(VARIANTS))}")
    src.add_argument("--problem", help="JSON problem file")
    src.add_argument("--z", type=_floats, help="start state (default: the problem's y0)")
    disc = common.add_argument_group("discretization")
    disc.add_argument("--cells", type=lambda s: [int(x) for x in s.split(",")], help="grid nodes per axis")
    disc.add_argument("--step", type=float, help="dynamic-programming time step")
    disc.add_argument("--T", type=float, help="horizon")
    disc.add_argument("--rollout-step", type=float, help="control step of rollouts")
    disc.add_argument("--m-grid", type=_grid_arg, help="shifts, 'a:b:s' or a comma list")
    disc.add_argument("--t-grid", type=_grid_arg, help="horizons, 'a:b:s' or a comma list")
    disc.add_argument("--beam-width", type=int)
    disc.add_argument("--n-random", type=int)
    disc.add_argument("--no-grid-route", action="store_true", help="use rollouts only for V_{m,t}")
    run = common.add_argument_group("run")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", default="out", help="output directory")
    run.add_argument("--threads", type=int, default=1,
                     help="threads for the compiled Bellman sweep; results do not depend on it")
    run.add_argument("--config", help="JSON config (e.g. a manifest's 'config') supplying defaults")

    p = argparse.ArgumentParser(prog="limitvalue", description="Limit values of long-run average control problems.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    subs = {}
    subs["validate"] = sub.add_parser("validate", parents=[common], help="sample the Lipschitz and growth bounds")
    s = subs["value"] = sub.add_parser("value", parents=[common], help="backward DP for V_t at the start state")
    s.add_argument("--every", type=float, help="spacing of the reported horizons (default T/20)")
    subs["aux"] = sub.add_parser("aux", parents=[common], help="tables V_{m,t}, W_{m,n} and V*")
    subs["vstar"] = sub.add_parser("vstar", parents=[common], help="V* estimate with bracket")
    s = subs["check"] = sub.add_parser("check", parents=[common], help="nonexpansivity checks")
    s.add_argument("--condition", choices=("scalar", "delta"), default="scalar")
    s.add_argument("--metric", choices=("sqeuclid", "l1"), default="sqeuclid")
    s.add_argument("--pairs", type=int, default=1000, help="random in-box pairs")
    s.add_argument("--reach-pairs", type=int, default=0, help="reach-set cell centers to pair up")
    s.add_argument("--pair", type=_floats, action="append", help="explicit pair y1,y2 (flattened)")
    s.add_argument("--tol", type=float)
    s = subs["shadow"] = sub.add_parser("shadow", parents=[common], help="greedy shadow control")
    s.add_argument("--y1", type=_floats, required=True)
    s.add_argument("--y2", type=_floats, required=True)
    s.add_argument("--metric", choices=("sqeuclid", "l1"), default="sqeuclid")
    s.add_argument("--control", default="random", help="'random' or a comma list of codebook indices")
    s.add_argument("--tol", type=float, default=1e-6)
    s = subs["synth"] = sub.add_parser("synth", parents=[common], help="stage-concatenation synthesis")
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--max-stages", type=int, default=6)
    s.add_argument("--T-max", type=float, default=500.0)
    subs["report"] = sub.add_parser("report", parents=[common], help="limit-value diagnostics as text and JSON")
    s = subs["export-example"] = sub.add_parser("export-example", parents=[common], help="write a built-in example as a JSON problem")
    s.add_argument("name", nargs="?", help="example name (defaults to --example)")
    return p, subs


# --------------------------------------------------------------------------
# setup


def _load(args):
    if bool(args.example) == bool(args.problem):
        raise ValueError("give exactly one of --example or --problem")
    if args.example:
        if args.example in VARIANTS:
            spec = VARIANTS[args.example]()
        else:
            spec = builtin(args.example)
        problem, st = spec.problem, spec.settings
    else:
        problem = load_problem(args.problem)
        st = Settings(cells=(41,) * problem.dim, step=0.05, T=20.0, rollout_step=0.05,
                      m_grid=(0.0, 1.0, 2.0, 5.0), t_grid=(1.0, 2.0, 5.0, 10.0, 20.0))
    problem = normalize_cost(problem, seed=args.seed)
    budget = st.budget
    if args.beam_width is not None:
        budget = replace(budget, beam_width=args.beam_width)
    if args.n_random is not None:
        budget = replace(budget, n_random=args.n_random)
    budget = replace(budget, seed=args.seed)
    st = Settings(
        cells=tuple(args.cells) if args.cells else st.cells,
        step=args.step or st.step,
        T=args.T or st.T,
        rollout_step=args.rollout_step or st.rollout_step,
        m_grid=tuple(args.m_grid) if args.m_grid else st.m_grid,
        t_grid=tuple(args.t_grid) if args.t_grid else st.t_grid,
        budget=budget,
    )
    z = np.asarray(args.z, dtype=float) if args.z else problem.y0
    return problem, st, z


def _effective_config(args, st, z):
    cfg = {k: v for k, v in vars(args).items() if k not in ("config",)}
    cfg.update({
        "cells": list(st.cells), "step": st.step, "T": st.T, "rollout_step": st.rollout_step,
        "m_grid": list(st.m_grid), "t_grid": list(st.t_grid),
        "beam_width": st.budget.beam_width, "n_random": st.budget.n_random, "z": [float(v) for v in z],
    })
    return cfg


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


def _field_and_reach(problem, st, z, threads=1):
    grid = GridSpec(problem.box, st.cells)
    field = value_backward(problem, grid, max(st.t_grid), st.step, n_threads=threads)
    m_max = max(st.m_grid)
    reach = propagate_reach(problem.with_start(z), grid, m_max, st.step) if m_max > 0 else None
    return field, reach


def _tables(args, problem, st, z):
    field = reach = None
    if not args.no_grid_route:
        field, reach = _field_and_reach(problem, st, z, args.threads)
    tabs = build_tables(problem, z, st.m_grid, st.t_grid, st.rollout_step, st.budget, field=field, reach=reach)
    return tabs, field, reach


# --------------------------------------------------------------------------
# commands


def cmd_validate(args, problem, st, z, out):
    rep = validate_hypotheses(problem, samples=1000, seed=args.seed)
    _write_json(out / "validation.json", rep.to_dict())
    print(f"lipschitz: observed {rep.lipschitz_observed:.6g} vs declared {rep.lipschitz_declared}")
    print(f"growth:    observed {rep.growth_observed:.6g} vs declared {rep.growth_declared}")
    for f in rep.flags:
        print(f"flag: {f}")
    return EXIT_OK if rep.passed else EXIT_REFUTED


def cmd_value(args, problem, st, z, out):
    grid = GridSpec(problem.box, st.cells)
    every = args.every or st.T / 20
    field = value_backward(problem, grid, st.T, st.step, n_threads=args.threads)
    path = out / "value.csv"
    ts = []
    k = 1
    while k * every <= st.T + 1e-9:
        ts.append(round(k * every, 12))
        k += 1
    with open(path, "w") as fh:
        fh.write("t,V_t\n")
        for t in ts:
            fh.write(f"{t!r},{float(field.V(t, z)[0])!r}\n")
    field.to_csv(out / "field_layers.csv")
    print(f"wrote {path} ({len(ts)} horizons); increments in [{field.increment_min:.3g}, {field.increment_max:.3g}]")
    if field.contaminated:
        print(f"warning: {100 * field.escape_fraction:.1f}% of foot points leave the box (boundary-contaminated)")
    return EXIT_OK


def cmd_aux(args, problem, st, z, out):
    tabs, field, reach = _tables(args, problem, st, z)
    tabs.to_csv(out / "tables.csv")
    _write_json(out / "tables.json", tabs.to_dict())
    print(f"V* = {tabs.v_star:.6g}, bracket [{tabs.bracket[0]:.6g}, {tabs.bracket[1]:.6g}], "
          f"V+ (empirical) = {tabs.vplus:.6g}, V- (empirical) = {tabs.vminus:.6g}, tau_disc = {tabs.tau_disc:.3g}")
    return EXIT_OK


def cmd_vstar(args, problem, st, z, out):
    tabs, field, reach = _tables(args, problem, st, z)
    res = {"z": z.tolist(), "v_star": tabs.v_star, "bracket": list(tabs.bracket), "tau_disc": tabs.tau_disc}
    _write_json(out / "vstar.json", res)
    print(f"V*({z.tolist()}) = {tabs.v_star:.6g}  bracket [{tabs.bracket[0]:.6g}, {tabs.bracket[1]:.6g}]")
    return EXIT_OK


def _metric(name, problem):
    return l1_metric() if name == "l1" else squared_euclidean_metric(problem, seed=0)


def cmd_check(args, problem, st, z, out):
    if args.pair:
        pairs = np.array([np.asarray(p).reshape(2, problem.dim) for p in args.pair])
    else:
        reach = None
        if args.reach_pairs:
            grid = GridSpec(problem.box, st.cells)
            reach = propagate_reach(problem, grid, max(st.m_grid), st.step)
        pairs = sample_pairs(problem, reach, n_reach=args.reach_pairs, n_random=args.pairs, seed=args.seed)
    if args.condition == "scalar":
        rep = check_scalar(problem, pairs, tol=1e-9 if args.tol is None else args.tol)
    else:
        rep = check_delta(problem, _metric(args.metric, problem), pairs, tol=1e-6 if args.tol is None else args.tol)
    _write_json(out / f"check_{args.condition}.json", rep.to_dict())
    with open(out / f"check_{args.condition}_witness.csv", "w") as fh:
        d = problem.dim
        fh.write(",".join([f"y1_{i + 1}" for i in range(d)] + [f"y2_{i + 1}" for i in range(d)]
                          + ["u", "v", "value"]) + "\n")
        w = rep.witness
        fh.write(",".join(repr(float(x)) for x in w["y1"] + w["y2"]) + f",{w['u']},{w['v']},{w['value']!r}\n")
    print(rep.to_text())
    return EXIT_OK if rep.passed else EXIT_REFUTED


def cmd_shadow(args, problem, st, z, out):
    K = int(round(st.T / st.rollout_step))
    if args.control == "random":
        idx = np.random.default_rng(args.seed).integers(0, problem.n_controls, K)
    else:
        idx = np.array([int(x) for x in args.control.split(",")])
    u = PiecewiseConstantControl(st.rollout_step, idx)
    res = shadow_control(problem, _metric(args.metric, problem), args.y1, args.y2, u, u.duration, args.tol)
    _write_json(out / "shadow.json", res.to_dict())
    with open(out / "shadow_trace.csv", "w") as fh:
        fh.write("t,delta\n")
        for t, d in zip(res.times, res.trace):
            fh.write(f"{float(t)!r},{float(d)!r}\n")
    print(f"shadow {'succeeded' if res.success else 'failed'}: max delta {res.trace.max():.6g} "
          f"vs initial {res.trace[0]:.6g}" + ("" if res.success else f", first exceedance t={res.first_exceedance}"))
    return EXIT_OK if res.success else EXIT_REFUTED


def cmd_synth(args, problem, st, z, out):
    tabs, field, reach = _tables(args, problem, st, z)
    oracle = VStarOracle(problem, st.m_grid, st.t_grid, st.rollout_step, st.budget)
    cert = synthesize(problem, z, args.alpha, st, args.max_stages, oracle=oracle, tables=tabs,
                      T_range=(10.0, args.T_max), seed=args.seed)
    _write_json(out / "certificate.json", cert.to_dict())
    cert.to_csv(out / "gamma_table.csv")
    print(f"verdict: {cert.verdict}" + (f" ({cert.failure.get('kind')}: {cert.failure.get('reason')})"
                                          if not cert.success else ""))
    if cert.long_run:
        print(f"long-run: min gamma_T over {cert.long_run['n']} seeded controls at T={cert.long_run['T']:g}: "
              f"{cert.long_run['min_gamma_T']:.4f}")
    if cert.success:
        return EXIT_OK
    return EXIT_REFUTED if cert.structural else EXIT_ERROR


def cmd_report(args, problem, st, z, out):
    tabs, field, reach = _tables(args, problem, st, z)
    rep = limit_diagnostics(problem, tabs, field)
    d = rep.to_dict()
    lines = [rep.to_text()]
    if reach is not None:
        sat = reach_saturation(problem.with_start(z), reach.grid, st.step, max(st.m_grid), [0.01, 0.1], reach=reach)
        d["saturation"] = sat.to_dict()
        lines.append(f"{sat.label}: " + ", ".join(
            f"eps {e:g} " + (f"saturated at m0={m:g}" if ok else "not saturated")
            for e, m, ok in zip(sat.eps, sat.m0, sat.saturated)))
    flags = [] if problem.cost_continuous else ["H1-violating (discontinuous cost)"]
    lines += [f"flag: {f}" for f in flags]
    d["flags"] = flags
    text = "\n".join(lines)
    (out / "report.txt").write_text(text + "\n")
    _write_json(out / "report.json", d)
    print(text)
    return EXIT_OK if rep.passed else EXIT_REFUTED


def cmd_export(args, problem, st, z, out):
    name = args.name or args.example
    spec = VARIANTS[name]() if name in VARIANTS else builtin(name)
    path = out / f"{spec.name}.json"
    path.write_text(spec.to_json() + "\n")
    print(f"wrote {path}")
    return EXIT_OK


HANDLERS = {
    "validate": cmd_validate, "value": cmd_value, "aux": cmd_aux, "vstar": cmd_vstar, "check": cmd_check,
    "shadow": cmd_shadow, "synth": cmd_synth, "report": cmd_report, "export-example": cmd_export,
}


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            cfg = json.loads(Path(known.config).read_text())
        except (OSError, ValueError) as exc:
            print(f"error: cannot read config {known.config}: {exc}", file=sys.stderr)
            return EXIT_ERROR
        cfg = cfg.get("config", cfg)
        # config values become defaults; the command line still wins
        cmd = next((a for a in argv if a in subs), None)
        if cmd is None or cfg.get("command", cmd) != cmd:
            print(f"error: config is for '{cfg.get('command')}', command line asks for '{cmd}'", file=sys.stderr)
            return EXIT_ERROR
        subs[cmd].set_defaults(**{k: v for k, v in cfg.items() if k not in ("command", "config")})
    args = parser.parse_args(argv)
    if args.command == "export-example" and not args.problem and not args.example and args.name:
        args.example = args.name
    t0 = time.perf_counter()
    try:
        if args.command == "export-example" and args.problem:
            raise ValueError("export-example takes a built-in name")
        problem, st, z = _load(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        cfg = _effective_config(args, st, z)
        if problem.cost_transform != (0.0, 1.0):
            a, b = problem.cost_transform
            print(f"costs are normalized: original = {a!r} + {b!r} * reported")
        code = HANDLERS[args.command](args, problem, st, z, out)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    manifest = {
        "config": cfg, "exit_code": code, "wall_time_s": time.perf_counter() - t0,
        "versions": {"limitvalue": __version__, "python": platform.python_version(), "numpy": np.__version__,
                     "kernels": kernels.BACKEND},
        "cost_transform": list(problem.cost_transform),
        "threads": args.threads,
    }
    _write_json(out / "manifest.json", manifest)
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
