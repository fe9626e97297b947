"""Command line entry point.

    binsub solve FILE [--format binsub|retypd] [--var V ...] [--emit ctype|polar|dot|json]
    binsub infer FILE [--emit json|ctype|dot] [--repeat N] [--jobs N] [--monomorphic]
    binsub distance INFERRED GROUND [--csv] [--plot PNG]
    binsub bench --out DIR [--sizes 16,32,...] [--repeat N]

Exit status is 1 for input errors and 2 for internal errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import statistics
import sys
from pathlib import Path

from .automata import path_language, simplify, to_dot, to_json as automaton_json, build_automaton
from .biunify import coalesce, solve
from .constraints import ParseError, constraint_vars, parse_constraints
from .interproc import infer
from .ir import MissingCalleeType, UnresolvedCall, parse_ir
from .lattice import LatticeError, default_lattice, load_lattice
from .lowering import TypeEnvironment, env_to_json, lower, render, render_env, render_signature, to_json
from .metrics import compare, load_signatures
from .types import NEG, POS, TypeError_, Var, show

log = logging.getLogger("binsub")


class InputError(Exception):
    pass


def _read(path: str) -> str:
    try:
        if path == "-":
            return sys.stdin.read()
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(str(exc)) from exc


def _lattice(args):
    return load_lattice(args.lattice) if args.lattice else default_lattice()


def cmd_solve(args) -> int:
    lattice = _lattice(args)
    cs = parse_constraints(_read(args.file), form=args.format, lattice=lattice)
    store = solve(cs, lattice)
    for d in store.diagnostics:
        log.warning("%s", d)
    names = args.var or sorted(constraint_vars(cs))
    pol = POS if args.polarity == "pos" else NEG
    env = TypeEnvironment()
    out_json = {}
    for name in names:
        auto = simplify(Var(name), pol, lattice, store.bounds_of)
        if args.depth:
            nfa = build_automaton(Var(name), pol, lattice, store.bounds_of)
            if path_language(nfa, args.depth) != path_language(auto, args.depth):
                log.error("%s: simplified automaton changed the path language", name)
                return 2
        if args.emit == "polar":
            print(f"{name}: {show(coalesce(store, Var(name), pol))}")
        elif args.emit == "dot":
            print(to_dot(auto, name.replace("$", "_").replace("#", "_")), end="")
        else:
            ct = lower(auto, env, lattice)
            if args.emit == "json":
                out_json[name] = {"ctype": to_json(ct), "automaton": automaton_json(auto)}
            else:
                print(render_signature(name, ct))
    if args.emit == "json" and names:
        print(json.dumps({"vars": out_json, "types": env_to_json(env)}, indent=2, sort_keys=True))
    elif args.emit == "ctype" and env.decls:
        print()
        print(render_env(env))
    return 0


def cmd_infer(args) -> int:
    lattice = _lattice(args)
    program = parse_ir(_read(args.file))
    runs = []
    for _ in range(max(1, args.repeat)):
        runs.append(infer(program, lattice, polymorphic=not args.monomorphic, jobs=args.jobs))
    res = runs[-1]
    for f in res.timings_ns:
        res.timings_ns[f] = int(statistics.mean(r.timings_ns[f] for r in runs))
    for d in res.diagnostics:
        log.warning("%s", d)
    if args.emit == "json":
        print(json.dumps(res.to_json(timing=not args.no_timing), indent=2, sort_keys=True))
    elif args.emit == "dot":
        for f in sorted(res.automata):
            print(to_dot(res.automata[f], f), end="")
    else:
        for f in sorted(res.lowered):
            print(render_signature(f, res.lowered[f]))
            if f in res.refined_lowered:
                print(f"/* refined: {render(res.refined_lowered[f])} */")
        if res.env.decls:
            print()
            print(render_env(res.env))
    return 0


def cmd_distance(args) -> int:
    lattice = _lattice(args)
    try:
        inferred = load_signatures(json.loads(_read(args.inferred)))
        ground = load_signatures(json.loads(_read(args.ground)))
    except (ValueError, KeyError) as exc:
        raise InputError(f"bad signature file: {exc}") from exc
    rows, mean, warnings = compare(inferred, ground, lattice)
    for w in warnings:
        log.warning("%s", w)
    if args.csv:
        print("function,distance")
        for name, d in rows.items():
            print(f"{name},{float(d):.6f}")
        print(f"mean,{float(mean):.6f}")
    else:
        print(json.dumps({"functions": {n: float(d) for n, d in rows.items()}, "mean": float(mean),
                          "max_distance": lattice.max_distance}, indent=2, sort_keys=True))
    if args.plot:
        from .report import plot_distances

        plot_distances(rows, Path(args.plot))
    return 0


def cmd_bench(args) -> int:
    from .report import growth_exponent, plot, run_bench, write_csv

    sizes = [int(x) for x in args.sizes.split(",")]
    rows = run_bench(sizes, seed=args.seed, repeat=args.repeat, lattice=_lattice(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(rows, out / "bench.csv")
    plot(rows, out / "bench.png")
    print("constraints,solve_ms,infer_ms,states")
    for r in rows:
        print(f"{r.constraints},{r.solve_ns / 1e6:.3f},{r.infer_ns / 1e6:.3f},{r.states}")
    if len(rows) > 1:
        xs = [r.constraints for r in rows]
        print(f"# growth exponent: solve {growth_exponent(xs, [r.solve_ns for r in rows]):.2f}, "
              f"infer {growth_exponent(xs, [r.infer_ns for r in rows]):.2f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--lattice", metavar="PATH", help="atomic lattice config (default: flat integer/float lattice)")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized parts")
    common.add_argument("--depth", type=int, default=0,
                        help="check simplification against the path language up to this depth")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="binsub", description="Subtyping-based type inference for lifted binaries.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="solve a constraint file")
    s.add_argument("file")
    s.add_argument("--format", choices=["binsub", "retypd"], default="binsub")
    s.add_argument("--var", action="append", help="variable to report (repeatable; default all)")
    s.add_argument("--emit", choices=["ctype", "polar", "dot", "json"], default="ctype")
    s.add_argument("--polarity", choices=["neg", "pos"], default="neg",
                   help="occurrence polarity: neg uses upper bounds, pos lower bounds")
    s.set_defaults(func=cmd_solve)

    i = sub.add_parser("infer", parents=[common], help="infer signatures for an IR program")
    i.add_argument("file")
    i.add_argument("--emit", choices=["json", "ctype", "dot"], default="json")
    i.add_argument("--repeat", type=int, default=1, help="runs to average timings over")
    i.add_argument("--jobs", type=int, default=1, help="threads for independent SCCs")
    i.add_argument("--monomorphic", action="store_true", help="disable callsite instantiation")
    i.add_argument("--no-timing", action="store_true", help="omit timing fields from JSON")
    i.set_defaults(func=cmd_infer)

    d = sub.add_parser("distance", parents=[common], help="compare inferred signatures to ground truth")
    d.add_argument("inferred")
    d.add_argument("ground")
    d.add_argument("--csv", action="store_true", help="CSV instead of JSON")
    d.add_argument("--plot", metavar="PNG", help="also write a bar chart of distances")
    d.set_defaults(func=cmd_distance)

    b = sub.add_parser("bench", parents=[common], help="scaling benchmark on synthetic functions")
    b.add_argument("--out", default="bench_out", help="directory for bench.csv and bench.png")
    b.add_argument("--sizes", default="16,32,64,128,256,512,704,1024")
    b.add_argument("--repeat", type=int, default=3)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    random.seed(args.seed)
    try:
        return args.func(args)
    except (InputError, ParseError, TypeError_, LatticeError, UnresolvedCall, MissingCalleeType) as exc:
        log.error("%s", exc)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.error("internal error: %s", exc, exc_info=args.verbose)
        return 2


if __name__ == "__main__":
    sys.exit(main())
