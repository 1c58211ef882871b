"""Command-line front end.

    qdtl theory.qdtl script.qpf                 check every scripted conjecture
    qdtl --mode falsify theory.qdtl -c name     search for a counterexample
    qdtl --mode parse-only theory.qdtl [script] parse and pretty-print
    qdtl --corpus atc-flight                    use a bundled corpus entry

Exit codes: 0 proved / no counterexample, 1 open, 2 error, 3 counterexample.
"""
from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from pathlib import Path

from qdtl import corpus
from qdtl.calculus import ProofNode, ProofResult, catalog_hash, check_proof
from qdtl.parser import Theory, parse_formula, parse_proof_script, parse_theory, pretty
from qdtl.poly import SolverConfig
from qdtl.semantics import SimConfig, StateSampler, falsify
from qdtl.syntax import QdtlError, Signature

EXIT_OK, EXIT_OPEN, EXIT_ERROR, EXIT_CEX = 0, 1, 2, 3
SOLVER_ENV = "QDTL_SOLVER"


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qdtl", description=__doc__.split("\n")[0],
                                 formatter_class=argparse.RawDescriptionHelpFormatter,
                                 epilog=__doc__.split("\n", 2)[2])
    ap.add_argument("inputs", nargs="*", help="theory (.qdtl) and proof script (.qpf)")
    ap.add_argument("--mode", choices=("check", "falsify", "parse-only"), default="check")
    ap.add_argument("--corpus", metavar="ENTRY", help="bundled corpus entry (see --list)")
    ap.add_argument("--list", action="store_true", help="list bundled corpus entries")
    ap.add_argument("-c", "--conjecture", action="append", help="restrict to these conjectures")
    ap.add_argument("--formula", help="falsify this formula instead of a named conjecture")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--step", type=float, default=1e-3, help="RK4 step size")
    ap.add_argument("--loop-bound", type=int, default=3)
    ap.add_argument("--durations", help="comma-separated flow durations")
    ap.add_argument("--samples", type=int, default=None, help="falsifier samples (default 200)")
    ap.add_argument("--active", action="append", default=[], metavar="SORT=N",
                    help="objects per sort for the falsifier")
    ap.add_argument("--reserve", type=int, default=None, help="inactive objects per sort")
    ap.add_argument("--range", action="append", default=[], metavar="SYM=LO:HI|SYM=VALUE",
                    help="sampling range of a function symbol")
    ap.add_argument("--solver", default=os.environ.get(SOLVER_ENV),
                    help=f"external SMT solver binary (default ${SOLVER_ENV})")
    ap.add_argument("--timeout-ms", type=int, default=10000)
    ap.add_argument("--cache-dir", help="directory caching external solver answers")
    ap.add_argument("--clear-cache", action="store_true", help="empty --cache-dir first")
    ap.add_argument("--format", choices=("text", "json"), default="text")
    ap.add_argument("--jobs", type=int, default=1, help="parallel oracle calls")
    ap.add_argument("--out", help="write the report (or counterexample) to this file")
    return ap


# --------------------------------------------------------------------------
# input resolution


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"{path}: {e.strerror}") from None


def _inputs(args) -> tuple[Theory, list | None, dict]:
    """Theory, parsed scripts (or None) and the falsifier defaults."""
    if args.corpus:
        try:
            e = corpus.entry(args.corpus)
        except KeyError as err:
            raise UsageError(err.args[0]) from None
        th = corpus.load_theory(str(e.theory_path))
        scripts = [corpus.load_scripts(str(e.script_path))[e.conjecture]]
        args.conjecture = args.conjecture or [e.conjecture]
        return th, scripts, dict(e.falsify or {})
    theories = [p for p in args.inputs if p.endswith(".qdtl")]
    script_files = [p for p in args.inputs if p.endswith(".qpf")]
    other = [p for p in args.inputs if p not in theories and p not in script_files]
    if other:
        raise UsageError(f"unrecognised input {other[0]!r} (expected .qdtl or .qpf)")
    if len(theories) > 1:
        raise UsageError("give at most one theory file")
    th = parse_theory(_read(theories[0]), file=Path(theories[0]).name) if theories else Theory()
    scripts = None
    if script_files:
        scripts = []
        for p in script_files:
            scripts.extend(parse_proof_script(_read(p), file=Path(p).name))
    return th, scripts, {}


def _solver(args) -> SolverConfig | None:
    if args.clear_cache and args.cache_dir and os.path.isdir(args.cache_dir):
        shutil.rmtree(args.cache_dir)
    if not args.solver:
        return None
    return SolverConfig(args.solver, args.timeout_ms, args.cache_dir)


def _sim_config(args, defaults: dict) -> SimConfig:
    kw = {"h": args.step, "loop_bound": args.loop_bound, "seed": args.seed}
    if args.durations:
        kw["durations"] = tuple(float(d) for d in args.durations.split(","))
    elif "durations" in defaults:
        kw["durations"] = tuple(defaults["durations"])
    if "h" in defaults and args.step == 1e-3:
        kw["h"] = defaults["h"]
    try:
        return SimConfig(**kw)
    except ValueError as e:
        raise UsageError(f"simulator configuration: {e}") from None


def _number(text: str):
    from fractions import Fraction
    try:
        return Fraction(text)
    except ValueError:
        raise UsageError(f"not a number: {text!r}") from None


def _sampler(args, sig: Signature, defaults: dict) -> StateSampler:
    active = dict(defaults.get("active", {}))
    for item in args.active:
        sort, _, n = item.partition("=")
        if sort not in sig.sorts or not n.isdigit():
            raise UsageError(f"--active expects SORT=N with a declared sort, got {item!r}")
        active[sort] = int(n)
    for sort, decl in sig.sorts.items():
        if not decl.is_real:
            active.setdefault(sort, 2)
    ranges = {k: tuple(v) if isinstance(v, list) else v
              for k, v in defaults.get("ranges", {}).items()}
    for item in args.range:
        sym, _, spec = item.partition("=")
        if sym not in sig.functions:
            raise UsageError(f"--range: unknown symbol {sym!r}")
        lo, sep, hi = spec.partition(":")
        ranges[sym] = (float(_number(lo)), float(_number(hi))) if sep else _number(spec)
    reserve = args.reserve if args.reserve is not None else defaults.get("reserve", 1)
    return StateSampler(sig, active, ranges, reserve=reserve,
                        default_range=tuple(defaults.get("default_range", (-5, 5))))


def _declare_free(f, sig: Signature):
    """Undeclared constants of an ad hoc formula become real-valued symbols."""
    from qdtl.syntax import App, walk
    for node in walk(f):
        if isinstance(node, App) and not node.args and node.func not in sig.functions:
            sig.add_function(node.func, (), "R")


def _selected(args, names) -> list[str]:
    if not args.conjecture:
        return list(names)
    missing = [c for c in args.conjecture if c not in names]
    if missing:
        raise UsageError(f"unknown conjecture {missing[0]!r}")
    return [n for n in names if n in args.conjecture]


# --------------------------------------------------------------------------
# rendering


def render_tree(node: ProofNode, indent: int = 0) -> list[str]:
    pad = "  " * indent
    label = node.rule or ("closed" if node.closed else "OPEN")
    if node.position:
        label += f" {node.position}"
    if node.args:
        label += " " + " ".join(f'{k}="{v}"' for k, v in sorted(node.args.items()))
    if node.closed:
        label += f"  [{node.closed}]"
    lines = [f"{pad}{label:<28} {node.sequent}"]
    for c in node.children:
        lines.extend(render_tree(c, indent + 1))
    return lines


def render_result(r: ProofResult) -> str:
    lines = [f"{r.conjecture}: {r.status.upper()}  ({r.stats['steps']} rule applications)"]
    lines.extend(render_tree(r.root, 1))
    for e in r.errors:
        where = f" at {e['at']}" if e.get("at") else ""
        lines.append(f"  error{where} (goal {e.get('goal', 'root')}): {e['message']}")
    for g in r.open_goals:
        hint = f"  try: {', '.join(g['suggest'])}" if g["suggest"] else ""
        lines.append(f"  open goal {g['goal']}: {g['sequent']}{hint}")
    return "\n".join(lines)


def _emit(args, text: str):
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


# --------------------------------------------------------------------------
# commands


def cmd_check(args) -> int:
    th, scripts, _ = _inputs(args)
    if scripts is None:
        raise UsageError("check mode needs a proof script (.qpf)")
    by_name = {s.conjecture: s for s in scripts}
    for name in by_name:
        if name not in th.conjectures:
            raise UsageError(f"proof for unknown conjecture {name!r}")
    names = _selected(args, list(by_name))
    solver = _solver(args)
    results = [check_proof(th.conjectures[n], by_name[n], th.signature, th.definitions,
                           seed=args.seed, solver=solver, jobs=args.jobs, name=n) for n in names]
    if args.format == "json":
        doc = {"catalog": catalog_hash(), "seed": args.seed,
               "results": [r.to_json() for r in results]}
        _emit(args, json.dumps(doc, sort_keys=True, indent=2, default=str))
    else:
        _emit(args, "\n\n".join(render_result(r) for r in results))
    return EXIT_OK if all(r.proved for r in results) else EXIT_OPEN


def cmd_falsify(args) -> int:
    th, _, defaults = _inputs(args)
    sig = th.signature
    if args.formula:
        f = parse_formula(args.formula, sig, th.definitions)
        _declare_free(f, sig)
        targets = {"formula": f}
    else:
        targets = {n: th.conjectures[n] for n in _selected(args, list(th.conjectures))}
    if not targets:
        raise UsageError("nothing to falsify: give --formula or a theory with conjectures")
    cfg = _sim_config(args, defaults)
    sampler = _sampler(args, sig, defaults)
    samples = args.samples if args.samples is not None else defaults.get("samples", 200)
    if samples < 1:
        raise UsageError("--samples must be positive")
    reports, found = [], False
    for name, f in targets.items():
        cx = falsify(sampler, f, cfg, samples)
        found = found or cx is not None
        reports.append({"conjecture": name, "samples": samples,
                        "counterexample": None if cx is None else json.loads(cx.dumps())})
    if args.format == "json" or args.out:
        _emit(args, json.dumps({"catalog": catalog_hash(), "seed": args.seed, "results": reports},
                               sort_keys=True, indent=2))
    else:
        for rep in reports:
            cx = rep["counterexample"]
            if cx is None:
                print(f"{rep['conjecture']}: no counterexample in {samples} samples")
            else:
                print(f"{rep['conjecture']}: counterexample at sample {cx['sample']}")
                for step in cx["violated"]:
                    print(f"  fails: {step}")
                print(json.dumps(cx["state"], sort_keys=True))
    return EXIT_CEX if found else EXIT_OK


def cmd_parse(args) -> int:
    th, scripts, _ = _inputs(args)
    out = {"sorts": sorted(th.signature.sorts), "definitions": sorted(th.definitions),
           "conjectures": {n: pretty(f) for n, f in th.conjectures.items()}}
    if scripts is not None:
        out["scripts"] = {s.conjecture: len(s.commands()) for s in scripts}
    if args.format == "json":
        _emit(args, json.dumps(out, sort_keys=True, indent=2))
    else:
        lines = [f"{n}: {f}" for n, f in out["conjectures"].items()]
        lines += [f"proof {n}: {k} commands" for n, k in out.get("scripts", {}).items()]
        _emit(args, "\n".join(lines) if lines else "ok")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.list:
        for e in corpus.manifest():
            print(f"{e.name:28s} {e.expected:7s} {e.note}")
        return EXIT_OK
    if args.jobs < 1:
        print("qdtl: --jobs must be at least 1", file=sys.stderr)
        return EXIT_ERROR
    if not args.inputs and not args.corpus and not args.formula:
        ap.print_usage(sys.stderr)
        return EXIT_ERROR
    run = {"check": cmd_check, "falsify": cmd_falsify, "parse-only": cmd_parse}[args.mode]
    try:
        return run(args)
    except (UsageError, QdtlError) as e:
        print(f"qdtl: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
