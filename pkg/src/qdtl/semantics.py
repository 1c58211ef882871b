"""Executable semantics: hybrid traces, formula valuation and reachability.

States hold a finite pool of objects per sort, a table for every function
symbol and an assignment to logical variables.  Flows are integrated with
fixed-step RK4; the same integrator backs both the trace semantics and the
reachability relation, so their final states agree bit for bit.
"""
from __future__ import annotations

import functools
import itertools
import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator

from qdtl.syntax import (
    REAL, Add, Always, And, App, Assign, Box, Choice, Dia, Div, Eq, Eventually, Exists,
    FalseF, Forall, Formula, Geq, Gt, Implies, Ite, Loop, Mul, Neg, New, Not, Num, ODE, Or, Pow,
    Prime, Program, QdtlError, Seq, Signature, Sub, Term, Test, TrueF, Var, desugar_new,
)


class SemanticsError(QdtlError):
    pass


class BudgetExceeded(SemanticsError):
    """The program has more sampled traces than the configured budget."""


class UninterpretedError(SemanticsError):
    """A flexible symbol is read at a position the state does not define."""


class _Abort:
    __slots__ = ()

    def __repr__(self):
        return "ABORT"

    def key(self):
        return ("ABORT",)


ABORT = _Abort()


def _fmt_value(v):
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    return v


class State:
    """Immutable interpretation state.

    ``table`` maps ``(symbol, args)`` to a value; object values are names
    like ``"A0"``.  ``E`` reads 0 wherever the table is silent.
    """

    __slots__ = ("pools", "table", "vars", "_key", "_hash")

    def __init__(self, pools: dict[str, tuple[str, ...]], table: dict, vars: dict | None = None):
        self.pools = {s: tuple(p) for s, p in pools.items()}
        self.table = dict(table)
        self.vars = dict(vars or {})
        self._key = None
        self._hash = None

    def key(self):
        if self._key is None:
            self._key = (
                tuple(sorted(self.pools.items())),
                tuple(sorted(self.table.items(), key=lambda kv: (kv[0][0], tuple(map(str, kv[0][1]))))),
                tuple(sorted(self.vars.items())),
            )
        return self._key

    def __eq__(self, other):
        return isinstance(other, State) and self.key() == other.key()

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self.key())
        return self._hash

    def __repr__(self):
        body = ", ".join(f"{f}({','.join(map(str, a))})={_fmt_value(v)}" if a else f"{f}={_fmt_value(v)}"
                         for (f, a), v in sorted(self.table.items(), key=lambda kv: str(kv[0])))
        return f"State({body})"

    def get(self, f: str, args: tuple):
        try:
            return self.table[(f, args)]
        except KeyError:
            if f == "E":
                return Fraction(0)
            raise UninterpretedError(f"{f}({', '.join(map(str, args))}) is not interpreted") from None

    def updated(self, updates: dict) -> "State":
        if not updates:
            return self
        t = dict(self.table)
        t.update(updates)
        return State(self.pools, t, self.vars)

    def with_vars(self, **vs) -> "State":
        v = dict(self.vars)
        v.update(vs)
        return State(self.pools, self.table, v)

    def pool(self, sort: str) -> tuple[str, ...]:
        try:
            p = self.pools[sort]
        except KeyError:
            raise SemanticsError(f"no object pool for sort {sort}") from None
        if not p:
            raise SemanticsError(f"quantifier over empty pool of sort {sort}")
        return p

    def to_json(self) -> dict:
        return {
            "pools": {s: list(p) for s, p in sorted(self.pools.items())},
            "table": {(f"{f}({','.join(map(str, a))})" if a else f): _fmt_value(v)
                      for (f, a), v in sorted(self.table.items(), key=lambda kv: str(kv[0]))},
            "vars": {k: _fmt_value(v) for k, v in sorted(self.vars.items())},
        }


def make_state(pools: dict[str, Iterable[str]], values: dict, vars: dict | None = None) -> State:
    """Build a state from ``{"x": {("A0",): 3}, "omega": 1, ...}``."""
    table = {}
    for f, v in values.items():
        if isinstance(v, dict):
            for args, val in v.items():
                args = args if isinstance(args, tuple) else (args,)
                table[(f, args)] = _num(val)
        else:
            table[(f, ())] = _num(v)
    return State({s: tuple(p) for s, p in pools.items()}, table,
                 {k: _num(v) for k, v in (vars or {}).items()})


def _num(v):
    if isinstance(v, (int, str)) and not isinstance(v, bool):
        return Fraction(v) if isinstance(v, int) else v
    if isinstance(v, float):
        return v
    return v


@dataclass(frozen=True)
class SimConfig:
    h: float = 1e-3
    loop_bound: int = 3
    max_traces: int = 4096
    seed: int = 0
    durations: tuple[float, ...] = (0.0, 0.5, 1.0, 2.0)
    real_samples: tuple = (Fraction(0), Fraction(1), Fraction(-1), Fraction(1, 2), Fraction(3))
    finitary_liveness: bool = False

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("step size must be positive")
        if self.loop_bound < 0 or self.max_traces < 1:
            raise ValueError("bounds must be nonnegative")
        if any(d < 0 for d in self.durations):
            raise ValueError("durations must be nonnegative")


# --------------------------------------------------------------------------
# terms and state formulas


def eval_term(s: State, t: Term, env: dict | None = None):
    if s is ABORT:
        raise SemanticsError("cannot evaluate in the abort state")
    env = env or {}
    if isinstance(t, Num):
        return t.value
    if isinstance(t, Var):
        if t.name in env:
            return env[t.name]
        if t.name in s.vars:
            return s.vars[t.name]
        raise UninterpretedError(f"variable {t.name} has no value")
    if isinstance(t, App):
        return s.get(t.func, tuple(eval_term(s, a, env) for a in t.args))
    if isinstance(t, Neg):
        return -eval_term(s, t.arg, env)
    if isinstance(t, Add):
        return eval_term(s, t.left, env) + eval_term(s, t.right, env)
    if isinstance(t, Sub):
        return eval_term(s, t.left, env) - eval_term(s, t.right, env)
    if isinstance(t, Mul):
        return eval_term(s, t.left, env) * eval_term(s, t.right, env)
    if isinstance(t, Div):
        d = eval_term(s, t.right, env)
        if d == 0:
            raise SemanticsError("division by zero")
        return eval_term(s, t.left, env) / d
    if isinstance(t, Pow):
        return eval_term(s, t.base, env) ** t.exp
    if isinstance(t, Ite):
        return eval_term(s, t.then if eval_state_formula(s, t.cond, env=env) else t.other, env)
    if isinstance(t, Prime):
        raise SemanticsError("differential symbols have no value in a state")
    raise TypeError(t)


def eval_state_formula(s: State, f: Formula, cfg: SimConfig | None = None, *,
                       env: dict | None = None, semantics: str = "trace") -> bool:
    """Valuation of a state formula; ``semantics`` selects traces or reachability."""
    if s is ABORT:
        raise SemanticsError("state formulas are not evaluated at the abort state")
    cfg = cfg or SimConfig()
    env = env or {}
    return _eval(s, f, cfg, tuple(sorted(env.items(), key=lambda kv: kv[0])), semantics)


def _eval(s, f, cfg, env, sem) -> bool:
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    e = dict(env)
    if isinstance(f, Eq):
        return eval_term(s, f.left, e) == eval_term(s, f.right, e)
    if isinstance(f, Geq):
        return eval_term(s, f.left, e) >= eval_term(s, f.right, e)
    if isinstance(f, Gt):
        return eval_term(s, f.left, e) > eval_term(s, f.right, e)
    if isinstance(f, Not):
        return not _eval(s, f.arg, cfg, env, sem)
    if isinstance(f, And):
        return _eval(s, f.left, cfg, env, sem) and _eval(s, f.right, cfg, env, sem)
    if isinstance(f, Or):
        return _eval(s, f.left, cfg, env, sem) or _eval(s, f.right, cfg, env, sem)
    if isinstance(f, Implies):
        return (not _eval(s, f.left, cfg, env, sem)) or _eval(s, f.right, cfg, env, sem)
    if isinstance(f, (Forall, Exists)):
        dom = cfg.real_samples if f.var.sort == REAL else s.pool(f.var.sort)
        test = all if isinstance(f, Forall) else any
        return test(_eval(s, f.body, cfg, _bind(env, f.var.name, d), sem) for d in dom)
    if isinstance(f, (Box, Dia)):
        return _eval_modal(s, f, cfg, env, sem)
    raise SemanticsError(f"not a state formula: {type(f).__name__}")


def _bind(env: tuple, name: str, value) -> tuple:
    d = dict(env)
    d[name] = value
    return tuple(sorted(d.items(), key=lambda kv: kv[0]))


@functools.lru_cache(maxsize=200_000)
def _eval_modal(s, f, cfg, env, sem) -> bool:
    e = dict(env)
    s_env = s.with_vars(**e) if e else s
    if sem == "reach":
        if isinstance(f.post, (Always, Eventually)):
            raise SemanticsError("reachability semantics has no temporal operators")
        outs = (_eval(t, f.post, cfg, env, sem) for t in reachability_run(s_env, f.prog, cfg))
        return all(outs) if isinstance(f, Box) else any(outs)
    traces = run_program(s_env, f.prog, cfg)
    if isinstance(f, Box):
        finitary = cfg.finitary_liveness and isinstance(f.post, Eventually)
        for nu in traces:
            if finitary and not nu.terminated:
                continue
            if eval_trace_formula(nu, f.post, cfg, env=e) is False:
                return False
        return True
    return any(eval_trace_formula(nu, f.post, cfg, env=e) is True for nu in traces)


def eval_trace_formula(nu: "Trace", pi, cfg: SimConfig | None = None, *, env: dict | None = None):
    """True/False, or None when a state formula meets a nonterminating trace."""
    cfg = cfg or SimConfig()
    env_t = tuple(sorted((env or {}).items(), key=lambda kv: kv[0]))
    if isinstance(pi, Always):
        return all(_eval(st, pi.body, cfg, env_t, "trace") for st in nu.positions())
    if isinstance(pi, Eventually):
        return any(_eval(st, pi.body, cfg, env_t, "trace") for st in nu.positions())
    if not nu.terminated:
        return None
    return _eval(nu.last, pi, cfg, env_t, "trace")


# --------------------------------------------------------------------------
# traces


class Segment:
    duration: float | Fraction

    def states(self) -> Iterator:
        raise NotImplementedError

    @property
    def first(self):
        raise NotImplementedError

    @property
    def last(self):
        raise NotImplementedError


class PointFlow(Segment):
    __slots__ = ("state",)
    duration = Fraction(0)

    def __init__(self, state):
        self.state = state

    def states(self):
        yield self.state

    def times(self):
        return [0.0]

    @property
    def first(self):
        return self.state

    @property
    def last(self):
        return self.state

    def key(self):
        return ("p", self.state.key())

    def __repr__(self):
        return f"PointFlow({self.state!r})"


class Flow(Segment):
    """Sampled continuous flow; grid times start at 0 and end at ``duration``."""

    __slots__ = ("base", "keys", "grid", "ys", "duration", "_last")

    def __init__(self, base: State, keys: tuple, grid: list[float], ys: list[tuple], duration: float):
        self.base, self.keys, self.grid, self.ys, self.duration = base, keys, grid, ys, duration
        self._last = None

    def state_at(self, k: int) -> State:
        if k == 0:
            return self.base
        return self.base.updated(dict(zip(self.keys, self.ys[k])))

    def states(self):
        for k in range(len(self.grid)):
            yield self.state_at(k)

    def times(self):
        return list(self.grid)

    @property
    def first(self):
        return self.base

    @property
    def last(self):
        if self._last is None:
            self._last = self.state_at(len(self.grid) - 1)
        return self._last

    def key(self):
        return ("f", self.base.key(), self.duration, self.last.key())

    def __repr__(self):
        return f"Flow(r={self.duration}, {len(self.grid)} samples)"


class Trace:
    __slots__ = ("segments", "_key")

    def __init__(self, segments: tuple[Segment, ...]):
        if not segments:
            raise ValueError("traces are nonempty")
        self.segments = tuple(segments)
        self._key = None

    @property
    def terminated(self) -> bool:
        return self.segments[-1].last is not ABORT

    @property
    def first(self) -> State:
        return self.segments[0].first

    @property
    def last(self) -> State:
        if not self.terminated:
            raise SemanticsError("last state of a nonterminating trace")
        return self.segments[-1].last

    def positions(self) -> Iterator[State]:
        """States at all positions in lexicographic order, skipping the abort state."""
        for seg in self.segments:
            for st in seg.states():
                if st is not ABORT:
                    yield st

    def key(self):
        if self._key is None:
            self._key = tuple(s.key() for s in self.segments)
        return self._key

    def __eq__(self, other):
        return isinstance(other, Trace) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"Trace({', '.join(map(repr, self.segments))})"

    def to_json(self) -> list:
        out = []
        for seg in self.segments:
            if isinstance(seg, PointFlow):
                out.append({"kind": "abort" if seg.state is ABORT else "point",
                            "state": None if seg.state is ABORT else seg.state.to_json()})
            else:
                out.append({"kind": "flow", "duration": seg.duration,
                            "start": seg.first.to_json(), "end": seg.last.to_json()})
        return out


def compose(nu: Trace, rho: Trace) -> Trace:
    """Trace composition: concatenation after a terminating prefix, else the prefix."""
    if not nu.terminated:
        return nu
    if nu.last != rho.first:
        raise SemanticsError("composition of traces that do not meet")
    return Trace(nu.segments + rho.segments)


# --------------------------------------------------------------------------
# discrete steps


def assignment_successors(s: State, p: Assign) -> list[State]:
    """All successor states; clashing writes produce one state per choice."""
    writes: dict = {}
    objs = s.pool(p.var.sort) if p.var is not None else (None,)
    for o in objs:
        env = {p.var.name: o} if p.var is not None else {}
        for lhs, rhs in p.updates:
            key = (lhs.func, tuple(eval_term(s, a, env) for a in lhs.args))
            val = eval_term(s, rhs, env)
            vals = writes.setdefault(key, [])
            if val not in vals:
                vals.append(val)
    keys = list(writes)
    out = []
    for choice in itertools.product(*(writes[k] for k in keys)):
        out.append(s.updated(dict(zip(keys, choice))))
    return out


# --------------------------------------------------------------------------
# continuous flows


def _pyconst(v) -> str:
    if isinstance(v, str):
        return repr(v)
    return repr(float(v))


class _Compiler:
    def __init__(self, s: State, index: dict):
        self.s = s
        self.index = index

    def term(self, t: Term, env: dict) -> str:
        if isinstance(t, Num):
            return _pyconst(t.value)
        if isinstance(t, Var):
            return _pyconst(eval_term(self.s, t, env))
        if isinstance(t, App):
            key = (t.func, tuple(eval_term(self.s, a, env) for a in t.args))
            if key in self.index:
                return f"y[{self.index[key]}]"
            return _pyconst(self.s.get(*key))
        if isinstance(t, Neg):
            return f"(-{self.term(t.arg, env)})"
        op = {Add: "+", Sub: "-", Mul: "*", Div: "/"}.get(type(t))
        if op:
            return f"({self.term(t.left, env)} {op} {self.term(t.right, env)})"
        if isinstance(t, Pow):
            return f"({self.term(t.base, env)} ** {t.exp})"
        if isinstance(t, Ite):
            return f"({self.term(t.then, env)} if {self.formula(t.cond, env)} else {self.term(t.other, env)})"
        raise SemanticsError(f"cannot integrate {type(t).__name__}")

    def is_object(self, t: Term, env) -> bool:
        try:
            return isinstance(eval_term(self.s, t, env), str)
        except UninterpretedError:
            return False

    def formula(self, f: Formula, env: dict) -> str:
        if isinstance(f, TrueF):
            return "True"
        if isinstance(f, FalseF):
            return "False"
        if isinstance(f, Eq):
            if self.is_object(f.left, env):
                return repr(eval_term(self.s, f.left, env) == eval_term(self.s, f.right, env))
            return f"({self.term(f.left, env)} == {self.term(f.right, env)})"
        if isinstance(f, Geq):
            return f"({self.term(f.left, env)} >= {self.term(f.right, env)})"
        if isinstance(f, Gt):
            return f"({self.term(f.left, env)} > {self.term(f.right, env)})"
        if isinstance(f, Not):
            return f"(not {self.formula(f.arg, env)})"
        if isinstance(f, And):
            return f"({self.formula(f.left, env)} and {self.formula(f.right, env)})"
        if isinstance(f, Or):
            return f"({self.formula(f.left, env)} or {self.formula(f.right, env)})"
        if isinstance(f, Implies):
            return f"((not {self.formula(f.left, env)}) or {self.formula(f.right, env)})"
        if isinstance(f, (Forall, Exists)) and f.var.sort != REAL:
            parts = [self.formula(f.body, {**env, f.var.name: o}) for o in self.s.pool(f.var.sort)]
            return "(" + (" and " if isinstance(f, Forall) else " or ").join(parts) + ")"
        raise SemanticsError(f"evolution domains must be first-order over objects, got {type(f).__name__}")


@dataclass(frozen=True)
class CompiledODE:
    keys: tuple
    y0: tuple
    rhs: Callable
    domain: Callable


def compile_ode(s: State, ode: ODE) -> CompiledODE:
    """Resolve positions statically; clashing positions keep the first object's equation."""
    objs = s.pool(ode.var.sort) if ode.var is not None else (None,)
    index: dict = {}
    eqs: list = []
    for o in objs:
        env = {ode.var.name: o} if ode.var is not None else {}
        for lhs, rhs in ode.eqs:
            key = (lhs.func, tuple(eval_term(s, a, env) for a in lhs.args))
            if key not in index:
                index[key] = len(eqs)
                eqs.append((rhs, env))
    comp = _Compiler(s, index)
    src = "lambda y: (" + "".join(comp.term(r, e) + ", " for r, e in eqs) + ")"
    rhs = eval(src, {"__builtins__": {}})  # noqa: S307 - generated from the AST above
    if isinstance(ode.domain, TrueF):
        domain = _always_true
    else:
        domain = eval("lambda y: " + comp.formula(ode_domain(ode), {}), {"__builtins__": {}})  # noqa: S307
    keys = tuple(index)
    y0 = tuple(float(s.get(*k)) for k in keys)
    return CompiledODE(keys, y0, rhs, domain)


def ode_domain(ode: ODE) -> Formula:
    """The evolution domain as a closed formula: a domain mentioning the
    bound object variable must hold for every object."""
    from qdtl.syntax import free_vars
    if ode.var is not None and ode.var in free_vars(ode.domain):
        return Forall(ode.var, ode.domain)
    return ode.domain


def _always_true(y):
    return True


def rk4_step(f, y: tuple, h: float) -> tuple:
    k1 = f(y)
    k2 = f(tuple(a + 0.5 * h * b for a, b in zip(y, k1)))
    k3 = f(tuple(a + 0.5 * h * b for a, b in zip(y, k2)))
    k4 = f(tuple(a + h * b for a, b in zip(y, k3)))
    return tuple(a + h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4))


def integrate(c: CompiledODE, duration: float, h: float) -> tuple[list[float], list[tuple]]:
    """RK4 grid from 0 to ``duration`` (last step shortened to land exactly)."""
    n = int(math.floor(duration / h + 1e-9))
    grid = [0.0]
    ys = [c.y0]
    y = c.y0
    for k in range(1, n + 1):
        y = rk4_step(c.rhs, y, h)
        grid.append(k * h)
        ys.append(y)
    rest = duration - n * h
    if rest > 1e-12 * max(1.0, duration):
        ys.append(rk4_step(c.rhs, y, rest))
        grid.append(duration)
    return grid, ys


@functools.lru_cache(maxsize=4096)
def ode_flows(s: State, ode: ODE, cfg: SimConfig) -> tuple[Flow | PointFlow, ...]:
    """Flows of each configured duration that respect the evolution domain.

    The domain is checked at every grid point; when it fails the exit time is
    bisected to ``h * 1e-3`` and the maximal admissible flow is added.
    """
    c = compile_ode(s, ode)
    if not c.domain(c.y0):
        return ()
    horizon = max(cfg.durations, default=0.0)
    h = cfg.h
    n = int(math.floor(horizon / h + 1e-9))
    grid, ys = [0.0], [c.y0]
    y = c.y0
    exit_time = None
    for k in range(1, n + 1):
        y1 = rk4_step(c.rhs, y, h)
        if not c.domain(y1):
            lo, hi = 0.0, h
            while hi - lo > h * 1e-3:
                mid = (lo + hi) / 2
                if c.domain(rk4_step(c.rhs, y, mid)):
                    lo = mid
                else:
                    hi = mid
            exit_time = (k - 1) * h + lo
            break
        y = y1
        grid.append(k * h)
        ys.append(y)
    limit = exit_time if exit_time is not None else horizon
    out: list = []
    durations = sorted(set(float(d) for d in cfg.durations if d <= limit + 1e-12))
    if exit_time is not None and exit_time not in durations:
        durations.append(exit_time)
    for r in durations:
        if r == 0:
            out.append(PointFlow(s))
            continue
        m = min(int(math.floor(r / h + 1e-9)), len(grid) - 1)
        g, yy = grid[: m + 1], ys[: m + 1]
        rest = r - g[-1]
        if rest > 1e-12 * max(1.0, r):
            yl = rk4_step(c.rhs, yy[-1], rest)
            if not c.domain(yl):
                continue
            g, yy = g + [r], yy + [yl]
        out.append(Flow(s, c.keys, g, yy, r))
    return tuple(out)


# --------------------------------------------------------------------------
# programs


def _dedupe(traces: Iterable) -> list:
    seen = {}
    for t in traces:
        seen.setdefault(t.key(), t)
    return list(seen.values())


def _capped(traces: list, cfg: SimConfig) -> tuple:
    # dropping traces silently would make [a] vacuously easier to satisfy
    if len(traces) > cfg.max_traces:
        raise BudgetExceeded(f"more than {cfg.max_traces} traces; "
                             "lower the loop bound or the number of durations")
    return tuple(traces)


def run_program(s: State, p: Program, cfg: SimConfig | None = None) -> tuple[Trace, ...]:
    """Sampled trace semantics from ``s``; deterministic for a fixed config."""
    return _run(s, p, cfg or SimConfig())


@functools.lru_cache(maxsize=50_000)
def _run(s: State, p: Program, cfg: SimConfig) -> tuple[Trace, ...]:
    if isinstance(p, Assign):
        return tuple(Trace((PointFlow(s), PointFlow(t))) for t in assignment_successors(s, p))
    if isinstance(p, ODE):
        return tuple(Trace((seg,)) for seg in ode_flows(s, p, cfg))
    if isinstance(p, Test):
        if eval_state_formula(s, p.cond, cfg):
            return (Trace((PointFlow(s),)),)
        return (Trace((PointFlow(s), PointFlow(ABORT))),)
    if isinstance(p, Choice):
        return _capped(_dedupe(_run(s, p.left, cfg) + _run(s, p.right, cfg)), cfg)
    if isinstance(p, Seq):
        out = []
        for nu in _run(s, p.left, cfg):
            if not nu.terminated:
                out.append(nu)
                continue
            out.extend(compose(nu, rho) for rho in _run(nu.last, p.right, cfg))
        return _capped(_dedupe(out), cfg)
    if isinstance(p, Loop):
        out = [Trace((PointFlow(s),))]
        frontier = list(out)
        for _ in range(cfg.loop_bound):
            nxt = []
            for nu in frontier:
                if not nu.terminated:
                    continue
                nxt.extend(compose(nu, rho) for rho in _run(nu.last, p.body, cfg))
            frontier = _dedupe(nxt)
            out.extend(frontier)
        return _capped(_dedupe(out), cfg)
    if isinstance(p, New):
        return _run(s, desugar_new(p), cfg)
    raise TypeError(p)


def reachability_run(s: State, p: Program, cfg: SimConfig | None = None) -> frozenset[State]:
    """Reachability relation image of ``s``, computed without building traces."""
    return _reach(s, p, cfg or SimConfig())


@functools.lru_cache(maxsize=50_000)
def _reach(s: State, p: Program, cfg: SimConfig) -> frozenset:
    if isinstance(p, Assign):
        return frozenset(assignment_successors(s, p))
    if isinstance(p, ODE):
        return frozenset(seg.last for seg in ode_flows(s, p, cfg))
    if isinstance(p, Test):
        return frozenset({s}) if eval_state_formula(s, p.cond, cfg, semantics="reach") else frozenset()
    if isinstance(p, Choice):
        return _reach(s, p.left, cfg) | _reach(s, p.right, cfg)
    if isinstance(p, Seq):
        out = set()
        for t in _reach(s, p.left, cfg):
            out |= _reach(t, p.right, cfg)
        return frozenset(out)
    if isinstance(p, Loop):
        out = {s}
        frontier = {s}
        for _ in range(cfg.loop_bound):
            nxt = set()
            for t in frontier:
                nxt |= _reach(t, p.body, cfg)
            # states reached in exactly n iterations, as in the trace route
            frontier = nxt
            out |= nxt
        return frozenset(out)
    if isinstance(p, New):
        return _reach(s, desugar_new(p), cfg)
    raise TypeError(p)


def clear_caches():
    for fn in (_run, _reach, ode_flows, _eval_modal):
        fn.cache_clear()


# --------------------------------------------------------------------------
# sampling and falsification


@dataclass
class StateSampler:
    """Random states over a signature.

    ``ranges`` maps a symbol to ``(lo, hi)``, a constant, or a callable
    ``(rng, args) -> value``; reals are drawn on a grid of ``1/denominator``.
    ``reserve`` extra objects per sort start with ``E = 0``.
    """

    sig: Signature
    active: dict[str, int]
    ranges: dict = field(default_factory=dict)
    reserve: int = 1
    denominator: int = 4
    default_range: tuple = (-5, 5)
    constraint: Callable[[State], bool] | None = None
    vars: dict = field(default_factory=dict)

    def pools(self) -> dict[str, tuple[str, ...]]:
        return {s: tuple(f"{s}{k}" for k in range(n + self.reserve)) for s, n in self.active.items()}

    def __call__(self, rng: random.Random, attempts: int = 1000) -> State:
        for _ in range(attempts):
            s = self._draw(rng)
            if self.constraint is None or self.constraint(s):
                return s
        raise SemanticsError("state sampler constraint is unsatisfiable in practice")

    def _draw(self, rng: random.Random) -> State:
        pools = self.pools()
        table = {}
        for name, decl in sorted(self.sig.functions.items()):
            if name == "E":
                continue
            if any(a not in pools for a in decl.arg_sorts):
                raise SemanticsError(f"{name} takes a sort without a pool")
            for args in itertools.product(*(pools[a] for a in decl.arg_sorts)):
                table[(name, args)] = self._value(rng, name, decl.result, args, pools)
        for sort, names in pools.items():
            for k, o in enumerate(names):
                table[("E", (o,))] = Fraction(1 if k < self.active[sort] else 0)
        return State(pools, table, dict(self.vars))

    def _value(self, rng, name, result, args, pools):
        spec = self.ranges.get(name)
        if callable(spec):
            return _num(spec(rng, args))
        if result != REAL and not self.sig.sorts[result].is_real:
            return rng.choice(pools[result])
        if spec is not None and not isinstance(spec, tuple):
            return _num(spec)
        lo, hi = spec if spec is not None else self.default_range
        d = self.denominator
        return Fraction(rng.randint(int(lo * d), int(hi * d)), d)


@dataclass
class Counterexample:
    seed: int
    sample: int
    state: State
    path: list[str]
    trace: Trace | None = None
    position: int | None = None
    config: SimConfig | None = None

    def to_json(self) -> dict:
        cfg = self.config
        return {
            "seed": self.seed,
            "sample": self.sample,
            "config": None if cfg is None else {
                "h": cfg.h, "loop_bound": cfg.loop_bound, "durations": list(cfg.durations),
            },
            "state": self.state.to_json(),
            "violated": self.path,
            "trace": None if self.trace is None else self.trace.to_json(),
            "position": self.position,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2, default=_json_default)


def _json_default(v):
    if isinstance(v, Fraction):
        return _fmt_value(v)
    raise TypeError(v)


def falsify(sampler: Callable[[random.Random], State], f: Formula, cfg: SimConfig | None = None,
            samples: int = 200) -> Counterexample | None:
    """Search for a state refuting ``f``; seed-reproducible."""
    cfg = cfg or SimConfig()
    for k in range(samples):
        rng = random.Random(f"{cfg.seed}:{k}")
        s = sampler(rng)
        if not eval_state_formula(s, f, cfg):
            cx = Counterexample(cfg.seed, k, s, [], config=cfg)
            _explain(s, f, cfg, {}, cx)
            return cx
    return None


def _explain(s: State, f: Formula, cfg: SimConfig, env: dict, cx: Counterexample):
    """Descend into the falsified formula, recording the path and witness trace."""
    from qdtl.parser import pretty
    cx.path.append(pretty(f) if not env else f"{pretty(f)}  with {_env_str(env)}")
    if isinstance(f, Implies):
        _explain(s, f.right, cfg, env, cx)
    elif isinstance(f, And):
        part = f.left if not eval_state_formula(s, f.left, cfg, env=env) else f.right
        _explain(s, part, cfg, env, cx)
    elif isinstance(f, Forall):
        dom = cfg.real_samples if f.var.sort == REAL else s.pool(f.var.sort)
        for d in dom:
            e = {**env, f.var.name: d}
            if not eval_state_formula(s, f.body, cfg, env=e):
                _explain(s, f.body, cfg, e, cx)
                return
    elif isinstance(f, Box) and cx.trace is None:
        s_env = s.with_vars(**env) if env else s
        for nu in run_program(s_env, f.prog, cfg):
            if eval_trace_formula(nu, f.post, cfg, env=env) is False:
                cx.trace = nu
                if isinstance(f.post, Always):
                    for k, st in enumerate(nu.positions()):
                        if not eval_state_formula(st, f.post.body, cfg, env=env):
                            cx.position = k
                            break
                return


def _env_str(env: dict) -> str:
    return ", ".join(f"{k}={_fmt_value(v)}" for k, v in sorted(env.items()))
