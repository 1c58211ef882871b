"""Sequent calculus, proof-script checker and a small automatic tactic.

A proof is a tree of :class:`ProofNode` objects.  Rules are looked up by
name in :data:`RULES`; each rule either rewrites one formula (possibly deep
inside it) or acts on the whole sequent.  Arithmetic leaves are closed by
the ``R`` rule, which calls :func:`qdtl.poly.decide_universal`.
"""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial
from typing import Callable

from qdtl.parser import (
    Block, Command, Position, ProofScript, SourceSpan, pretty, pretty_program,
)
from qdtl.parser import parse_formula as _parse_formula
from qdtl.parser import parse_term as _parse_term
from qdtl.poly import SolverConfig, Verdict, decide_universal, normalize
from qdtl.syntax import (
    REAL, Add, Always, And, App, Assign, Box, Choice, Dia, Div, Eq, Eventually, Exists,
    FalseF, Forall, FreshNames, Geq, Gt, Implies, Ite, Loop, Mul, Neg, New, Not, Num, ODE,
    Or, Pow, Prime, QdtlError, Seq, Sequent, Signature, Sub, SubstitutionError, Test, TrueF,
    Var, children, conj, conjuncts, desugar_new, disj, free_vars,
    is_first_order, is_injective, lhs_symbol, rebuild, rename_symbol, replace_at,
    sort_of, subnode, substitute, substitute_var, symbols, var_names, walk, writes,
)


class RuleError(QdtlError):
    """A rule does not apply to the selected formula."""


class SideConditionError(RuleError):
    """The formula matches the schema but a side condition fails."""


# --------------------------------------------------------------------------
# small term constructors that keep derived terms readable

ZERO = Num(0)
ONE = Num(1)


def _is_zero(t) -> bool:
    return isinstance(t, Num) and t.value == 0


def _add(a, b):
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    return Add(a, b)


def _sub(a, b):
    if _is_zero(b):
        return a
    if _is_zero(a):
        return Neg(b)
    return Sub(a, b)


def _mul(a, b):
    if _is_zero(a) or _is_zero(b):
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    return Mul(a, b)


def _neg(a):
    return ZERO if _is_zero(a) else Neg(a)


# --------------------------------------------------------------------------
# the differential operator D


def _is_object_term(t, sig: Signature) -> bool:
    try:
        return sort_of(t, sig) != REAL
    except QdtlError:
        return False


def derive_term(t, driven: set[str]):
    """Syntactic derivative of a term along an ODE changing ``driven``."""
    if isinstance(t, (Num, Var)):
        return ZERO
    if isinstance(t, App):
        if t.func in driven:
            return Prime(t)
        if any(symbols(a) & driven for a in t.args):
            raise RuleError(f"cannot differentiate {pretty(t)}: argument changes along the flow")
        return ZERO
    if isinstance(t, Neg):
        return _neg(derive_term(t.arg, driven))
    if isinstance(t, Add):
        return _add(derive_term(t.left, driven), derive_term(t.right, driven))
    if isinstance(t, Sub):
        return _sub(derive_term(t.left, driven), derive_term(t.right, driven))
    if isinstance(t, Mul):
        da, db = derive_term(t.left, driven), derive_term(t.right, driven)
        return _add(_mul(da, t.right), _mul(t.left, db))
    if isinstance(t, Div):
        if symbols(t.right) & driven:
            raise RuleError("division by a changing term")
        return Div(derive_term(t.left, driven), t.right) if not _is_zero(
            derive_term(t.left, driven)) else ZERO
    if isinstance(t, Pow):
        du = derive_term(t.base, driven)
        if t.exp == 0 or _is_zero(du):
            return ZERO
        inner = t.base if t.exp == 2 else Pow(t.base, t.exp - 1)
        return _mul(_mul(Num(t.exp), inner), du)
    if isinstance(t, Prime):
        raise RuleError("differential symbols cannot be differentiated again")
    raise RuleError(f"cannot differentiate {pretty(t)}")


def total_derivation(f, driven: set[str], sig: Signature):
    """``D(phi)``: conjunctions and disjunctions both become conjunctions."""
    if isinstance(f, (TrueF, FalseF)):
        return TrueF()
    if isinstance(f, Eq):
        if _is_object_term(f.left, sig):
            return Eq(ZERO, ZERO)
        return Eq(derive_term(f.left, driven), derive_term(f.right, driven))
    if isinstance(f, (Geq, Gt)):
        return Geq(derive_term(f.left, driven), derive_term(f.right, driven))
    if isinstance(f, (And, Or)):
        return And(total_derivation(f.left, driven, sig), total_derivation(f.right, driven, sig))
    if isinstance(f, Forall):
        return Forall(f.var, total_derivation(f.body, driven, sig))
    raise RuleError(f"D is undefined for {type(f).__name__} formulas: {pretty(f)}")


# --------------------------------------------------------------------------
# assignment rewriting


def _written_map(prog: Assign):
    table = {}
    for lhs, rhs in prog.updates:
        sym = lhs_symbol(lhs)
        if sym in table:
            raise RuleError(f"several updates of {sym} in one assignment")
        app = lhs.app if isinstance(lhs, Prime) else lhs
        if prog.var is not None and not is_injective(prog, lhs):
            if not app.args:
                raise RuleError(f"quantified choice of {sym}: use [:*]")
            raise RuleError(f"update of {sym} is not injective in {prog.var.name}")
        table[sym] = (app.args, rhs)
    return table


class _AssignRewriter:
    """Replace ``f(u)`` by the value ``f`` has after a simultaneous assignment."""

    def __init__(self, prog: Assign):
        self.prog = prog
        self.table = _written_map(prog)
        self.written = set(self.table)
        self.reads = set()
        self.fv = set()
        for args, rhs in self.table.values():
            self.reads |= symbols(rhs) | set().union(*(symbols(a) for a in args))
            self.fv |= free_vars(rhs) | set().union(*(free_vars(a) for a in args))
        self.fv.discard(prog.var)

    def value(self, sym: str, new_args: tuple, old):
        args, rhs = self.table[sym]
        v = self.prog.var
        if v is not None and args == (v,):
            return substitute_var(rhs, v, new_args[0])
        if args == new_args:
            return rhs
        cond = conj(Eq(a, b) for a, b in zip(args, new_args))
        return Ite(cond, rhs, old)

    def __call__(self, node):
        if isinstance(node, (Var, Num, TrueF, FalseF)):
            return node
        if isinstance(node, App):
            new_args = tuple(self(a) for a in node.args)
            rebuilt = App(node.func, new_args)
            if node.func in self.written:
                return self.value(node.func, new_args, rebuilt)
            return rebuilt
        if isinstance(node, Prime):
            sym = node.app.func + "'"
            new_args = tuple(self(a) for a in node.app.args)
            rebuilt = Prime(App(node.app.func, new_args))
            if sym in self.written:
                return self.value(sym, new_args, rebuilt)
            return rebuilt
        if isinstance(node, (Forall, Exists)):
            if node.var in self.fv:
                node = _rename_bound(node, self.fv)
            return type(node)(node.var, self(node.body))
        if isinstance(node, (Box, Dia)):
            inside = symbols(node)
            if writes(node.prog) & (self.written | self.reads) and inside & self.written:
                raise SubstitutionError(
                    f"assignment not admissible under [{pretty_program(node.prog)}]")
            return type(node)(self.program(node.prog), self(node.post))
        return rebuild(node, [self(c) for c in children(node)])

    def program(self, p):
        if isinstance(p, (Assign, ODE)):
            if p.var is not None and p.var in self.fv:
                p = _rename_bound(p, self.fv)
            pairs = p.updates if isinstance(p, Assign) else p.eqs
            new = []
            for lhs, rhs in pairs:
                app = lhs.app if isinstance(lhs, Prime) else lhs
                app = App(app.func, tuple(self(a) for a in app.args))
                new.append((Prime(app) if isinstance(lhs, Prime) else app, self(rhs)))
            if isinstance(p, Assign):
                return Assign(p.var, tuple(new))
            return ODE(p.var, tuple(new), self(p.domain))
        if isinstance(p, Test):
            return Test(self(p.cond))
        if isinstance(p, New):
            return p
        return rebuild(p, [self.program(c) for c in children(p)])


def _rename_bound(node, avoid_vars: set):
    avoid = var_names(node) | {v.name for v in avoid_vars}
    names = FreshNames(avoid)
    nb = Var(names.fresh(node.var.name), node.var.sort)
    if isinstance(node, (Forall, Exists)):
        return type(node)(nb, substitute_var(node.body, node.var, nb))
    pairs = node.updates if isinstance(node, Assign) else node.eqs
    pairs = tuple((substitute_var(l, node.var, nb), substitute_var(r, node.var, nb)) for l, r in pairs)
    if isinstance(node, Assign):
        return Assign(nb, pairs)
    return ODE(nb, pairs, substitute_var(node.domain, node.var, nb))


def apply_assignment(prog: Assign, post):
    """``[A]post`` as a formula without the modality (state formula post)."""
    if isinstance(post, (Always, Eventually)):
        raise RuleError("postcondition is a trace formula: use [:=]box or <:=>dia")
    return _AssignRewriter(prog)(post)


# --------------------------------------------------------------------------
# symbolic solutions of nilpotent systems


def _prime_assignment(ode: ODE) -> Assign:
    return Assign(ode.var, tuple((Prime(l), r) for l, r in ode.eqs))


def lie_derivative(t, ode: ODE):
    driven = writes(ode)
    return apply_assignment(_prime_assignment(ode), Eq(derive_term(t, driven), ZERO)).left


def symbolic_solution(ode: ODE, t, max_order: int = 8) -> Assign:
    """Solution ``S(t)`` as a simultaneous assignment, by a terminating Lie series."""
    for lhs, _ in ode.eqs:
        if not is_injective(ode, lhs):
            raise RuleError(f"equation for {lhs.func} is not injective")
    updates = []
    for lhs, _ in ode.eqs:
        total = normalize(lhs)
        term = lhs
        for k in range(1, max_order + 1):
            term = lie_derivative(term, ode)
            p = normalize(term)
            if p.is_zero():
                break
            total = total + p * normalize(t) ** k * normalize(Num(Fraction(1, factorial(k))))
        else:
            raise RuleError(f"no polynomial solution for {pretty(lhs)}: use DI/DC instead")
        updates.append((lhs, total.to_term()))
    return Assign(ode.var, tuple(updates))


def ode_domain(ode: ODE):
    d = ode.domain
    if ode.var is not None and ode.var in free_vars(d):
        return Forall(ode.var, d)
    return d


# --------------------------------------------------------------------------
# trace monitors and totality


def transform_monitor(prog, phi, t: Var):
    """The monitored program: abort as soon as ``phi`` holds unless ``t = 1``."""
    _side(t.name not in var_names(prog) | var_names(phi) | symbols(prog) | symbols(phi),
          f"monitor variable {t.name} must be fresh")
    return _monitor(prog, Implies(phi, Eq(t, ONE)))


def _monitor(prog, guard):
    if isinstance(prog, New):
        prog = desugar_new(prog)
    if isinstance(prog, Assign):
        return Seq(prog, Test(guard))
    if isinstance(prog, ODE):
        dom = guard if isinstance(prog.domain, TrueF) else And(prog.domain, guard)
        return ODE(prog.var, prog.eqs, dom)
    if isinstance(prog, Test):
        return prog
    if isinstance(prog, (Choice, Seq)):
        return type(prog)(_monitor(prog.left, guard), _monitor(prog.right, guard))
    if isinstance(prog, Loop):
        return Loop(_monitor(prog.body, guard))
    raise RuleError(f"cannot monitor {prog!r}")


def is_total(prog) -> bool:
    """Every state has at least one trace (aborting traces count)."""
    if isinstance(prog, (Assign, Test, Loop, New)):
        return True
    if isinstance(prog, ODE):
        return isinstance(prog.domain, TrueF)
    if isinstance(prog, Choice):
        return is_total(prog.left) or is_total(prog.right)
    if isinstance(prog, Seq):
        return is_total(prog.left) and is_total(prog.right)
    raise TypeError(prog)


# --------------------------------------------------------------------------
# rule catalog


@dataclass
class RuleSpec:
    name: str
    kind: str  # "equiv" | "sound" (local rewrites) | "sequent"
    fn: Callable
    doc: str = ""
    finitary: bool = False


RULES: dict[str, RuleSpec] = {}


def _register(name, kind, finitary=False):
    def deco(fn):
        RULES[name] = RuleSpec(name, kind, fn, (fn.__doc__ or "").strip(), finitary)
        return fn
    return deco


def equiv(name):
    return _register(name, "equiv")


def sound(name, finitary=False):
    return _register(name, "sound", finitary)


def sequent_rule(name):
    return _register(name, "sequent")


@dataclass
class OracleTask:
    formula: object
    sig: Signature
    seed: int
    solver: SolverConfig | None
    fallback: object = None


@dataclass
class Outcome:
    premises: list
    closed: str | None = None
    pending: OracleTask | None = None
    note: str = ""


@dataclass
class Context:
    sig: Signature
    defs: dict = field(default_factory=dict)
    names: FreshNames = field(default_factory=FreshNames)
    seed: int = 0
    solver: SolverConfig | None = None

    def parse_formula(self, text: str):
        return _parse_formula(text, self.sig, self.defs)

    def parse_term(self, text: str):
        return _parse_term(text, self.sig, self.defs)

    def fresh_var(self, base: str, sort: str = REAL) -> Var:
        return Var(self.names.fresh(base), sort)

    def skolem(self, var: Var, deps) -> App:
        deps = sorted(deps, key=lambda v: v.name)
        name = self.names.fresh(var.name)
        self.sig.add_function(name, [v.sort for v in deps], var.sort, rigid=True)
        return App(name, tuple(deps))


def _need(cond, msg):
    if not cond:
        raise RuleError(msg)


def _side(cond, msg):
    if not cond:
        raise SideConditionError("side condition: " + msg)


def _state_post(f):
    _need(not isinstance(f.post, (Always, Eventually)),
          "postcondition is a trace formula: use the temporal variant of this rule")


# ----- program rules (local)


@equiv("[;]")
def _box_seq(ctx, f, args):
    """[a;b]p  <->  [a][b]p"""
    _need(isinstance(f, Box) and isinstance(f.prog, Seq), "expects [a;b]p")
    _state_post(f)
    return Box(f.prog.left, Box(f.prog.right, f.post))


@equiv("<;>")
def _dia_seq(ctx, f, args):
    """<a;b>p  <->  <a><b>p"""
    _need(isinstance(f, Dia) and isinstance(f.prog, Seq), "expects <a;b>p")
    _state_post(f)
    return Dia(f.prog.left, Dia(f.prog.right, f.post))


@equiv("[++]")
def _box_choice(ctx, f, args):
    """[a++b]p  <->  [a]p && [b]p"""
    _need(isinstance(f, Box) and isinstance(f.prog, Choice), "expects [a++b]p")
    return And(Box(f.prog.left, f.post), Box(f.prog.right, f.post))


@equiv("<++>")
def _dia_choice(ctx, f, args):
    """<a++b>p  <->  <a>p || <b>p"""
    _need(isinstance(f, Dia) and isinstance(f.prog, Choice), "expects <a++b>p")
    return Or(Dia(f.prog.left, f.post), Dia(f.prog.right, f.post))


@equiv("[?]")
def _box_test(ctx, f, args):
    """[?c]p  <->  (c -> p)"""
    _need(isinstance(f, Box) and isinstance(f.prog, Test), "expects [?c]p")
    _state_post(f)
    return Implies(f.prog.cond, f.post)


@equiv("<?>")
def _dia_test(ctx, f, args):
    """<?c>p  <->  c && p"""
    _need(isinstance(f, Dia) and isinstance(f.prog, Test), "expects <?c>p")
    _state_post(f)
    return And(f.prog.cond, f.post)


@equiv("[:=]")
def _box_assign(ctx, f, args):
    """[A]p  <->  p with every f(u) replaced by its assigned value"""
    _need(isinstance(f, Box) and isinstance(f.prog, Assign), "expects [A]p for an assignment A")
    return apply_assignment(f.prog, f.post)


@equiv("<:=>")
def _dia_assign(ctx, f, args):
    """<A>p  <->  [A]p for injective assignments"""
    _need(isinstance(f, Dia) and isinstance(f.prog, Assign), "expects <A>p for an assignment A")
    return apply_assignment(f.prog, f.post)


@equiv("skip")
def _skip(ctx, f, args):
    """[A]p  <->  p when p mentions no symbol changed by A"""
    _need(isinstance(f, (Box, Dia)) and isinstance(f.prog, Assign), "expects [A]p")
    _side(not symbols(f.post) & writes(f.prog), "postcondition mentions a changed symbol")
    post = f.post
    return post.body if isinstance(post, (Always, Eventually)) else post


def _choice_assign(ctx, f, quant):
    prog = f.prog
    _need(isinstance(prog, Assign) and prog.var is not None and len(prog.updates) == 1,
          "expects a quantified assignment of one constant")
    (lhs, rhs), = prog.updates
    _need(isinstance(lhs, App) and not lhs.args, "left-hand side must be a constant symbol")
    _state_post(f)
    j = ctx.fresh_var(prog.var.name, prog.var.sort)
    return quant(j, substitute(f.post, lhs, substitute_var(rhs, prog.var, j)))


@equiv("[:*]")
def _box_choice_assign(ctx, f, args):
    """[forall j n := t(j)]p(n)  <->  forall j p(t(j))"""
    _need(isinstance(f, Box), "expects a box modality")
    return _choice_assign(ctx, f, Forall)


@equiv("<:*>")
def _dia_choice_assign(ctx, f, args):
    """<forall j n := t(j)>p(n)  <->  exists j p(t(j))"""
    _need(isinstance(f, Dia), "expects a diamond modality")
    return _choice_assign(ctx, f, Exists)


def _solution_body(ctx, f, outer, inner):
    ode = f.prog
    t = ctx.fresh_var("t")
    s = ctx.fresh_var("s")
    dom = ode_domain(ode)
    pre = Forall(s, Implies(And(Geq(s, ZERO), Geq(t, s)),
                            Box(symbolic_solution(ode, s), dom)))
    return outer(t, inner(Geq(t, ZERO), pre, type(f)(symbolic_solution(ode, t), f.post)))


@equiv("[']")
def _box_ode(ctx, f, args):
    """[x'=t & c]p  <->  forall t>=0 ((forall 0<=s<=t [S(s)]c) -> [S(t)]p)"""
    _need(isinstance(f, Box) and isinstance(f.prog, ODE), "expects [ODE]p")
    _state_post(f)
    return _solution_body(ctx, f, Forall, lambda g, pre, post: Implies(g, Implies(pre, post)))


@equiv("<'>")
def _dia_ode(ctx, f, args):
    """<x'=t & c>p  <->  exists t>=0 ((forall 0<=s<=t [S(s)]c) && <S(t)>p)"""
    _need(isinstance(f, Dia) and isinstance(f.prog, ODE), "expects <ODE>p")
    _state_post(f)
    return _solution_body(ctx, f, Exists, lambda g, pre, post: And(g, And(pre, post)))


# ----- temporal rules (local)


def _box_always(f, prog_type):
    return isinstance(f, Box) and isinstance(f.prog, prog_type) and isinstance(f.post, Always)


def _dia_eventually(f, prog_type):
    return isinstance(f, Dia) and isinstance(f.prog, prog_type) and isinstance(f.post, Eventually)


@equiv("[++]box")
def _box_choice_always(ctx, f, args):
    _need(_box_always(f, Choice), "expects [a++b]box p")
    return And(Box(f.prog.left, f.post), Box(f.prog.right, f.post))


@equiv("<++>dia")
def _dia_choice_eventually(ctx, f, args):
    _need(_dia_eventually(f, Choice), "expects <a++b>dia p")
    return Or(Dia(f.prog.left, f.post), Dia(f.prog.right, f.post))


@sound("[;]box")
def _box_seq_always(ctx, f, args):
    """[a;b]box p  <-  [a]box p && [a][b]box p"""
    _need(_box_always(f, Seq), "expects [a;b]box p")
    a, b = f.prog.left, f.prog.right
    return And(Box(a, f.post), Box(a, Box(b, f.post)))


@sound("<;>dia")
def _dia_seq_eventually(ctx, f, args):
    """<a;b>dia p  <-  <a>dia p || <a><b>dia p, if b is total"""
    _need(_dia_eventually(f, Seq), "expects <a;b>dia p")
    a, b = f.prog.left, f.prog.right
    _side(is_total(b), f"{pretty_program(b)} must have a trace from every state")
    return Or(Dia(a, f.post), Dia(a, Dia(b, f.post)))


@equiv("[?]box")
def _box_test_always(ctx, f, args):
    _need(_box_always(f, Test), "expects [?c]box p")
    return f.post.body


@equiv("<?>dia")
def _dia_test_eventually(ctx, f, args):
    _need(_dia_eventually(f, Test), "expects <?c>dia p")
    return f.post.body


@equiv("[:=]box")
def _box_assign_always(ctx, f, args):
    _need(_box_always(f, Assign), "expects [A]box p")
    return And(f.post.body, Box(f.prog, f.post.body))


@equiv("<:=>dia")
def _dia_assign_eventually(ctx, f, args):
    _need(_dia_eventually(f, Assign), "expects <A>dia p")
    return Or(f.post.body, Dia(f.prog, f.post.body))


@equiv("[']box")
def _box_ode_always(ctx, f, args):
    _need(_box_always(f, ODE), "expects [ODE]box p")
    return Box(f.prog, f.post.body)


@equiv("<'>dia")
def _dia_ode_eventually(ctx, f, args):
    _need(_dia_eventually(f, ODE), "expects <ODE>dia p")
    return Dia(f.prog, f.post.body)


def _total_body(f):
    _side(is_total(f.prog.body), f"{pretty_program(f.prog.body)} must have a trace from every state")


@sound("[*n]box")
def _box_unfold_always(ctx, f, args):
    """[a*]box p  <-  [a;a*]box p, if a is total"""
    _need(_box_always(f, Loop), "expects [a*]box p")
    _total_body(f)
    return Box(Seq(f.prog.body, f.prog), f.post)


@sound("<*n>dia")
def _dia_unfold_eventually(ctx, f, args):
    _need(_dia_eventually(f, Loop), "expects <a*>dia p")
    return Dia(Seq(f.prog.body, f.prog), f.post)


@sound("[*]box")
def _box_iterate_always(ctx, f, args):
    """[a*]box p  <-  [a*][a]box p, if a is total"""
    _need(_box_always(f, Loop), "expects [a*]box p")
    _total_body(f)
    return Box(f.prog, Box(f.prog.body, f.post))


@sound("<*>dia")
def _dia_iterate_eventually(ctx, f, args):
    _need(_dia_eventually(f, Loop), "expects <a*>dia p")
    return Dia(f.prog, Dia(f.prog.body, f.post))


@sound("[;]dia", finitary=True)
def _box_seq_eventually(ctx, f, args):
    """[a;b]dia p  <-  [a]dia p || [a][b]dia p (terminating traces only)"""
    _need(isinstance(f, Box) and isinstance(f.prog, Seq) and isinstance(f.post, Eventually),
          "expects [a;b]dia p")
    a, b = f.prog.left, f.prog.right
    return Or(Box(a, f.post), Box(a, Box(b, f.post)))


@sound("[a]dia", finitary=True)
def _box_eventually(ctx, f, args):
    """[a]dia p  <-  p || forall t [monitored a] t=1 (terminating traces only)"""
    _need(isinstance(f, Box) and isinstance(f.post, Eventually), "expects [a]dia p")
    phi = f.post.body
    _need(is_first_order(phi), "monitored condition must be first-order")
    t = ctx.fresh_var("t")
    return Or(phi, Forall(t, Box(transform_monitor(f.prog, phi, t), Eq(t, ONE))))


# ----- sequent rules


def _locate(seq: Sequent, pos: Position | None, side: str, pred, what: str) -> int:
    if pos is not None:
        _need(pos.side == side, f"{what} must be on the {'left' if side == 'L' else 'right'}")
        _need(not pos.path, "this rule applies to whole formulas only")
        items = seq.side(side)
        _need(pos.index < len(items), f"no formula at {pos}")
        _need(pred(items[pos.index]), f"formula at {pos} is not {what}")
        return pos.index
    for k, f in enumerate(seq.side(side)):
        if pred(f):
            return k
    raise RuleError(f"no {what} on the {'left' if side == 'L' else 'right'}")


def _is(*types):
    return lambda f: isinstance(f, types)


def split_right(f, cap: int = 64) -> list[list]:
    """Goal alternatives for a succedent formula (conjunctions split goals)."""
    if isinstance(f, And):
        return split_right(f.left, cap) + split_right(f.right, cap)
    if isinstance(f, Or):
        out = [a + b for a in split_right(f.left, cap) for b in split_right(f.right, cap)]
        return out if len(out) <= cap else [[f]]
    if isinstance(f, Box) and not isinstance(f.post, (Always, Eventually)):
        alts = split_right(f.post, cap)
        if len(alts) > 1 and all(len(a) == 1 for a in alts):
            return [[Box(f.prog, a[0])] for a in alts]
    return [[f]]


def split_left(f, cap: int = 64) -> list[list]:
    if isinstance(f, Or):
        return split_left(f.left, cap) + split_left(f.right, cap)
    if isinstance(f, And):
        out = [a + b for a in split_left(f.left, cap) for b in split_left(f.right, cap)]
        return out if len(out) <= cap else [[f]]
    return [[f]]


def _replace_split(seq: Sequent, side: str, index: int, f) -> list[Sequent]:
    alts = split_left(f) if side == "L" else split_right(f)
    return [seq.replace(side, index, alt) for alt in alts]


def _add_split(seqs: list[Sequent], side: str, f) -> list[Sequent]:
    alts = split_left(f) if side == "L" else split_right(f)
    return [s.add(side, *alt) for s in seqs for alt in alts]


def _drop(seq: Sequent, side: str, index: int) -> Sequent:
    return seq.replace(side, index, [])


@sequent_rule("ax")
def _ax(ctx, seq, pos, args):
    """Close a sequent sharing a formula between both sides."""
    if (set(seq.antecedent) & set(seq.succedent) or TrueF() in seq.succedent
            or FalseF() in seq.antecedent):
        return Outcome([], closed="ax")
    raise RuleError("no formula occurs on both sides")


@sequent_rule("notr")
def _notr(ctx, seq, pos, args):
    k = _locate(seq, pos, "R", _is(Not), "a negation")
    return Outcome(_add_split([_drop(seq, "R", k)], "L", seq.succedent[k].arg))


@sequent_rule("notl")
def _notl(ctx, seq, pos, args):
    k = _locate(seq, pos, "L", _is(Not), "a negation")
    return Outcome(_add_split([_drop(seq, "L", k)], "R", seq.antecedent[k].arg))


@sequent_rule("andr")
def _andr(ctx, seq, pos, args):
    k = _locate(seq, pos, "R", _is(And), "a conjunction")
    f = seq.succedent[k]
    return Outcome([seq.replace("R", k, [f.left]), seq.replace("R", k, [f.right])])


@sequent_rule("andl")
def _andl(ctx, seq, pos, args):
    k = _locate(seq, pos, "L", _is(And), "a conjunction")
    f = seq.antecedent[k]
    return Outcome([seq.replace("L", k, [f.left, f.right])])


@sequent_rule("orr")
def _orr(ctx, seq, pos, args):
    k = _locate(seq, pos, "R", _is(Or), "a disjunction")
    f = seq.succedent[k]
    return Outcome([seq.replace("R", k, [f.left, f.right])])


@sequent_rule("orl")
def _orl(ctx, seq, pos, args):
    k = _locate(seq, pos, "L", _is(Or), "a disjunction")
    f = seq.antecedent[k]
    return Outcome([seq.replace("L", k, [f.left]), seq.replace("L", k, [f.right])])


@sequent_rule("impr")
def _impr(ctx, seq, pos, args):
    k = _locate(seq, pos, "R", _is(Implies), "an implication")
    f = seq.succedent[k]
    goals = _replace_split(seq, "R", k, f.right)
    return Outcome(_add_split(goals, "L", f.left))


@sequent_rule("impl")
def _impl(ctx, seq, pos, args):
    k = _locate(seq, pos, "L", _is(Implies), "an implication")
    f = seq.antecedent[k]
    rest = _drop(seq, "L", k)
    return Outcome(_add_split([rest], "R", f.left) + _add_split([rest], "L", f.right))


@sequent_rule("cut")
def _cut(ctx, seq, pos, args):
    """Case split on cut="formula"."""
    _need("cut" in args, 'cut needs cut="formula"')
    c = ctx.parse_formula(args["cut"])
    return Outcome(_add_split([seq], "R", c) + _add_split([seq], "L", c))


@sequent_rule("hidel")
def _hidel(ctx, seq, pos, args):
    _need(pos is not None, "hidel needs a position")
    k = _locate(seq, pos, "L", lambda f: True, "a formula")
    return Outcome([_drop(seq, "L", k)])


@sequent_rule("hider")
def _hider(ctx, seq, pos, args):
    _need(pos is not None, "hider needs a position")
    k = _locate(seq, pos, "R", lambda f: True, "a formula")
    return Outcome([_drop(seq, "R", k)])


def _object_sort(ctx, args) -> str:
    if "sort" in args:
        _need(args["sort"] in ctx.sig.object_sorts, f"unknown object sort {args['sort']!r}")
        return args["sort"]
    sorts = ctx.sig.object_sorts
    _need(len(sorts) == 1, 'several object sorts: give sort="A"')
    return sorts[0]


def _is_ex_axiom(f) -> bool:
    return (isinstance(f, Exists) and f.var.sort != REAL
            and f.body == Eq(App("E", (f.var,)), ZERO))


@sequent_rule("ex")
def _ex(ctx, seq, pos, args):
    """There is always an object that does not exist yet."""
    if any(_is_ex_axiom(f) for f in seq.succedent):
        return Outcome([], closed="ex")
    sort = _object_sort(ctx, args)
    n = ctx.fresh_var("n", sort)
    return Outcome([seq.add("L", Exists(n, Eq(App("E", (n,)), ZERO)))])


def _skolemize(ctx, seq, side, k):
    f = seq.side(side)[k]
    c = ctx.skolem(f.var, free_vars(f))
    return Outcome(_replace_split(seq, side, k, substitute_var(f.body, f.var, c)))


@sequent_rule("allr")
def _allr(ctx, seq, pos, args):
    return _skolemize(ctx, seq, "R", _locate(seq, pos, "R", _is(Forall), "a universal formula"))


@sequent_rule("existsl")
def _existsl(ctx, seq, pos, args):
    return _skolemize(ctx, seq, "L", _locate(seq, pos, "L", _is(Exists), "an existential formula"))


def _instance(ctx, f, args):
    if "term" in args:
        t = ctx.parse_term(args["term"])
        _need(sort_of(t, ctx.sig) == f.var.sort, f"term {args['term']!r} has the wrong sort")
    else:
        _need(f.var.sort == REAL, 'instantiating an object quantifier needs term="..."')
        t = ctx.fresh_var(f.var.name.upper())
    return substitute_var(f.body, f.var, t)


@sequent_rule("existsr")
def _existsr(ctx, seq, pos, args):
    """Instantiate an existential on the right and keep the original."""
    k = _locate(seq, pos, "R", _is(Exists), "an existential formula")
    return Outcome(_add_split([seq], "R", _instance(ctx, seq.succedent[k], args)))


@sequent_rule("alll")
def _alll(ctx, seq, pos, args):
    k = _locate(seq, pos, "L", _is(Forall), "a universal formula")
    return Outcome(_add_split([seq], "L", _instance(ctx, seq.antecedent[k], args)))


def replace_term(node, old, new):
    """Structural replacement of a term occurrence outside binders of its variables."""
    if node == old:
        return new
    if isinstance(node, (Var, Num, TrueF, FalseF)):
        return node
    b = getattr(node, "var", None)
    if isinstance(b, Var) and b in free_vars(old):
        return node
    if isinstance(node, (Box, Dia)) and writes(node.prog) & symbols(old):
        return node
    return rebuild(node, [replace_term(c, old, new) for c in children(node)])


@sequent_rule("iall")
def _iall(ctx, seq, pos, args):
    """Generalize f(s) on the left and f(t) on the right to fresh reals."""
    _need("left" in args and "right" in args, 'iall needs left="f(s)" right="f(t)"')
    fs, ft = ctx.parse_term(args["left"]), ctx.parse_term(args["right"])
    _need(isinstance(fs, App) and isinstance(ft, App) and fs.func == ft.func,
          "iall expects two applications of the same symbol")
    _need(sort_of(fs, ctx.sig) == REAL, "iall generalizes real-valued applications")
    phi, psi = conj(seq.antecedent), disj(seq.succedent)
    x, y = ctx.fresh_var("X"), ctx.fresh_var("Y")
    phi_x, psi_x, psi_y = (replace_term(phi, fs, x), replace_term(psi, ft, x),
                           replace_term(psi, ft, y))
    _need(fs.func not in symbols(phi_x) | symbols(psi_y),
          f"{fs.func} occurs elsewhere in the sequent")
    same = conj(Eq(a, b) for a, b in zip(fs.args, ft.args))
    body = And(Implies(same, Implies(phi_x, psi_x)), Implies(Not(same), Implies(phi_x, psi_y)))
    return Outcome([Sequent((), (Forall(x, Forall(y, body)),))])


def _gen(ctx, seq, pos, args, mod):
    k = _locate(seq, pos, "R", _is(mod), "a modal formula")
    target = seq.succedent[k]
    if "from" in args:
        src = ctx.parse_formula(args["from"])
        _need(isinstance(src, mod) and src.prog == target.prog, "from= must have the same program")
    else:
        cands = [f for f in seq.antecedent if isinstance(f, mod) and f.prog == target.prog]
        _need(cands, "no matching modal formula on the left")
        src = cands[0]
    a, b = src.post, target.post
    if isinstance(a, (Always, Eventually)) or isinstance(b, (Always, Eventually)):
        _need(type(a) is type(b), "postconditions must have the same temporal operator")
        a, b = a.body, b.body
    return Outcome([Sequent((a,), (b,))])


@sequent_rule("[]gen")
def _box_gen(ctx, seq, pos, args):
    return _gen(ctx, seq, pos, args, Box)


@sequent_rule("<>gen")
def _dia_gen(ctx, seq, pos, args):
    return _gen(ctx, seq, pos, args, Dia)


@sequent_rule("ind")
def _ind(ctx, seq, pos, args):
    """Loop induction; inv="formula" adds the initial and use cases."""
    k = _locate(seq, pos, "R", lambda f: isinstance(f, Box) and isinstance(f.prog, Loop),
                "a loop box")
    f = seq.succedent[k]
    _state_post(f)
    body = f.prog.body
    if "inv" in args:
        inv = ctx.parse_formula(args["inv"])
        return Outcome(_replace_split(seq, "R", k, inv)
                       + [Sequent((inv,), (Box(body, inv),)), Sequent((inv,), (f.post,))])
    _need(f.post in seq.antecedent, 'postcondition is not assumed: give inv="..."')
    return Outcome([Sequent((f.post,), (Box(body, f.post),))])


def _alpha_eq(f, g) -> bool:
    if isinstance(f, Exists) and isinstance(g, Exists):
        return f.var.sort == g.var.sort and substitute_var(g.body, g.var, f.var) == f.body
    return f == g


@sequent_rule("con")
def _con(ctx, seq, pos, args):
    """Convergence of <a*>exists v (v<=0 && p(v)) from a decreasing variant."""
    def shape(f):
        return (isinstance(f, Dia) and isinstance(f.prog, Loop) and isinstance(f.post, Exists)
                and isinstance(f.post.body, And) and f.post.body.left == Geq(ZERO, f.post.var))
    k = _locate(seq, pos, "R", shape, "<a*>exists v (v <= 0 && p(v))")
    f = seq.succedent[k]
    v, phi = f.post.var, f.post.body.right
    _need(any(_alpha_eq(Exists(v, phi), g) for g in seq.antecedent),
          "the variant exists v p(v) must be assumed on the left")
    w = ctx.fresh_var(v.name)
    pre = And(Gt(w, ZERO), substitute_var(phi, v, w))
    return Outcome([Sequent((pre,), (Dia(f.prog.body, substitute_var(phi, v, Sub(w, ONE))),))])


def _ode_box(f):
    return isinstance(f, Box) and isinstance(f.prog, ODE) and not isinstance(f.post, (Always, Eventually))


@sequent_rule("DI")
def _di(ctx, seq, pos, args):
    """Differential invariant.

    The first premise shows the derivative along the flow; when the invariant
    is not already assumed, a second premise asks for it initially.
    """
    k = _locate(seq, pos, "R", _ode_box, "[ODE]p")
    f = seq.succedent[k]
    ode, phi = f.prog, f.post
    for lhs, _ in ode.eqs:
        _side(is_injective(ode, lhs), f"equation for {lhs.func} is not injective")
    deriv = total_derivation(phi, writes(ode), ctx.sig)
    dom = ode_domain(ode)
    left = () if isinstance(dom, TrueF) else (dom,)
    premises = [Sequent(left, (Box(_prime_assignment(ode), deriv),))]
    assumed = {c for g in seq.antecedent for c in conjuncts(g)}
    if phi not in assumed:
        premises.append(seq.replace("R", k, [phi]))
    return Outcome(premises)


@sequent_rule("DC")
def _dc(ctx, seq, pos, args):
    """Differential cut with cut="formula"."""
    _need("cut" in args, 'DC needs cut="formula"')
    k = _locate(seq, pos, "R", _ode_box, "[ODE]p")
    f = seq.succedent[k]
    c = ctx.parse_formula(args["cut"])
    ode = f.prog
    dom = c if isinstance(ode.domain, TrueF) else And(ode.domain, c)
    return Outcome([seq.replace("R", k, [Box(ode, c)]),
                    seq.replace("R", k, [Box(ODE(ode.var, ode.eqs, dom), f.post)])])


# ----- the arithmetic oracle


def _ground_objects(f, sig: Signature) -> dict[str, list]:
    out: dict[str, list] = {}
    for n in walk(f):
        if isinstance(n, App) and not free_vars(n):
            decl = sig.lookup(n.func)
            if decl is not None and decl.result != REAL and n not in out.get(decl.result, []):
                out.setdefault(decl.result, []).append(n)
    return out


def _strong(ctx, f, pol: int, under_weak: bool = False):
    """Skolemize strong quantifiers that are not below a weak one."""
    if isinstance(f, Not):
        return Not(_strong(ctx, f.arg, -pol, under_weak))
    if isinstance(f, Implies):
        return Implies(_strong(ctx, f.left, -pol, under_weak), _strong(ctx, f.right, pol, under_weak))
    if isinstance(f, (And, Or)):
        return type(f)(_strong(ctx, f.left, pol, under_weak), _strong(ctx, f.right, pol, under_weak))
    if isinstance(f, (Forall, Exists)):
        strong = (isinstance(f, Forall)) == (pol > 0)
        if strong and not under_weak:
            c = ctx.skolem(f.var, free_vars(f))
            return _strong(ctx, substitute_var(f.body, f.var, c), pol, under_weak)
        return type(f)(f.var, _strong(ctx, f.body, pol, under_weak or not strong))
    return f


def _expand(f, pol: int, ground: dict):
    """Replace weak object quantifiers by finite instances (sound weakening)."""
    if isinstance(f, Not):
        return Not(_expand(f.arg, -pol, ground))
    if isinstance(f, Implies):
        return Implies(_expand(f.left, -pol, ground), _expand(f.right, pol, ground))
    if isinstance(f, (And, Or)):
        return type(f)(_expand(f.left, pol, ground), _expand(f.right, pol, ground))
    if isinstance(f, (Forall, Exists)):
        weak = (isinstance(f, Forall)) == (pol < 0)
        if weak and f.var.sort != REAL:
            inst = [_expand(substitute_var(f.body, f.var, t), pol, ground)
                    for t in ground.get(f.var.sort, [])]
            return conj(inst) if isinstance(f, Forall) else disj(inst)
        return type(f)(f.var, _expand(f.body, pol, ground))
    return f


def arithmetic_goal(ctx: Context, seq: Sequent):
    """First-order part of a sequent with object quantifiers removed."""
    gamma = [f for f in seq.antecedent if is_first_order(f)]
    delta = [f for f in seq.succedent if is_first_order(f)]
    g = Implies(conj(gamma), disj(delta))
    for _ in range(3):
        g = _strong(ctx, g, 1)
        if not any(isinstance(n, (Forall, Exists)) and n.var.sort != REAL for n in walk(g)):
            break
        ground = _ground_objects(g, ctx.sig)
        for s in ctx.sig.object_sorts:
            if not ground.get(s):
                ground[s] = [ctx.skolem(Var("o", s), ())]
        g = _expand(g, 1, ground)
    return g


@sequent_rule("R")
def _real_arith(ctx, seq, pos, args):
    """Close a goal by deciding its first-order part."""
    g = arithmetic_goal(ctx, seq)
    weaker = _drop_weak_real(g, 1)
    task = OracleTask(g, ctx.sig.copy(), ctx.seed, ctx.solver, weaker if weaker != g else None)
    return Outcome([], pending=task)


def _drop_weak_real(f, pol: int):
    """Strengthen a goal by discarding real quantified hypotheses."""
    if isinstance(f, Not):
        return Not(_drop_weak_real(f.arg, -pol))
    if isinstance(f, Implies):
        return Implies(_drop_weak_real(f.left, -pol), _drop_weak_real(f.right, pol))
    if isinstance(f, (And, Or)):
        return type(f)(_drop_weak_real(f.left, pol), _drop_weak_real(f.right, pol))
    if isinstance(f, (Forall, Exists)) and f.var.sort == REAL:
        if isinstance(f, Forall) and pol < 0:
            return TrueF()
        if isinstance(f, Exists) and pol > 0:
            return FalseF()
    return f


RULES["QE"] = RuleSpec("QE", "sequent", _real_arith, "alias of R")


@sequent_rule("iexists")
def _iexists(ctx, seq, pos, args):
    """Combine all goals sharing var="X" into one existential goal."""
    raise RuleError("iexists is only available inside a proof")


def run_oracle(task: OracleTask) -> Verdict:
    v = decide_universal(task.formula, task.sig, seed=task.seed, solver=task.solver)
    if v.status == "unknown" and task.fallback is not None:
        w = decide_universal(task.fallback, task.sig, seed=task.seed, solver=task.solver)
        if w.valid:
            return w
    return v


# --------------------------------------------------------------------------
# rule application


def _subpaths(f, path=()):
    yield path
    if isinstance(f, (Not, And, Or, Implies, Forall, Exists, Always, Eventually)):
        for k, c in enumerate(children(f)):
            yield from _subpaths(c, path + (k,))
    elif isinstance(f, (Box, Dia)):
        yield from _subpaths(f.post, path + (1,))


def polarity(top, path) -> int | None:
    pol, node = 1, top
    for k in path:
        if isinstance(node, Not) or (isinstance(node, Implies) and k == 0):
            pol = -pol
        elif isinstance(node, (Box, Dia)):
            if k != 1:
                return None
        elif not isinstance(node, (And, Or, Implies, Forall, Exists, Always, Eventually)):
            return None
        node = children(node)[k]
    return pol


def _assign_equational(ctx, seq: Sequent, side: str, idx: int) -> Outcome:
    f = seq.side(side)[idx]
    prog = f.prog
    for lhs, rhs in prog.updates:
        _need(isinstance(lhs, App) and not lhs.args,
              "assignment is not admissible here and does not assign constants")
        _need(prog.var is None or prog.var not in free_vars(rhs), "quantified choice: use [:*]")
    _need(not isinstance(f.post, (Always, Eventually)), "use the temporal assignment rule")
    renames = {}
    for lhs, _ in prog.updates:
        decl = ctx.sig.lookup(lhs.func)
        old = ctx.names.fresh(lhs.func)
        ctx.sig.add_function(old, decl.arg_sorts, decl.result, decl.rigid)
        renames[lhs.func] = old

    def ren(g):
        for a, b in renames.items():
            g = rename_symbol(g, a, b)
        return g
    new = Sequent(tuple(ren(g) for g in seq.antecedent), tuple(ren(g) for g in seq.succedent))
    goals = _replace_split(new, side, idx, f.post)
    eqs = [Eq(lhs, ren(rhs)) for lhs, rhs in prog.updates]
    return Outcome([g.add("L", *eqs) for g in goals], note="old values renamed")


def _prefer(old, new):
    """Report a failed side condition over a mere pattern mismatch."""
    if isinstance(old, SideConditionError) and not isinstance(new, SideConditionError):
        return old
    return new


def apply_rule(ctx: Context, seq: Sequent, name: str, pos: Position | None = None,
               args: dict | None = None) -> Outcome:
    args = args or {}
    spec = RULES.get(name)
    if spec is None:
        raise RuleError(f"unknown rule {name!r}")
    if spec.kind == "sequent":
        return spec.fn(ctx, seq, pos, args)
    if pos is not None:
        items = seq.side(pos.side)
        _need(pos.index < len(items), f"no formula at {pos}")
        top = items[pos.index]
        paths = [pos.path] if pos.path else list(_subpaths(top))
        cands = [(pos.side, pos.index, p) for p in paths]
    else:
        cands = [(s, k, p) for s in "RL" for k, f in enumerate(seq.side(s)) for p in _subpaths(f)]
    last = None
    for side, idx, path in cands:
        top = seq.side(side)[idx]
        pol = polarity(top, path)
        if pol is None:
            continue
        if spec.kind == "sound" and (pol if side == "R" else -pol) < 0:
            last = _prefer(last, SideConditionError(f"{name} is only sound in positive positions"))
            continue
        try:
            new = spec.fn(ctx, subnode(top, path), args)
        except SubstitutionError as e:
            if name in ("[:=]", "<:=>") and not path:
                return _assign_equational(ctx, seq, side, idx)
            last = _prefer(last, e)
            continue
        except RuleError as e:
            last = _prefer(last, e)
            continue
        where = Position(side, idx, path)
        return Outcome(_replace_split(seq, side, idx, replace_at(top, path, new)), note=str(where))
    raise RuleError(str(last) if last else f"{name} does not apply to this goal")


# --------------------------------------------------------------------------
# proof trees and script checking


@dataclass
class ProofNode:
    sequent: Sequent
    path: tuple = ()
    rule: str | None = None
    position: str | None = None
    args: dict = field(default_factory=dict)
    children: list = field(default_factory=list)
    closed: str | None = None
    pending: OracleTask | None = None
    verdict: Verdict | None = None

    @property
    def is_open(self) -> bool:
        return self.rule is None and self.closed is None and self.pending is None

    def open_leaves(self) -> list["ProofNode"]:
        if self.is_open:
            return [self]
        return [leaf for c in self.children for leaf in c.open_leaves()]

    def nodes(self):
        yield self
        for c in self.children:
            yield from c.nodes()

    def find(self, path: tuple) -> "ProofNode":
        node = self
        for k in path:
            _need(k < len(node.children), f"no goal at path {'.'.join(map(str, path))}")
            node = node.children[k]
        return node

    def to_json(self) -> dict:
        out = {"goal": ".".join(map(str, self.path)) or "root", "sequent": str(self.sequent)}
        if self.rule:
            out["rule"] = self.rule
            if self.position:
                out["at"] = self.position
            if self.args:
                out["args"] = dict(sorted(self.args.items()))
        if self.closed:
            out["closed"] = self.closed
        if self.children:
            out["premises"] = [c.to_json() for c in self.children]
        return out


def catalog_hash() -> str:
    text = "\n".join(f"{n}|{s.kind}|{s.finitary}|{s.doc}" for n, s in sorted(RULES.items()))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class ProofResult:
    conjecture: str
    status: str  # proved | open
    root: ProofNode
    errors: list = field(default_factory=list)
    open_goals: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def proved(self) -> bool:
        return self.status == "proved"

    def to_json(self) -> dict:
        return {"conjecture": self.conjecture, "status": self.status,
                "errors": self.errors, "open_goals": self.open_goals,
                "stats": self.stats, "catalog": catalog_hash(), "tree": self.root.to_json()}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2, default=str)


class Prover:
    """Applies commands to a proof tree; oracle calls are resolved at the end."""

    def __init__(self, conjecture, sig: Signature, defs=None, *, seed: int = 0,
                 solver: SolverConfig | None = None, name: str = "goal"):
        sig = sig.copy()
        taken = set(sig.functions) | set(sig.sorts) | var_names(conjecture) | {"E"}
        self.ctx = Context(sig, dict(defs or {}), FreshNames(taken), seed, solver)
        self.name = name
        self.conjecture = conjecture
        self.root = ProofNode(Sequent((), (conjecture,)))
        self.errors: list[dict] = []
        self.steps = 0
        self.rules_used: dict[str, int] = {}

    def error(self, msg: str, span: SourceSpan | None = None, goal=None):
        e = {"message": msg}
        if span is not None:
            e["at"] = str(span)
        if goal is not None:
            e["goal"] = ".".join(map(str, goal)) or "root"
        self.errors.append(e)

    def apply(self, node: ProofNode, rule: str, pos: Position | None = None,
              args: dict | None = None):
        args = dict(args or {})
        if rule == "iexists":
            return self._iexists(node, args)
        out = apply_rule(self.ctx, node.sequent, rule, pos, args)
        node.rule = rule
        node.position = str(pos) if pos else out.note or None
        node.args = args
        node.closed = out.closed
        node.pending = out.pending
        node.children = [ProofNode(s, node.path + (k,)) for k, s in enumerate(out.premises)]
        self.steps += 1
        self.rules_used[rule] = self.rules_used.get(rule, 0) + 1

    def _iexists(self, node: ProofNode, args: dict):
        _need("var" in args, 'iexists needs var="X"')
        x = args["var"]
        leaves = [leaf for leaf in self.root.open_leaves()
                  if any(isinstance(n, Var) and n.name == x
                         for f in leaf.sequent.antecedent + leaf.sequent.succedent for n in walk(f))]
        _need(node in leaves, f"{x} does not occur in the selected goal")
        for leaf in leaves:
            for f in leaf.sequent.antecedent + leaf.sequent.succedent:
                for n in walk(f):
                    if isinstance(n, App) and any(isinstance(m, Var) and m.name == x
                                                  for a in n.args for m in walk(a)):
                        raise RuleError(f"{x} occurs as an argument of {n.func}")
        sort = next(n.sort for leaf in leaves for f in leaf.sequent.antecedent
                    + leaf.sequent.succedent for n in walk(f) if isinstance(n, Var) and n.name == x)
        body = conj(leaf.sequent.as_formula() for leaf in leaves)
        node.rule = "iexists"
        node.args = args
        node.children = [ProofNode(Sequent((), (Exists(Var(x, sort), body),)), node.path + (0,))]
        for leaf in leaves:
            if leaf is not node:
                leaf.rule = "iexists"
                leaf.closed = "iexists@" + (".".join(map(str, node.path)) or "root")
        self.steps += 1
        self.rules_used["iexists"] = self.rules_used.get("iexists", 0) + 1

    def run_command(self, cmd: Command, focus: ProofNode) -> bool:
        if cmd.goal is not None:
            try:
                target = self.root.find(cmd.goal)
            except RuleError as e:
                self.error(str(e), cmd.span)
                return False
            leaves = target.open_leaves()
        else:
            leaves = focus.open_leaves()
        if not leaves:
            self.error(f"{cmd.rule}: no open goal left", cmd.span)
            return False
        try:
            self.apply(leaves[0], cmd.rule, cmd.position, cmd.args)
        except QdtlError as e:
            self.error(f"{cmd.rule}: {e}", cmd.span, leaves[0].path)
            return False
        return True

    def run_block(self, block: Block, focus: ProofNode):
        for cmd in block.commands:
            if not self.run_command(cmd, focus):
                return
        leaves = focus.open_leaves()
        for k, sub in sorted(block.cases.items()):
            if k >= len(leaves):
                self.error(f"case {k}: only {len(leaves)} open goals")
                continue
            self.run_block(sub, leaves[k])

    def resolve_oracles(self, jobs: int = 1):
        pend = [n for n in self.root.nodes() if n.pending is not None]
        tasks = [n.pending for n in pend]
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                verdicts = list(ex.map(run_oracle, tasks))
        else:
            verdicts = [run_oracle(t) for t in tasks]
        for node, v in zip(pend, verdicts):
            node.verdict = v
            node.pending = None
            if v.valid:
                node.closed = f"R:{v.oracle}"
            else:
                node.rule = None
                msg = f"R: arithmetic goal is {v.status}"
                if v.witness:
                    msg += " with counterexample " + ", ".join(
                        f"{k}={val}" for k, val in sorted(v.witness.items()))
                if v.detail:
                    msg += f" ({v.detail})"
                self.error(msg, goal=node.path)

    def result(self) -> ProofResult:
        open_ = self.root.open_leaves()
        goals = [{"goal": ".".join(map(str, g.path)) or "root", "sequent": str(g.sequent),
                  "suggest": suggest(self.ctx, g.sequent)} for g in open_]
        oracles: dict[str, int] = {}
        for n in self.root.nodes():
            if n.closed and n.closed.startswith("R:"):
                oracles[n.closed[2:]] = oracles.get(n.closed[2:], 0) + 1
        stats = {"steps": self.steps, "rules": dict(sorted(self.rules_used.items())),
                 "oracles": dict(sorted(oracles.items())),
                 "nodes": sum(1 for _ in self.root.nodes()),
                 "finitary": any(RULES[r].finitary for r in self.rules_used if r in RULES)}
        # a rule that does not apply leaves its goal open; the error is a diagnostic
        status = "open" if open_ or self.errors else "proved"
        return ProofResult(self.name, status, self.root, self.errors, goals, stats)


def check_proof(conjecture, script: ProofScript | Block, sig: Signature, defs=None, *,
                seed: int = 0, solver: SolverConfig | None = None, jobs: int = 1,
                name: str | None = None) -> ProofResult:
    """Replay a proof script against a conjecture."""
    body = script.body if isinstance(script, ProofScript) else script
    if name is None:
        name = script.conjecture if isinstance(script, ProofScript) else "goal"
    p = Prover(conjecture, sig, defs, seed=seed, solver=solver, name=name)
    p.run_block(body, p.root)
    p.resolve_oracles(jobs)
    return p.result()


# --------------------------------------------------------------------------
# suggestions and automation

_SUGGEST_SKIP = {"cut", "DC", "iall", "iexists", "hidel", "hider", "ind", "con", "QE", "ex",
                 "[]gen", "<>gen", "existsr", "alll"}


def suggest(ctx: Context, seq: Sequent, limit: int = 5) -> list[str]:
    """Rules that apply to some formula of an open goal."""
    out = []
    for name in RULES:
        if name in _SUGGEST_SKIP:
            continue
        if name == "R":
            if all(is_first_order(f) for f in seq.antecedent + seq.succedent):
                out.append(name)
            continue
        probe = Context(ctx.sig.copy(), ctx.defs, FreshNames(ctx.names.taken), ctx.seed)
        try:
            apply_rule(probe, seq, name)
        except QdtlError:
            continue
        out.append(name)
        if len(out) >= limit:
            break
    return out


AUTO_ORDER = (
    "ax", "notr", "notl", "impr", "andl", "orr", "orl", "andr", "impl", "allr", "existsl",
    "[;]box", "[++]box", "[?]box", "[:=]box", "[']box", "<++>dia", "<?>dia", "<:=>dia", "<'>dia",
    "skip", "[;]", "<;>", "[++]", "<++>", "[?]", "<?>", "[:=]", "<:=>", "[:*]", "<:*>",
    "[']", "<'>",
)


def auto_tactic(conjecture, sig: Signature, defs=None, *, seed: int = 0,
                solver: SolverConfig | None = None, max_steps: int = 200) -> tuple[str, ProofResult]:
    """Fixed-priority proof search without cuts, induction or invariants.

    Returns a replayable script (one command per step, addressed by goal
    path) and the result of the search.
    """
    p = Prover(conjecture, sig, defs, seed=seed, solver=solver, name="auto")
    lines = []
    stuck: set[tuple] = set()
    while p.steps < max_steps:
        leaves = [g for g in p.root.open_leaves() if g.path not in stuck]
        if not leaves:
            break
        goal = leaves[0]
        at = "@" + ".".join(map(str, goal.path)) + " " if goal.path else "@ "
        if all(is_first_order(f) for f in goal.sequent.antecedent + goal.sequent.succedent):
            if _try(p, goal, "ax"):
                lines.append(at + "ax;")
                continue
            p.apply(goal, "R")
            v = run_oracle(goal.pending)
            goal.pending = None
            if v.valid:
                goal.closed = f"R:{v.oracle}"
                goal.verdict = v
                lines.append(at + "R;")
            else:
                goal.rule = None
                p.steps -= 1
                p.rules_used["R"] -= 1
                stuck.add(goal.path)
            continue
        for rule in AUTO_ORDER:
            if _try(p, goal, rule):
                lines.append(at + rule + ";")
                break
        else:
            stuck.add(goal.path)
    p.rules_used = {k: v for k, v in p.rules_used.items() if v}
    script = "proof auto {\n" + "".join(f"  {line}\n" for line in lines) + "}\n"
    return script, p.result()


def _try(p: Prover, goal: ProofNode, rule: str) -> bool:
    try:
        p.apply(goal, rule)
    except QdtlError:
        return False
    return True
