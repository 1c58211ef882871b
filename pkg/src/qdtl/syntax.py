"""Abstract syntax of quantified differential temporal dynamic logic.

Terms, state formulas, trace formulas, quantified hybrid programs and
sequents are immutable dataclasses.  Sorts are referred to by name; the
real sort is ``"R"``.  Derived connectives ``<=`` and ``<`` are eliminated
at construction time by swapping operands; ``||``, ``->`` and ``>`` are kept
as nodes because the differential operator and the arithmetic oracle
treat them specially.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Union

REAL = "R"


class QdtlError(Exception):
    """Base class of all errors raised by this package."""


class SortError(QdtlError):
    def __init__(self, message: str, path: tuple = ()):
        super().__init__(f"{message} (at {'/'.join(map(str, path)) or 'root'})")
        self.path = path


class UnknownSymbolError(QdtlError):
    def __init__(self, name: str, path: tuple = ()):
        super().__init__(f"unknown symbol {name!r} (at {'/'.join(map(str, path)) or 'root'})")
        self.name = name
        self.path = path


class SubstitutionError(QdtlError):
    """Raised when a substitution is not admissible."""


class DesugarError(QdtlError):
    pass


# --------------------------------------------------------------------------
# sorts and signatures


@dataclass(frozen=True)
class Sort:
    name: str
    is_real: bool = False


@dataclass(frozen=True)
class FuncDecl:
    name: str
    arg_sorts: tuple[str, ...]
    result: str
    rigid: bool = False


@dataclass
class Signature:
    """Object sorts and function symbols.

    The existence symbol ``E`` is built in: it is flexible, real valued and
    accepts one argument of any object sort.
    """

    sorts: dict[str, Sort] = field(default_factory=lambda: {REAL: Sort(REAL, True)})
    functions: dict[str, FuncDecl] = field(default_factory=dict)

    def add_sort(self, name: str) -> Sort:
        if name == REAL or name in self.functions:
            raise SortError(f"cannot declare sort {name!r}")
        sort = self.sorts.setdefault(name, Sort(name))
        return sort

    def add_function(self, name: str, arg_sorts: Iterable[str], result: str,
                     rigid: bool = False) -> FuncDecl:
        arg_sorts = tuple(arg_sorts)
        for s in (*arg_sorts, result):
            if s not in self.sorts:
                raise UnknownSymbolError(s)
        if name == "E":
            raise SortError("E is built in")
        decl = FuncDecl(name, arg_sorts, result, rigid)
        self.functions[name] = decl
        return decl

    @property
    def object_sorts(self) -> list[str]:
        return [s for s in self.sorts if s != REAL]

    def lookup(self, name: str) -> FuncDecl | None:
        return self.functions.get(name)

    def is_function(self, name: str) -> bool:
        return name == "E" or name in self.functions

    def is_rigid(self, name: str) -> bool:
        decl = self.functions.get(name)
        return decl is not None and decl.rigid

    def copy(self) -> "Signature":
        return Signature(dict(self.sorts), dict(self.functions))


# --------------------------------------------------------------------------
# terms


class Node:
    __slots__ = ()

    def __str__(self) -> str:  # pragma: no cover - convenience
        from qdtl.parser import pretty
        return pretty(self)


class Term(Node):
    __slots__ = ()

    def __add__(self, other):
        return Add(self, as_term(other))

    def __radd__(self, other):
        return Add(as_term(other), self)

    def __sub__(self, other):
        return Sub(self, as_term(other))

    def __rsub__(self, other):
        return Sub(as_term(other), self)

    def __mul__(self, other):
        return Mul(self, as_term(other))

    def __rmul__(self, other):
        return Mul(as_term(other), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, n: int):
        return Pow(self, n)


@dataclass(frozen=True, slots=True, repr=False)
class Var(Term):
    name: str
    sort: str = REAL

    def __repr__(self):
        return f"Var({self.name!r}, {self.sort!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Num(Term):
    value: Fraction

    def __init__(self, value):
        object.__setattr__(self, "value", Fraction(value))

    def __repr__(self):
        return f"Num({self.value})"


@dataclass(frozen=True, slots=True, repr=False)
class App(Term):
    func: str
    args: tuple[Term, ...] = ()

    def __repr__(self):
        return f"App({self.func!r}, {self.args!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Prime(Term):
    """Differential symbol ``f(s)'``."""

    app: App

    def __repr__(self):
        return f"Prime({self.app!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Neg(Term):
    arg: Term

    def __repr__(self):
        return f"Neg({self.arg!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Add(Term):
    left: Term
    right: Term

    def __repr__(self):
        return f"Add({self.left!r}, {self.right!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Sub(Term):
    left: Term
    right: Term

    def __repr__(self):
        return f"Sub({self.left!r}, {self.right!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Mul(Term):
    left: Term
    right: Term

    def __repr__(self):
        return f"Mul({self.left!r}, {self.right!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Div(Term):
    left: Term
    right: Term

    def __repr__(self):
        return f"Div({self.left!r}, {self.right!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Pow(Term):
    base: Term
    exp: int

    def __repr__(self):
        return f"Pow({self.base!r}, {self.exp})"


@dataclass(frozen=True, slots=True, repr=False)
class Ite(Term):
    """Conditional term ``if cond then a else b fi``."""

    cond: "Formula"
    then: Term
    other: Term

    def __repr__(self):
        return f"Ite({self.cond!r}, {self.then!r}, {self.other!r})"


def as_term(x) -> Term:
    if isinstance(x, Term):
        return x
    if isinstance(x, (int, Fraction)):
        return Num(x)
    raise TypeError(f"not a term: {x!r}")


ARITH = (Neg, Add, Sub, Mul, Div, Pow)

# --------------------------------------------------------------------------
# formulas


class Formula(Node):
    __slots__ = ()

    def __and__(self, other):
        return And(self, other)

    def __or__(self, other):
        return Or(self, other)

    def __invert__(self):
        return Not(self)

    def __rshift__(self, other):
        return Implies(self, other)


@dataclass(frozen=True, slots=True, repr=False)
class TrueF(Formula):
    def __repr__(self):
        return "TrueF()"


@dataclass(frozen=True, slots=True, repr=False)
class FalseF(Formula):
    def __repr__(self):
        return "FalseF()"


@dataclass(frozen=True, slots=True, repr=False)
class Eq(Formula):
    left: Term
    right: Term

    def __repr__(self):
        return f"Eq({self.left!r}, {self.right!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Geq(Formula):
    left: Term
    right: Term

    def __repr__(self):
        return f"Geq({self.left!r}, {self.right!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Gt(Formula):
    left: Term
    right: Term

    def __repr__(self):
        return f"Gt({self.left!r}, {self.right!r})"


def Leq(a, b) -> Geq:
    return Geq(as_term(b), as_term(a))


def Lt(a, b) -> Gt:
    return Gt(as_term(b), as_term(a))


@dataclass(frozen=True, slots=True, repr=False)
class Not(Formula):
    arg: Formula

    def __repr__(self):
        return f"Not({self.arg!r})"


@dataclass(frozen=True, slots=True, repr=False)
class And(Formula):
    left: Formula
    right: Formula

    def __repr__(self):
        return f"And({self.left!r}, {self.right!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Or(Formula):
    left: Formula
    right: Formula

    def __repr__(self):
        return f"Or({self.left!r}, {self.right!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Implies(Formula):
    left: Formula
    right: Formula

    def __repr__(self):
        return f"Implies({self.left!r}, {self.right!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Forall(Formula):
    var: Var
    body: Formula

    def __repr__(self):
        return f"Forall({self.var!r}, {self.body!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Exists(Formula):
    var: Var
    body: Formula

    def __repr__(self):
        return f"Exists({self.var!r}, {self.body!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Always(Node):
    """Trace formula ``box phi``."""

    body: Formula

    def __repr__(self):
        return f"Always({self.body!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Eventually(Node):
    """Trace formula ``dia phi``."""

    body: Formula

    def __repr__(self):
        return f"Eventually({self.body!r})"


TraceFormula = Union[Formula, Always, Eventually]


@dataclass(frozen=True, slots=True, repr=False)
class Box(Formula):
    """``[prog] post`` where post is a trace formula."""

    prog: "Program"
    post: TraceFormula

    def __repr__(self):
        return f"Box({self.prog!r}, {self.post!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Dia(Formula):
    """``<prog> post``."""

    prog: "Program"
    post: TraceFormula

    def __repr__(self):
        return f"Dia({self.prog!r}, {self.post!r})"


ATOMS = (Eq, Geq, Gt)
MODALITIES = (Box, Dia)
TEMPORAL = (Always, Eventually)


def conj(formulas: Iterable[Formula]) -> Formula:
    items = list(formulas)
    if not items:
        return TrueF()
    out = items[-1]
    for f in reversed(items[:-1]):
        out = And(f, out)
    return out


def disj(formulas: Iterable[Formula]) -> Formula:
    items = list(formulas)
    if not items:
        return FalseF()
    out = items[-1]
    for f in reversed(items[:-1]):
        out = Or(f, out)
    return out


def conjuncts(f: Formula) -> list[Formula]:
    if isinstance(f, And):
        return conjuncts(f.left) + conjuncts(f.right)
    return [f]


def disjuncts(f: Formula) -> list[Formula]:
    if isinstance(f, Or):
        return disjuncts(f.left) + disjuncts(f.right)
    return [f]


def forall_many(vars_: Iterable[Var], body: Formula) -> Formula:
    for v in reversed(list(vars_)):
        body = Forall(v, body)
    return body


# --------------------------------------------------------------------------
# programs


class Program(Node):
    __slots__ = ()


Update = tuple  # (App | Prime, Term)


@dataclass(frozen=True, slots=True, repr=False)
class Assign(Program):
    """Quantified assignment ``forall i:A f(s) := theta, ...``.

    ``var`` is ``None`` for an unquantified assignment.  Several updates
    denote a simultaneous assignment.
    """

    var: Var | None
    updates: tuple[tuple[Term, Term], ...]

    def __repr__(self):
        return f"Assign({self.var!r}, {self.updates!r})"


@dataclass(frozen=True, slots=True, repr=False)
class ODE(Program):
    """Quantified differential equation system with evolution domain."""

    var: Var | None
    eqs: tuple[tuple[App, Term], ...]
    domain: Formula = TrueF()

    def __repr__(self):
        return f"ODE({self.var!r}, {self.eqs!r}, {self.domain!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Test(Program):
    cond: Formula

    def __repr__(self):
        return f"Test({self.cond!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Choice(Program):
    left: Program
    right: Program

    def __repr__(self):
        return f"Choice({self.left!r}, {self.right!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Seq(Program):
    left: Program
    right: Program

    def __repr__(self):
        return f"Seq({self.left!r}, {self.right!r})"


@dataclass(frozen=True, slots=True, repr=False)
class Loop(Program):
    body: Program

    def __repr__(self):
        return f"Loop({self.body!r})"


@dataclass(frozen=True, slots=True, repr=False)
class New(Program):
    """``n := new A``; eliminated by :func:`desugar_new`."""

    target: App
    sort: str

    def __repr__(self):
        return f"New({self.target!r}, {self.sort!r})"


def seq(*progs: Program) -> Program:
    out = progs[-1]
    for p in reversed(progs[:-1]):
        out = Seq(p, out)
    return out


# --------------------------------------------------------------------------
# sequents


@dataclass(frozen=True)
class Sequent:
    """``antecedent ==> succedent`` with set semantics.

    Duplicates are removed on construction; the order of first occurrence
    is kept so that formula positions stay stable across rule applications.
    """

    antecedent: tuple[Formula, ...] = ()
    succedent: tuple[Formula, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "antecedent", tuple(dict.fromkeys(self.antecedent)))
        object.__setattr__(self, "succedent", tuple(dict.fromkeys(self.succedent)))

    def side(self, s: str) -> tuple[Formula, ...]:
        return self.antecedent if s == "L" else self.succedent

    def replace(self, s: str, index: int, new: Iterable[Formula]) -> "Sequent":
        items = list(self.side(s))
        items[index:index + 1] = list(new)
        if s == "L":
            return Sequent(tuple(items), self.succedent)
        return Sequent(self.antecedent, tuple(items))

    def add(self, s: str, *formulas: Formula) -> "Sequent":
        if s == "L":
            return Sequent(self.antecedent + formulas, self.succedent)
        return Sequent(self.antecedent, self.succedent + formulas)

    def as_formula(self) -> Formula:
        return Implies(conj(self.antecedent), disj(self.succedent))

    def same_set(self, other: "Sequent") -> bool:
        return (set(self.antecedent) == set(other.antecedent)
                and set(self.succedent) == set(other.succedent))

    def __str__(self):
        from qdtl.parser import pretty
        left = ", ".join(pretty(f) for f in self.antecedent)
        right = ", ".join(pretty(f) for f in self.succedent)
        return f"{left} ==> {right}".strip()


# --------------------------------------------------------------------------
# generic traversal


def children(node) -> list:
    """Immediate sub-nodes in a fixed order (used for positions)."""
    if isinstance(node, (Var, Num, TrueF, FalseF)):
        return []
    if isinstance(node, App):
        return list(node.args)
    if isinstance(node, (Prime,)):
        return [node.app]
    if isinstance(node, (Neg, Not)):
        return [node.arg]
    if isinstance(node, Pow):
        return [node.base]
    if isinstance(node, (Add, Sub, Mul, Div, And, Or, Implies, Eq, Geq, Gt, Choice, Seq)):
        return [node.left, node.right]
    if isinstance(node, Ite):
        return [node.cond, node.then, node.other]
    if isinstance(node, (Forall, Exists)):
        return [node.body]
    if isinstance(node, (Box, Dia)):
        return [node.prog, node.post]
    if isinstance(node, (Always, Eventually)):
        return [node.body]
    if isinstance(node, Assign):
        return [x for pair in node.updates for x in pair]
    if isinstance(node, ODE):
        return [x for pair in node.eqs for x in pair] + [node.domain]
    if isinstance(node, Test):
        return [node.cond]
    if isinstance(node, Loop):
        return [node.body]
    if isinstance(node, New):
        return [node.target]
    raise TypeError(f"not a syntax node: {node!r}")


def rebuild(node, kids: list):
    """Inverse of :func:`children`."""
    if isinstance(node, (Var, Num, TrueF, FalseF)):
        return node
    if isinstance(node, App):
        return App(node.func, tuple(kids))
    if isinstance(node, Prime):
        return Prime(kids[0])
    if isinstance(node, Pow):
        return Pow(kids[0], node.exp)
    if isinstance(node, (Neg, Not, Always, Eventually, Test, Loop)):
        return type(node)(kids[0])
    if isinstance(node, (Add, Sub, Mul, Div, And, Or, Implies, Eq, Geq, Gt, Choice, Seq, Box, Dia)):
        return type(node)(kids[0], kids[1])
    if isinstance(node, Ite):
        return Ite(*kids)
    if isinstance(node, (Forall, Exists)):
        return type(node)(node.var, kids[0])
    if isinstance(node, Assign):
        return Assign(node.var, tuple(zip(kids[0::2], kids[1::2])))
    if isinstance(node, ODE):
        body = kids[:-1]
        return ODE(node.var, tuple(zip(body[0::2], body[1::2])), kids[-1])
    if isinstance(node, New):
        return New(kids[0], node.sort)
    raise TypeError(f"not a syntax node: {node!r}")


def walk(node) -> Iterator:
    yield node
    for c in children(node):
        yield from walk(c)


def subnode(node, path: Iterable[int]):
    for k in path:
        node = children(node)[k]
    return node


def replace_at(node, path: tuple[int, ...], new):
    if not path:
        return new
    kids = children(node)
    kids[path[0]] = replace_at(kids[path[0]], path[1:], new)
    return rebuild(node, kids)


def binder_of(node) -> Var | None:
    if isinstance(node, (Forall, Exists, Assign, ODE)):
        return node.var
    return None


# --------------------------------------------------------------------------
# variables and symbols


def free_vars(node) -> set[Var]:
    """Free logical variables."""
    if isinstance(node, Var):
        return {node}
    out: set[Var] = set()
    for c in children(node):
        out |= free_vars(c)
    b = binder_of(node)
    if b is not None:
        out.discard(b)
    return out


def bound_names(node) -> set[str]:
    return {b.name for n in walk(node) if (b := binder_of(n)) is not None}


def var_names(node) -> set[str]:
    return {n.name for n in walk(node) if isinstance(n, Var)} | bound_names(node)


def symbols(node) -> set[str]:
    """Function symbols occurring in a node; primed symbols as ``f'``."""
    out = set()
    for n in walk(node):
        if isinstance(n, App):
            out.add(n.func)
        elif isinstance(n, Prime):
            out.add(n.app.func + "'")
        elif isinstance(n, New):
            out.add("E")
    return out


def lhs_symbol(lhs: Term) -> str:
    if isinstance(lhs, Prime):
        return lhs.app.func + "'"
    return lhs.func


def writes(prog: Program) -> set[str]:
    """Function symbols a program may change."""
    if isinstance(prog, Assign):
        return {lhs_symbol(l) for l, _ in prog.updates}
    if isinstance(prog, ODE):
        return {l.func for l, _ in prog.eqs}
    if isinstance(prog, New):
        return {prog.target.func, "E"}
    if isinstance(prog, Test):
        return set()
    if isinstance(prog, (Choice, Seq)):
        return writes(prog.left) | writes(prog.right)
    if isinstance(prog, Loop):
        return writes(prog.body)
    raise TypeError(prog)


def is_first_order(f) -> bool:
    return not any(isinstance(n, (Box, Dia, Always, Eventually, Prime)) for n in walk(f))


def has_temporal(f) -> bool:
    return any(isinstance(n, (Always, Eventually)) for n in walk(f))


class FreshNames:
    """Monotone fresh-name supply."""

    def __init__(self, taken: Iterable[str] = ()):
        self.taken = set(taken)
        self.counter = itertools.count(1)

    def fresh(self, base: str) -> str:
        base = base.split("_")[0] or "v"
        while True:
            name = f"{base}_{next(self.counter)}"
            if name not in self.taken:
                self.taken.add(name)
                return name

    def reserve(self, names: Iterable[str]):
        self.taken |= set(names)


def fresh_name(base: str, avoid: set[str]) -> str:
    stem = base.split("_")[0] or "v"
    k = 1
    while f"{stem}_{k}" in avoid:
        k += 1
    return f"{stem}_{k}"


# --------------------------------------------------------------------------
# substitution


def _rename_bound(node, old: Var, new: Var):
    return substitute(node, old, new)


def substitute(node, target: Term, replacement: Term, *, check_admissible: bool = True):
    """Capture-avoiding substitution of ``target`` by ``replacement``.

    ``target`` is a logical variable or a 0-ary function application.
    Bound variables are renamed when they would capture free variables of
    the replacement.  Substituting into the scope of a modality whose
    program writes ``target``'s symbol or a symbol of the replacement is
    refused with :class:`SubstitutionError`.
    """
    if not isinstance(target, (Var, App)) or (isinstance(target, App) and target.args):
        raise SubstitutionError("target must be a variable or constant symbol")
    rep_fv = free_vars(replacement)
    rep_syms = symbols(replacement)
    tsym = target.func if isinstance(target, App) else None
    return _subst(node, target, replacement, rep_fv, rep_syms, tsym, check_admissible)


def _occurs(node, target) -> bool:
    return any(n == target for n in walk(node))


def _subst(node, target, rep, rep_fv, rep_syms, tsym, check):
    if node == target:
        return rep
    if isinstance(node, (Var, Num, TrueF, FalseF)):
        return node
    if not _occurs(node, target):
        return node
    if isinstance(node, (Box, Dia)):
        w = writes(node.prog)
        # occurrences inside the program before it writes anything are fine,
        # but the postcondition is in the scope of all writes
        bad = (tsym is not None and tsym in w) or bool(rep_syms & w)
        if check and bad and (_occurs(node.post, target) or _program_scope_occurs(node.prog, target)):
            from qdtl.parser import pretty
            raise SubstitutionError(
                f"substitution of {pretty(target)} not admissible under modality "
                f"[{pretty(node.prog)}]")
    b = binder_of(node)
    if b is not None:
        if b == target:
            # target is shadowed in the whole scope of the binder
            if isinstance(node, (Forall, Exists)):
                return node
        if b in rep_fv and _occurs(node, target):
            avoid = var_names(node) | {v.name for v in rep_fv} | ({target.name} if isinstance(target, Var) else set())
            nb = Var(fresh_name(b.name, avoid), b.sort)
            node = _rename_binder(node, nb)
            b = nb
        if isinstance(node, (Forall, Exists)):
            return type(node)(b, _subst(node.body, target, rep, rep_fv, rep_syms, tsym, check))
        if b == target:
            return node
    if isinstance(node, Assign):
        # the written location is not an occurrence; its arguments are
        sub = lambda t: _subst(t, target, rep, rep_fv, rep_syms, tsym, check)  # noqa: E731
        return Assign(node.var, tuple((_subst_location(lhs, target, sub), sub(rhs))
                                      for lhs, rhs in node.updates))
    kids = [_subst(c, target, rep, rep_fv, rep_syms, tsym, check) for c in children(node)]
    return rebuild(node, kids)


def _subst_location(lhs, target, sub):
    if isinstance(lhs, Prime):
        return Prime(_subst_location(lhs.app, target, sub))
    if lhs == target:
        return lhs
    return App(lhs.func, tuple(sub(a) for a in lhs.args))


def _program_scope_occurs(prog, target) -> bool:
    """Whether target occurs somewhere a program's earlier writes may affect."""
    if isinstance(prog, Seq):
        return _program_scope_occurs(prog.left, target) or _occurs(prog.right, target)
    if isinstance(prog, Loop):
        return _occurs(prog.body, target)
    if isinstance(prog, Choice):
        return _program_scope_occurs(prog.left, target) or _program_scope_occurs(prog.right, target)
    if isinstance(prog, ODE):
        return _occurs(prog, target)
    return False


def _rename_binder(node, nb: Var):
    b = binder_of(node)
    kids = [_subst(c, b, nb, {nb}, set(), None, False) for c in children(node)]
    if isinstance(node, (Forall, Exists)):
        return type(node)(nb, kids[0])
    if isinstance(node, Assign):
        return Assign(nb, tuple(zip(kids[0::2], kids[1::2])))
    if isinstance(node, ODE):
        body = kids[:-1]
        return ODE(nb, tuple(zip(body[0::2], body[1::2])), kids[-1])
    raise TypeError(node)


def substitute_var(node, var: Var, term: Term):
    return substitute(node, var, term, check_admissible=False)


def rename_symbol(node, old: str, new: str):
    """Rename every occurrence of function symbol ``old`` (including primes)."""
    if isinstance(node, App):
        args = tuple(rename_symbol(a, old, new) for a in node.args)
        return App(new if node.func == old else node.func, args)
    if isinstance(node, (Var, Num, TrueF, FalseF)):
        return node
    if isinstance(node, New):
        return New(rename_symbol(node.target, old, new), node.sort)
    return rebuild(node, [rename_symbol(c, old, new) for c in children(node)])


# --------------------------------------------------------------------------
# typing


def sort_of(term: Term, sig: Signature, env: dict[str, str] | None = None,
            path: tuple = ()) -> str:
    """Sort of a term; raises :class:`SortError` or :class:`UnknownSymbolError`."""
    env = env or {}
    if isinstance(term, Var):
        return env.get(term.name, term.sort)
    if isinstance(term, Num):
        return REAL
    if isinstance(term, App):
        arg_sorts = [sort_of(a, sig, env, path + (k,)) for k, a in enumerate(term.args)]
        if term.func == "E":
            if len(arg_sorts) != 1 or arg_sorts[0] == REAL:
                raise SortError("E takes one argument of an object sort", path)
            return REAL
        decl = sig.lookup(term.func)
        if decl is None:
            raise UnknownSymbolError(term.func, path)
        if tuple(arg_sorts) != decl.arg_sorts:
            raise SortError(f"{term.func} expects {decl.arg_sorts}, got {tuple(arg_sorts)}", path)
        return decl.result
    if isinstance(term, Prime):
        s = sort_of(term.app, sig, env, path + (0,))
        if s != REAL:
            raise SortError(f"differential symbol {term.app.func}' needs a real-valued symbol", path)
        return REAL
    if isinstance(term, ARITH):
        for k, c in enumerate(children(term)):
            if sort_of(c, sig, env, path + (k,)) != REAL:
                raise SortError("arithmetic on non-real term", path)
        if isinstance(term, Pow) and term.exp < 0:
            raise SortError("negative exponent", path)
        return REAL
    if isinstance(term, Ite):
        check_formula(term.cond, sig, env, path + (0,))
        if not is_first_order(term.cond) or any(isinstance(n, (Forall, Exists)) for n in walk(term.cond)):
            raise SortError("condition of a conditional term must be quantifier-free", path)
        a = sort_of(term.then, sig, env, path + (1,))
        b = sort_of(term.other, sig, env, path + (2,))
        if a != b:
            raise SortError("branches of conditional term differ in sort", path)
        return a
    raise SortError(f"not a term: {term!r}", path)


def check_formula(f, sig: Signature, env: dict[str, str] | None = None, path: tuple = ()) -> None:
    env = dict(env or {})
    if isinstance(f, (TrueF, FalseF)):
        return
    if isinstance(f, Eq):
        a = sort_of(f.left, sig, env, path + (0,))
        b = sort_of(f.right, sig, env, path + (1,))
        if a != b:
            raise SortError(f"equality between sorts {a} and {b}", path)
        return
    if isinstance(f, (Geq, Gt)):
        a = sort_of(f.left, sig, env, path + (0,))
        b = sort_of(f.right, sig, env, path + (1,))
        if a != REAL or b != REAL:
            raise SortError(f"sorts {a}/{b} have no ordering", path)
        return
    if isinstance(f, Not):
        return check_formula(f.arg, sig, env, path + (0,))
    if isinstance(f, (And, Or, Implies)):
        check_formula(f.left, sig, env, path + (0,))
        return check_formula(f.right, sig, env, path + (1,))
    if isinstance(f, (Forall, Exists)):
        if f.var.sort not in sig.sorts:
            raise UnknownSymbolError(f.var.sort, path)
        env[f.var.name] = f.var.sort
        return check_formula(f.body, sig, env, path + (0,))
    if isinstance(f, (Always, Eventually)):
        if has_temporal(f.body):
            raise SortError("nested temporal operator", path)
        return check_formula(f.body, sig, env, path + (0,))
    if isinstance(f, (Box, Dia)):
        check_program(f.prog, sig, env, path + (0,))
        return check_formula(f.post, sig, env, path + (1,))
    raise SortError(f"not a formula: {f!r}", path)


def _check_lhs(lhs, sig, env, path, real_only: bool):
    if isinstance(lhs, Prime):
        app = lhs.app
    elif isinstance(lhs, App):
        app = lhs
    else:
        raise SortError("left-hand side must be a function application", path)
    if app.func != "E":
        decl = sig.lookup(app.func)
        if decl is None:
            raise UnknownSymbolError(app.func, path)
        if decl.rigid:
            raise SortError(f"cannot change rigid symbol {app.func}", path)
    if any(app.func in symbols(a) for a in app.args):
        raise SortError(f"{app.func} occurs in its own argument", path)
    s = sort_of(lhs, sig, env, path)
    if real_only and s != REAL:
        raise SortError(f"differential equation for non-real symbol {app.func}", path)
    return s


def check_program(p, sig: Signature, env: dict[str, str] | None = None, path: tuple = ()) -> None:
    env = dict(env or {})
    if isinstance(p, (Assign, ODE)):
        if p.var is not None:
            if p.var.sort not in sig.sorts or p.var.sort == REAL:
                raise SortError("quantified programs range over object sorts", path)
            env[p.var.name] = p.var.sort
        pairs = p.updates if isinstance(p, Assign) else p.eqs
        for k, (lhs, rhs) in enumerate(pairs):
            s = _check_lhs(lhs, sig, env, path + (2 * k,), isinstance(p, ODE))
            if sort_of(rhs, sig, env, path + (2 * k + 1,)) != s:
                raise SortError("assignment sort mismatch", path + (2 * k,))
        if isinstance(p, ODE):
            if not is_first_order(p.domain):
                raise SortError("evolution domain must be first-order", path)
            check_formula(p.domain, sig, env, path + (2 * len(p.eqs),))
        return
    if isinstance(p, Test):
        if not is_first_order(p.cond):
            raise SortError("test condition must be first-order", path)
        return check_formula(p.cond, sig, env, path + (0,))
    if isinstance(p, (Choice, Seq)):
        check_program(p.left, sig, env, path + (0,))
        return check_program(p.right, sig, env, path + (1,))
    if isinstance(p, Loop):
        return check_program(p.body, sig, env, path + (0,))
    if isinstance(p, New):
        if p.sort == REAL:
            raise SortError("new objects only exist for object sorts", path)
        if sort_of(p.target, sig, env, path) != p.sort:
            raise SortError("new target has wrong sort", path)
        return
    raise SortError(f"not a program: {p!r}", path)


def check_types(node, sig: Signature) -> None:
    if isinstance(node, Term):
        sort_of(node, sig)
    elif isinstance(node, Program):
        check_program(node, sig)
    else:
        check_formula(node, sig)


def well_typed(node, sig: Signature) -> bool:
    """True iff all sort constraints hold.

    Unknown symbols are not a typing verdict; they raise
    :class:`UnknownSymbolError`.
    """
    try:
        check_types(node, sig)
    except SortError:
        return False
    return True


def is_injective(prog: Assign | ODE, lhs: Term) -> bool:
    """Syntactic injectivity of one update of a quantified assignment/ODE.

    The update is injective if its argument vector is exactly the quantified
    variable, or if it is vacuously quantified (neither the arguments nor
    the right-hand side mention the variable, so all writes agree).
    """
    app = lhs.app if isinstance(lhs, Prime) else lhs
    if prog.var is None:
        return True
    if app.args == (prog.var,):
        return True
    pairs = prog.updates if isinstance(prog, Assign) else prog.eqs
    rhs = dict(pairs)[lhs]
    return prog.var not in free_vars(app) and prog.var not in free_vars(rhs)


# --------------------------------------------------------------------------
# desugaring


def _first_ite(node, path=()):
    """Path of the first conditional term in an atomic formula."""
    if isinstance(node, Ite):
        return path
    for k, c in enumerate(children(node)):
        r = _first_ite(c, path + (k,))
        if r is not None:
            return r
    return None


def desugar_conditional(f: Formula) -> Formula:
    """Eliminate conditional terms.

    ``psi(if c then a else b fi)`` becomes ``(c -> psi(a)) && (!c -> psi(b))``
    at the innermost enclosing atomic formula.
    """
    if isinstance(f, ATOMS):
        path = _first_ite(f)
        if path is None:
            return f
        ite = subnode(f, path)
        with_then = replace_at(f, path, ite.then)
        with_else = replace_at(f, path, ite.other)
        cond = desugar_conditional(ite.cond)
        return And(Implies(cond, desugar_conditional(with_then)),
                   Implies(Not(cond), desugar_conditional(with_else)))
    if isinstance(f, (Box, Dia)):
        w = writes(f.prog)
        for n in walk(f):
            if isinstance(n, Ite) and symbols(n.cond) & w:
                from qdtl.parser import pretty
                raise DesugarError(
                    f"conditional {pretty(n)} depends on symbols changed by {pretty(f.prog)}")
        return type(f)(_desugar_prog(f.prog), desugar_conditional(f.post))
    if isinstance(f, (TrueF, FalseF)):
        return f
    return rebuild(f, [desugar_conditional(c) for c in children(f)])


def _desugar_prog(p):
    if isinstance(p, Test):
        return Test(desugar_conditional(p.cond))
    if isinstance(p, ODE):
        return ODE(p.var, p.eqs, desugar_conditional(p.domain))
    if isinstance(p, (Choice, Seq, Loop)):
        return rebuild(p, [_desugar_prog(c) for c in children(p)])
    return p


def desugar_new(p: Program, names: FreshNames | None = None) -> Program:
    """Rewrite ``n := new A`` into object choice, freshness test and E update."""
    if isinstance(p, New):
        if p.sort == REAL:
            raise DesugarError("n := new R: only object sorts have an existence function")
        names = names or FreshNames(var_names(p))
        j = Var(names.fresh("j"), p.sort)
        n = p.target
        return seq(Assign(j, ((n, j),)),
                   Test(Eq(App("E", (n,)), Num(0))),
                   Assign(None, ((App("E", (n,)), Num(1)),)))
    if isinstance(p, (Choice, Seq, Loop)):
        names = names or FreshNames(var_names(p))
        return rebuild(p, [desugar_new(c, names) for c in children(p)])
    return p


def desugar_new_in(f, names: FreshNames | None = None):
    """Apply :func:`desugar_new` to every program inside a formula."""
    names = names or FreshNames(var_names(f))
    if isinstance(f, Program):
        return desugar_new(f, names)
    if isinstance(f, (Box, Dia)):
        return type(f)(desugar_new(f.prog, names), desugar_new_in(f.post, names))
    if isinstance(f, (Var, Num, TrueF, FalseF)):
        return f
    return rebuild(f, [desugar_new_in(c, names) for c in children(f)])
