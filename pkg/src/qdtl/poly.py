"""Exact polynomial arithmetic and the real-arithmetic oracle.

Applications such as ``x1(i)`` or ``x1(i)'`` are opaque indeterminates.
Everything here is exact over :class:`fractions.Fraction`.
"""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from qdtl.syntax import (
    REAL, Add, And, App, Div, Eq, Exists, FalseF, Forall, Formula, Geq, Gt, Implies, Ite, Mul,
    Neg, Not, Num, Or, Pow, Prime, QdtlError, Signature, Sub, Term, TrueF, Var, conj, disj,
)


class UnsupportedTerm(QdtlError):
    """Term or formula outside the polynomial fragment."""


Monomial = tuple  # sorted tuple of (atom, exponent)


def _akey(atom) -> str:
    return repr(atom)


def _mono_key(m: Monomial):
    return (sum(e for _, e in m), tuple((_akey(a), e) for a, e in m))


def _mono_mul(m1: Monomial, m2: Monomial) -> Monomial:
    acc: dict = {}
    for a, e in itertools.chain(m1, m2):
        acc[a] = acc.get(a, 0) + e
    return tuple(sorted(acc.items(), key=lambda ae: _akey(ae[0])))


class Poly:
    """Canonical multivariate polynomial: monomials sorted, no zero coefficients."""

    __slots__ = ("terms", "_hash")

    def __init__(self, terms: Mapping[Monomial, Fraction] | None = None):
        items = [(m, Fraction(c)) for m, c in (terms or {}).items() if c != 0]
        items.sort(key=lambda mc: _mono_key(mc[0]))
        self.terms: dict[Monomial, Fraction] = dict(items)
        self._hash = None

    # construction
    @staticmethod
    def const(c) -> "Poly":
        return Poly({(): Fraction(c)})

    @staticmethod
    def atom(a) -> "Poly":
        return Poly({((a, 1),): Fraction(1)})

    # ring operations
    def __add__(self, other: "Poly") -> "Poly":
        other = _lift(other)
        acc = dict(self.terms)
        for m, c in other.terms.items():
            acc[m] = acc.get(m, 0) + c
        return Poly(acc)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly({m: -c for m, c in self.terms.items()})

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-_lift(other))

    def __rsub__(self, other) -> "Poly":
        return _lift(other) - self

    def __mul__(self, other: "Poly") -> "Poly":
        other = _lift(other)
        acc: dict = {}
        for (m1, c1), (m2, c2) in itertools.product(self.terms.items(), other.terms.items()):
            m = _mono_mul(m1, m2)
            acc[m] = acc.get(m, 0) + c1 * c2
        return Poly(acc)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "Poly":
        out = Poly.const(1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def scale(self, c) -> "Poly":
        return Poly({m: c * v for m, v in self.terms.items()})

    # inspection
    def __eq__(self, other) -> bool:
        return isinstance(other, Poly) and self.terms == other.terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(tuple(self.terms.items()))
        return self._hash

    def __repr__(self):
        return f"Poly({self})"

    def __str__(self):
        from qdtl.parser import pretty
        return pretty(self.to_term())

    def is_zero(self) -> bool:
        return not self.terms

    def is_const(self) -> bool:
        return all(m == () for m in self.terms)

    def const_value(self) -> Fraction:
        return self.terms.get((), Fraction(0))

    def atoms(self) -> list:
        seen = {}
        for m in self.terms:
            for a, _ in m:
                seen[_akey(a)] = a
        return [seen[k] for k in sorted(seen)]

    def degree(self) -> int:
        return max((sum(e for _, e in m) for m in self.terms), default=0)

    def degree_in(self, atom) -> int:
        return max((e for m in self.terms for a, e in m if a == atom), default=0)

    def coefficients_in(self, atom) -> dict[int, "Poly"]:
        """View as a univariate polynomial in ``atom``."""
        out: dict[int, dict] = {}
        for m, c in self.terms.items():
            e = 0
            rest = []
            for a, k in m:
                if a == atom:
                    e = k
                else:
                    rest.append((a, k))
            out.setdefault(e, {})[tuple(rest)] = c
        return {e: Poly(t) for e, t in out.items()}

    def is_linear(self) -> bool:
        return self.degree() <= 1

    def substitute(self, atom, value: "Poly") -> "Poly":
        out = Poly()
        for e, coeff in self.coefficients_in(atom).items():
            out = out + coeff * (value ** e)
        return out

    def evaluate(self, env: Mapping) -> Fraction | float:
        total = 0
        for m, c in self.terms.items():
            v = c
            for a, e in m:
                v = v * env[a] ** e
            total = total + v
        return total

    def to_term(self) -> Term:
        """Render back into a syntax term (sum of monomials)."""
        if not self.terms:
            return Num(0)
        out: Term | None = None
        for m, c in self.terms.items():
            factors: list[Term] = []
            for a, e in m:
                factors.append(a if e == 1 else Pow(a, e))
            mag = abs(c)
            if not factors:
                t: Term = Num(mag)
            else:
                t = factors[0]
                for f in factors[1:]:
                    t = Mul(t, f)
                if mag != 1:
                    t = Mul(Num(mag), t)
            if out is None:
                out = t if c > 0 else Neg(t)
            else:
                out = Add(out, t) if c > 0 else Sub(out, t)
        return out


def _lift(x) -> Poly:
    if isinstance(x, Poly):
        return x
    if isinstance(x, (int, Fraction)):
        return Poly.const(x)
    raise TypeError(f"cannot lift {x!r} to a polynomial")


def normalize(t: Term) -> Poly:
    """Canonical polynomial of a real term; raises UnsupportedTerm outside the ring."""
    if isinstance(t, Num):
        return Poly.const(t.value)
    if isinstance(t, (Var, App, Prime)):
        return Poly.atom(t)
    if isinstance(t, Neg):
        return -normalize(t.arg)
    if isinstance(t, Add):
        return normalize(t.left) + normalize(t.right)
    if isinstance(t, Sub):
        return normalize(t.left) - normalize(t.right)
    if isinstance(t, Mul):
        return normalize(t.left) * normalize(t.right)
    if isinstance(t, Pow):
        return normalize(t.base) ** t.exp
    if isinstance(t, Div):
        d = normalize(t.right)
        if not d.is_const() or d.const_value() == 0:
            raise UnsupportedTerm(f"division by non-constant {t.right}")
        return normalize(t.left).scale(1 / d.const_value())
    if isinstance(t, Ite):
        raise UnsupportedTerm("conditional term; desugar first")
    raise UnsupportedTerm(f"not a polynomial term: {t!r}")


# --------------------------------------------------------------------------
# linear constraints and Fourier-Motzkin

RELATIONS = ("=", ">=", ">", "!=")


@dataclass(frozen=True)
class LinearConstraint:
    """``poly REL 0``; REL in ``=``, ``>=``, ``>`` (and ``!=`` before case splitting)."""

    poly: Poly
    rel: str

    def __post_init__(self):
        if self.rel not in RELATIONS:
            raise ValueError(self.rel)

    def __str__(self):
        return f"{self.poly} {self.rel} 0"

    def holds(self, env: Mapping) -> bool:
        v = self.poly.evaluate(env)
        return {"=": v == 0, ">=": v >= 0, ">": v > 0, "!=": v != 0}[self.rel]

    def constant_truth(self) -> bool | None:
        if not self.poly.is_const():
            return None
        v = self.poly.const_value()
        return {"=": v == 0, ">=": v >= 0, ">": v > 0, "!=": v != 0}[self.rel]

    def canonical(self) -> "LinearConstraint":
        """Scale so the leading coefficient has magnitude one (sign kept, except for =)."""
        if self.poly.is_zero():
            return self
        lead = next(iter(self.poly.terms.values()))
        k = abs(lead) if self.rel in (">=", ">") else lead
        return LinearConstraint(self.poly.scale(1 / k), self.rel)

    def to_formula(self) -> Formula:
        t = self.poly.to_term()
        if self.rel == "=":
            return Eq(t, Num(0))
        if self.rel == ">=":
            return Geq(t, Num(0))
        if self.rel == ">":
            return Gt(t, Num(0))
        return Not(Eq(t, Num(0)))


def _linear_coeff(c: LinearConstraint, x) -> Fraction:
    parts = c.poly.coefficients_in(x)
    if any(e > 1 for e in parts):
        raise UnsupportedTerm(f"{x} occurs nonlinearly in {c}")
    k = parts.get(1)
    if k is None:
        return Fraction(0)
    if not k.is_const():
        raise UnsupportedTerm(f"coefficient of {x} in {c} is not a constant")
    return k.const_value()


def _dedupe(cs: Iterable[LinearConstraint]) -> list[LinearConstraint]:
    out: dict = {}
    for c in cs:
        c = c.canonical()
        out.setdefault((c.poly, c.rel), c)
    return list(out.values())


def fourier_motzkin(constraints: list[LinearConstraint], x) -> list[LinearConstraint]:
    """Eliminate ``x``; the result is satisfiable iff the input is (over the reals)."""
    for c in constraints:
        if c.rel == "!=" and _linear_coeff(c, x) != 0:
            raise UnsupportedTerm("split disequalities before elimination")
    coeffs = [(_linear_coeff(c, x), c) for c in constraints]
    for k, c in coeffs:
        if c.rel == "=" and k != 0:
            # x = -(rest)/k
            rest = c.poly - Poly.atom(x).scale(k)
            value = rest.scale(-1 / k)
            return _dedupe(LinearConstraint(d.poly.substitute(x, value), d.rel)
                           for kk, d in coeffs if d is not c)
    lower, upper, keep = [], [], []
    for k, c in coeffs:
        (lower if k > 0 else upper if k < 0 else keep).append((k, c))
    out = [c for _, c in keep]
    for (kl, cl), (ku, cu) in itertools.product(lower, upper):
        # kl*x + rl REL 0 (kl>0) and ku*x + ru REL 0 (ku<0)
        combined = cl.poly.scale(-ku) + cu.poly.scale(kl)
        rel = ">" if ">" in (cl.rel, cu.rel) else ">="
        out.append(LinearConstraint(combined, rel))
    return _dedupe(out)


def _pick(lo, lo_strict, hi, hi_strict):
    if lo is None and hi is None:
        return Fraction(0)
    if lo is None:
        return hi - 1 if hi_strict else hi
    if hi is None:
        return lo + 1 if lo_strict else lo
    if lo == hi:
        return lo
    return (lo + hi) / 2


def fm_solve(constraints: list[LinearConstraint], atoms: list | None = None) -> dict | None:
    """Exact rational model of a linear system, or None when unsatisfiable."""
    if atoms is None:
        seen = {}
        for c in constraints:
            for a in c.poly.atoms():
                seen[_akey(a)] = a
        atoms = [seen[k] for k in sorted(seen)]
    stages = [_dedupe(constraints)]
    for x in atoms:
        stages.append(fourier_motzkin(stages[-1], x))
    for c in stages[-1]:
        if c.constant_truth() is False:
            return None
    model: dict = {}
    for x, system in zip(reversed(atoms), reversed(stages[:-1])):
        lo = hi = None
        lo_s = hi_s = False
        eq = None
        for c in system:
            k = _linear_coeff(c, x)
            if k == 0:
                continue
            rest = Fraction((c.poly - Poly.atom(x).scale(k)).evaluate(model))
            bound = -rest / k
            if c.rel == "=":
                eq = bound
            elif k > 0:
                if lo is None or bound > lo or (bound == lo and c.rel == ">"):
                    lo, lo_s = bound, c.rel == ">"
            else:
                if hi is None or bound < hi or (bound == hi and c.rel == ">"):
                    hi, hi_s = bound, c.rel == ">"
        model[x] = eq if eq is not None else _pick(lo, lo_s, hi, hi_s)
    return model


def linear_satisfiable(constraints: list[LinearConstraint]) -> bool:
    return fm_solve(constraints) is not None


# --------------------------------------------------------------------------
# formulas to constraint systems


def _is_object(t: Term, sig: Signature | None) -> bool:
    if isinstance(t, Var):
        return t.sort != REAL
    if isinstance(t, App) and sig is not None and t.func in sig.functions:
        return not sig.sorts[sig.functions[t.func].result].is_real
    return False


@dataclass(frozen=True)
class ObjEq:
    """Equality (``pos``) or disequality between two object terms."""

    left: Term
    right: Term
    pos: bool


def atom_constraint(f: Formula, negate: bool = False) -> LinearConstraint:
    if isinstance(f, Eq):
        p = normalize(f.left) - normalize(f.right)
        return LinearConstraint(p, "!=" if negate else "=")
    if isinstance(f, Geq):
        p = normalize(f.left) - normalize(f.right)
        return LinearConstraint(-p, ">") if negate else LinearConstraint(p, ">=")
    if isinstance(f, Gt):
        p = normalize(f.left) - normalize(f.right)
        return LinearConstraint(-p, ">=") if negate else LinearConstraint(p, ">")
    raise UnsupportedTerm(f"not an arithmetic atom: {f!r}")


def dnf(f: Formula, sig: Signature | None = None, negate: bool = False, limit: int = 4096) -> list[list]:
    """Disjunctive normal form of a quantifier-free formula (or its negation).

    Each disjunct is a list of :class:`LinearConstraint` and :class:`ObjEq`.
    """
    if isinstance(f, TrueF):
        return [] if negate else [[]]
    if isinstance(f, FalseF):
        return [[]] if negate else []
    if isinstance(f, Not):
        return dnf(f.arg, sig, not negate, limit)
    if isinstance(f, Eq) and _is_object(f.left, sig):
        return [[ObjEq(f.left, f.right, not negate)]]
    if isinstance(f, (Eq, Geq, Gt)):
        return [[atom_constraint(f, negate)]]
    if isinstance(f, Implies):
        f = Or(Not(f.left), f.right)
    if isinstance(f, (And, Or)):
        is_and = isinstance(f, And) != negate
        left = dnf(f.left, sig, negate, limit)
        right = dnf(f.right, sig, negate, limit)
        if not is_and:
            return left + right
        out = [a + b for a in left for b in right]
        if len(out) > limit:
            raise UnsupportedTerm("normal form too large")
        return out
    raise UnsupportedTerm(f"unsupported connective in arithmetic formula: {type(f).__name__}")


# --------------------------------------------------------------------------
# the three-valued oracle


@dataclass
class Verdict:
    status: str  # "valid" | "invalid" | "unknown"
    oracle: str | None = None  # identity | sign | fm | search | external
    witness: dict | None = None
    detail: str = ""

    @property
    def valid(self) -> bool:
        return self.status == "valid"


def _resolve_objects(conj_: list, sig) -> list[LinearConstraint] | None:
    """Merge object equalities by rewriting; None when the disjunct is inconsistent."""
    from qdtl.syntax import substitute_var, rename_symbol
    eqs = [c for c in conj_ if isinstance(c, ObjEq) and c.pos]
    neqs = [c for c in conj_ if isinstance(c, ObjEq) and not c.pos]
    arith = [c for c in conj_ if isinstance(c, LinearConstraint)]

    def subst(t, a, b):
        if isinstance(a, Var):
            return substitute_var(t, a, b)
        if isinstance(a, App) and not a.args and isinstance(b, App) and not b.args:
            return rename_symbol(t, a.func, b.func)
        return t

    while eqs:
        e = eqs.pop()
        a, b = e.left, e.right
        if a == b:
            continue
        if not (isinstance(a, Var) or (isinstance(a, App) and not a.args)):
            a, b = b, a
        if not (isinstance(a, Var) or (isinstance(a, App) and not a.args)):
            raise UnsupportedTerm(f"cannot merge object terms {a} and {b}")
        eqs = [ObjEq(subst(x.left, a, b), subst(x.right, a, b), True) for x in eqs]
        neqs = [ObjEq(subst(x.left, a, b), subst(x.right, a, b), False) for x in neqs]
        arith = [LinearConstraint(_subst_poly(c.poly, a, b), c.rel) for c in arith]
    for n in neqs:
        if n.left == n.right:
            return None
    return arith


def _subst_poly(p: Poly, a, b) -> Poly:
    from qdtl.syntax import substitute_var, rename_symbol
    out = Poly()
    for m, c in p.terms.items():
        term = Poly.const(c)
        for atom, e in m:
            if isinstance(a, Var):
                atom = substitute_var(atom, a, b)
            else:
                atom = rename_symbol(atom, a.func, b.func)
            term = term * Poly.atom(atom) ** e
        out = out + term
    return out


def _eliminate_equalities(cs: list[LinearConstraint]):
    """Solve equalities for atoms with constant coefficients.

    Returns the residual system and the substitutions performed (in order).
    """
    subs = []
    cs = list(cs)
    changed = True
    while changed:
        changed = False
        for c in cs:
            if c.rel != "=":
                continue
            for a in c.poly.atoms():
                parts = c.poly.coefficients_in(a)
                if set(parts) - {0, 1} or not parts.get(1, Poly()).is_const() or 1 not in parts:
                    continue
                k = parts[1].const_value()
                value = parts.get(0, Poly()).scale(-1 / k)
                cs = [LinearConstraint(d.poly.substitute(a, value), d.rel) for d in cs if d is not c]
                subs.append((a, value))
                changed = True
                break
            if changed:
                break
    return cs, subs


def _nonneg_atoms(cs: list[LinearConstraint]) -> tuple[set, set]:
    nonneg, pos = set(), set()
    for c in cs:
        if c.rel in (">=", ">") and len(c.poly.terms) == 1:
            (m, k), = c.poly.terms.items()
            if k > 0 and len(m) == 1 and m[0][1] % 2 == 1:
                nonneg.add(m[0][0])
                if c.rel == ">":
                    pos.add(m[0][0])
        if c.rel in (">=", ">") and len(c.poly.terms) == 2 and () in c.poly.terms:
            # a + k >= 0 with k <= 0 gives a >= -k >= 0
            (m, k) = next((mm, kk) for mm, kk in c.poly.terms.items() if mm != ())
            if k > 0 and len(m) == 1 and m[0][1] == 1 and c.poly.terms[()] <= 0:
                nonneg.add(m[0][0])
                if c.poly.terms[()] < 0 or c.rel == ">":
                    pos.add(m[0][0])
    return nonneg, pos


def known_sign(p: Poly, nonneg: set, pos: set = frozenset()) -> str | None:
    """``">"`` or ``">="`` if p is provably positive / nonnegative, else None."""
    if p.is_zero():
        return ">="
    strict = False
    for m, c in p.terms.items():
        if c < 0:
            return None
        if m == ():
            strict = True
            continue
        for a, e in m:
            if e % 2 == 1 and a not in nonneg:
                return None
        if all(e % 2 == 0 or a in pos for a, e in m) and all(a in pos for a, e in m):
            strict = True
    return ">" if strict else ">="


def _sign_refutes(cs: list[LinearConstraint]) -> bool:
    nonneg, pos = _nonneg_atoms(cs)
    for c in cs:
        neg = known_sign(-c.poly, nonneg, pos)
        s = known_sign(c.poly, nonneg, pos)
        if c.rel == ">" and neg is not None:
            return True
        if c.rel == ">=" and neg == ">":
            return True
        if c.rel == "=" and (neg == ">" or s == ">"):
            return True
    return False


def _slack_refutes(cs: list[LinearConstraint]) -> bool:
    """Sign rule after naming one compound hypothesis ``q >= 0`` as a fresh atom.

    ``q`` is replaced by ``z`` with ``z >= 0`` by solving ``q = z`` for an atom
    of ``q`` with a constant coefficient.  The rewritten system is
    equisatisfiable with the original one.
    """
    for k, c in enumerate(cs):
        if c.rel not in (">=", ">") or len(c.poly.terms) < 2 or c.poly.is_linear():
            continue
        z = Var(f"slack_{k}")
        for a in c.poly.atoms():
            parts = c.poly.coefficients_in(a)
            if set(parts) - {0, 1} or 1 not in parts or not parts[1].is_const():
                continue
            value = (Poly.atom(z) - parts.get(0, Poly())).scale(1 / parts[1].const_value())
            rest = [LinearConstraint(d.poly.substitute(a, value), d.rel) for d in cs if d is not c]
            if _sign_refutes(rest + [LinearConstraint(Poly.atom(z), c.rel)]):
                return True
    return False


def _split_neq(cs: list[LinearConstraint], cap: int = 64) -> list[list[LinearConstraint]]:
    base = [c for c in cs if c.rel != "!="]
    neqs = [c for c in cs if c.rel == "!="]
    if 2 ** len(neqs) > cap:
        raise UnsupportedTerm("too many disequalities")
    out = []
    for signs in itertools.product((1, -1), repeat=len(neqs)):
        out.append(base + [LinearConstraint(n.poly.scale(s), ">") for s, n in zip(signs, neqs)])
    return out


SEARCH_VALUES = [Fraction(v) for v in (0, 1, -1, 2, -2, 3, -3, 5, -5, 10, -10)] + \
    [Fraction(1, 2), Fraction(-1, 2), Fraction(1, 3), Fraction(-1, 3), Fraction(3, 2), Fraction(7, 4)]


def _search(cs: list[LinearConstraint], subs, rng: random.Random, tries: int) -> dict | None:
    atoms = {}
    for c in cs:
        for a in c.poly.atoms():
            atoms[_akey(a)] = a
    for _, v in subs:
        for a in v.atoms():
            atoms[_akey(a)] = a
    names = sorted(atoms)
    for _ in range(tries):
        env = {atoms[k]: rng.choice(SEARCH_VALUES) for k in names}
        if all(c.holds(env) for c in cs):
            return _complete(env, subs)
    return None


def _complete(env: dict, subs) -> dict:
    env = dict(env)
    for a, v in reversed(subs):
        for b in v.atoms():
            env.setdefault(b, Fraction(0))
        env[a] = Fraction(v.evaluate(env))
    return env


def _decide_conjunct(conj_: list, sig, rng, tries) -> tuple[str, str, dict | None]:
    """Satisfiability of one disjunct of the negated goal: (unsat|sat|unknown, oracle, model)."""
    cs = _resolve_objects(conj_, sig)
    if cs is None:
        return "unsat", "identity", None
    original = list(cs)
    cs, subs = _eliminate_equalities(cs)
    consts = [c.constant_truth() for c in cs]
    if any(v is False for v in consts):
        return "unsat", "identity", None
    cs = [c for c, v in zip(cs, consts) if v is None]
    if not cs:
        model = _complete({}, subs)
        return _checked("sat", "identity", model, original)
    if _sign_refutes(cs) or _slack_refutes(cs):
        return "unsat", "sign", None
    if all(c.poly.is_linear() for c in cs):
        try:
            cases = _split_neq(cs)
        except UnsupportedTerm:
            cases = None
        if cases is not None:
            for case in cases:
                model = fm_solve(case)
                if model is not None:
                    return _checked("sat", "fm", _complete(model, subs), original)
            return "unsat", "fm", None
    model = _search(cs, subs, rng, tries)
    if model is not None:
        return _checked("sat", "search", model, original)
    return "unknown", "", None


def _checked(status, oracle, model, original):
    for c in original:
        for a in c.poly.atoms():
            model.setdefault(a, Fraction(0))
    if not all(c.holds(model) for c in original):
        return "unknown", "", None
    return status, oracle, model


def strip_universal(f: Formula) -> Formula:
    while isinstance(f, Forall) and f.var.sort == REAL:
        f = f.body
    return f


def decide_universal(f: Formula, sig: Signature | None = None, *, seed: int = 0,
                     tries: int = 400, solver: "SolverConfig | None" = None) -> Verdict:
    """Decide validity of the universal closure of a real-arithmetic formula.

    ``valid`` is reported only when every case of the negation is refuted by
    normalization, the known-sign rule or Fourier-Motzkin; ``invalid`` only
    with an exactly checked rational witness (or an external ``sat``).
    """
    from qdtl.syntax import desugar_conditional
    try:
        f = desugar_conditional(strip_universal(f))
        f = qe(f, sig) if _has_quantifier(f) else f
        cases = dnf(f, sig, negate=True)
    except UnsupportedTerm as e:
        return _external(f, sig, solver, f"outside internal fragment: {e}")
    rng = random.Random(seed)
    fired = set()
    pending = False
    for case in cases:
        try:
            status, oracle, model = _decide_conjunct(case, sig, rng, tries)
        except UnsupportedTerm:
            status, oracle, model = "unknown", "", None
        if status == "sat":
            return Verdict("invalid", oracle, {str(k): v for k, v in model.items()},
                           "counterexample checked by exact evaluation")
        if status == "unknown":
            pending = True
        else:
            fired.add(oracle)
    if pending:
        return _external(f, sig, solver, "undecided by identity, sign and linear procedures")
    order = ["identity", "sign", "fm"]
    return Verdict("valid", "+".join(o for o in order if o in fired) or "identity")


def _external(f, sig, solver, detail) -> Verdict:
    if solver is None or not solver.path:
        return Verdict("unknown", None, None, detail)
    v = run_solver(export_solver_query(f, sig), solver)
    if v.status == "unknown":
        v.detail = f"{detail}; {v.detail}"
    return v


def _has_quantifier(f) -> bool:
    from qdtl.syntax import walk
    return any(isinstance(n, (Forall, Exists)) for n in walk(f))


# --------------------------------------------------------------------------
# linear quantifier elimination


def qe(f: Formula, sig: Signature | None = None) -> Formula:
    """Eliminate real quantifiers from a formula linear in the bound variables."""
    if isinstance(f, (Forall, Exists)):
        body = qe(f.body, sig)
        if f.var.sort != REAL:
            raise UnsupportedTerm("object quantifiers must be instantiated before QE")
        if isinstance(f, Forall):
            return _negate_dnf(_exists(f.var, dnf(body, sig, negate=True)))
        return _to_formula(_exists(f.var, dnf(body, sig)))
    if isinstance(f, Not):
        return Not(qe(f.arg, sig))
    if isinstance(f, (And, Or, Implies)):
        return type(f)(qe(f.left, sig), qe(f.right, sig))
    return f


def _exists(x: Var, cases: list[list]) -> list[list[LinearConstraint]]:
    out = []
    for case in cases:
        if any(isinstance(c, ObjEq) for c in case):
            raise UnsupportedTerm("object atoms under a real quantifier")
        for split in _split_neq(case):
            reduced = fourier_motzkin(split, x)
            if any(c.constant_truth() is False for c in reduced):
                continue
            out.append([c for c in reduced if c.constant_truth() is None])
    return out


def _to_formula(cases: list[list[LinearConstraint]]) -> Formula:
    return disj(conj(c.to_formula() for c in case) for case in cases)


def _negate_dnf(cases: list[list[LinearConstraint]]) -> Formula:
    return Not(_to_formula(cases))


# --------------------------------------------------------------------------
# external solver boundary (SMT-LIB 2)


@dataclass
class SolverConfig:
    path: str | None = None
    timeout_ms: int = 10000
    cache_dir: str | None = None
    args: list[str] = field(default_factory=list)


def _smt_name(t: Term) -> str:
    from qdtl.parser import pretty
    return "|" + pretty(t).replace("|", "!").replace("\\", "/") + "|"


def _smt_term(t: Term, bound: set[str]) -> str:
    if isinstance(t, Num):
        v = t.value
        if v.denominator == 1:
            return f"{v.numerator}.0" if v >= 0 else f"(- {-v.numerator}.0)"
        s = f"(/ {abs(v.numerator)}.0 {v.denominator}.0)"
        return s if v >= 0 else f"(- {s})"
    if isinstance(t, Var) and t.name in bound:
        return t.name
    if isinstance(t, (Var, App, Prime)):
        return _smt_name(t)
    if isinstance(t, Neg):
        return f"(- {_smt_term(t.arg, bound)})"
    op = {Add: "+", Sub: "-", Mul: "*", Div: "/"}.get(type(t))
    if op:
        return f"({op} {_smt_term(t.left, bound)} {_smt_term(t.right, bound)})"
    if isinstance(t, Pow):
        if t.exp == 0:
            return "1.0"
        return "(* " + " ".join([_smt_term(t.base, bound)] * t.exp) + ")" if t.exp > 1 else _smt_term(t.base, bound)
    raise UnsupportedTerm(f"cannot export {t!r}")


def _smt_formula(f: Formula, bound: set[str], sig) -> str:
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, Eq):
        return f"(= {_smt_term(f.left, bound)} {_smt_term(f.right, bound)})"
    if isinstance(f, Geq):
        return f"(>= {_smt_term(f.left, bound)} {_smt_term(f.right, bound)})"
    if isinstance(f, Gt):
        return f"(> {_smt_term(f.left, bound)} {_smt_term(f.right, bound)})"
    if isinstance(f, Not):
        return f"(not {_smt_formula(f.arg, bound, sig)})"
    op = {And: "and", Or: "or", Implies: "=>"}.get(type(f))
    if op:
        return f"({op} {_smt_formula(f.left, bound, sig)} {_smt_formula(f.right, bound, sig)})"
    if isinstance(f, (Forall, Exists)):
        q = "forall" if isinstance(f, Forall) else "exists"
        sort = "Real" if f.var.sort == REAL else f.var.sort
        return f"({q} (({f.var.name} {sort})) {_smt_formula(f.body, bound | {f.var.name}, sig)})"
    raise UnsupportedTerm(f"cannot export {type(f).__name__}")


def export_solver_query(f: Formula, sig: Signature | None = None) -> str:
    """SMT-LIB 2 script asserting the negation; ``unsat`` means ``f`` is valid."""
    from qdtl.syntax import walk, free_vars
    bound_names = {n.var.name for n in walk(f) if isinstance(n, (Forall, Exists))}
    decls: dict[str, str] = {}
    sorts: set[str] = set()
    for n in walk(f):
        if isinstance(n, (App, Prime, Var)) and not (isinstance(n, Var) and n.name in bound_names and n not in free_vars(f)):
            if isinstance(n, App) and any(not isinstance(a, (Var, App)) for a in n.args):
                continue
            sort = "Real"
            if _is_object(n, sig):
                sort = n.sort if isinstance(n, Var) else sig.functions[n.func].result
                sorts.add(sort)
            if isinstance(n, Var) and n.name in bound_names:
                continue
            decls[_smt_name(n)] = sort
    for n in walk(f):
        if isinstance(n, (Forall, Exists)) and n.var.sort != REAL:
            sorts.add(n.var.sort)
    logic = "ALL" if sorts or any(isinstance(n, (Forall, Exists)) for n in walk(f)) else "QF_NRA"
    lines = [f"(set-logic {logic})"]
    lines += [f"(declare-sort {s} 0)" for s in sorted(sorts)]
    lines += [f"(declare-fun {name} () {sort})" for name, sort in sorted(decls.items())]
    lines.append(f"(assert (not {_smt_formula(f, set(), sig)}))")
    lines.append("(check-sat)")
    lines.append("(exit)")
    return "\n".join(lines) + "\n"


def import_solver_verdict(text: str) -> Verdict:
    first = next((ln.strip() for ln in text.splitlines() if ln.strip()), "")
    if first == "unsat":
        return Verdict("valid", "external")
    if first == "sat":
        return Verdict("invalid", "external", None, "solver reported sat")
    return Verdict("unknown", None, None, f"solver answered {first or 'nothing'!r}")


def run_solver(query: str, cfg: SolverConfig) -> Verdict:
    """Run the configured solver on ``query``; answers are cached by content hash."""
    import hashlib
    import os
    import shutil
    import subprocess
    path = cfg.path and (shutil.which(cfg.path) or (cfg.path if os.path.exists(cfg.path) else None))
    if not path:
        return Verdict("unknown", None, None, f"solver {cfg.path!r} not found")
    key = hashlib.sha256((os.path.basename(path) + "\0" + query).encode()).hexdigest()
    cached = None
    if cfg.cache_dir:
        cached = os.path.join(cfg.cache_dir, key[:2], key + ".out")
        if os.path.exists(cached):
            with open(cached, encoding="utf-8") as fh:
                return import_solver_verdict(fh.read())
    try:
        proc = subprocess.run([path, *cfg.args, "-in"] if os.path.basename(path).startswith("z3")
                              else [path, *cfg.args, "--lang=smt2"],
                              input=query, capture_output=True, text=True,
                              timeout=cfg.timeout_ms / 1000)
    except subprocess.TimeoutExpired:
        return Verdict("unknown", None, None, "solver timeout")
    except OSError as e:
        return Verdict("unknown", None, None, f"solver failed to start: {e}")
    verdict = import_solver_verdict(proc.stdout)
    if cached and verdict.status != "unknown":
        os.makedirs(os.path.dirname(cached), exist_ok=True)
        with open(cached, "w", encoding="utf-8") as fh:
            fh.write(proc.stdout)
    return verdict
