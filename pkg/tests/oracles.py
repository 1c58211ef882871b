"""Independent reference oracles used by the property tests."""
from fractions import Fraction
import random

import numpy as np

from qdtl.poly import LinearConstraint, Poly
from qdtl.syntax import (
    Add, And, App, Assign, Box, Choice, Dia, Eq, Forall, Geq, Gt, Implies, Loop, Mul, Neg, Not,
    Num, ODE, Or, Pow, Seq, Signature, Sub, Test, TrueF, Var,
)

GRID_DENOMINATORS = range(1, 7)
GRID_BOUND = 12


def grid_values(bound=GRID_BOUND, denominators=GRID_DENOMINATORS) -> np.ndarray:
    vals = {Fraction(p, q) for q in denominators for p in range(-bound * q, bound * q + 1)}
    return np.array(sorted(float(v) for v in vals))


def random_linear_system(rng: random.Random, n_vars=None, n_cons=None):
    """Coefficients in {-1, 0, 1}, constants in [-3, 3]; returns (atoms, constraints, rows)."""
    n = n_vars or rng.randint(1, 3)
    m = n_cons or rng.randint(1, 6)
    atoms = [App(f"v{k}") for k in range(n)]
    rows, cons = [], []
    for _ in range(m):
        a = [rng.choice((-1, 0, 1)) for _ in range(n)]
        b = rng.randint(-3, 3)
        rel = rng.choice(("=", ">=", ">"))
        p = Poly.const(b)
        for coef, x in zip(a, atoms):
            p = p + Poly.atom(x).scale(coef)
        rows.append((a, b, rel))
        cons.append(LinearConstraint(p, rel))
    return atoms, cons, rows


def grid_satisfiable(rows, n_vars: int, grid=None) -> bool:
    """Grid search over all but the last variable; the last one is solved exactly."""
    grid = grid_values() if grid is None else grid
    if n_vars == 1:
        pts = np.zeros((1, 0))
    else:
        mesh = np.meshgrid(*([grid] * (n_vars - 1)), indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=1)
    lo = np.full(len(pts), -np.inf)
    hi = np.full(len(pts), np.inf)
    lo_strict = np.zeros(len(pts), bool)
    hi_strict = np.zeros(len(pts), bool)
    ok = np.ones(len(pts), bool)
    eps = 1e-9
    for a, b, rel in rows:
        rest = pts @ np.array(a[:-1], float) + b if n_vars > 1 else np.full(len(pts), float(b))
        k = a[-1]
        if k == 0:
            if rel == "=":
                ok &= np.abs(rest) < eps
            elif rel == ">=":
                ok &= rest > -eps
            else:
                ok &= rest > eps
            continue
        bound = -rest / k
        strict = rel == ">"
        # an equation is a lower and an upper bound at once
        sides = ("lo", "hi") if rel == "=" else (("lo",) if k > 0 else ("hi",))
        for side in sides:
            if side == "lo":
                tighter = bound > lo + eps
                same = np.abs(bound - lo) <= eps
                lo_strict = np.where(tighter, strict, np.where(same, lo_strict | strict, lo_strict))
                lo = np.where(tighter, bound, lo)
            else:
                tighter = bound < hi - eps
                same = np.abs(bound - hi) <= eps
                hi_strict = np.where(tighter, strict, np.where(same, hi_strict | strict, hi_strict))
                hi = np.where(tighter, bound, hi)
    gap = hi - lo
    feasible = ok & ((gap > eps) | ((np.abs(gap) <= eps) & ~lo_strict & ~hi_strict))
    return bool(feasible.any())


# --------------------------------------------------------------------------
# seeded random programs and formulas over sort A with x: A -> R and c: R


I = Var("i", "A")


def toy_signature() -> Signature:
    sig = Signature()
    sig.add_sort("A")
    sig.add_function("x", ("A",), "R")
    sig.add_function("c", (), "R")
    return sig


def _lin(rng, obj=None):
    atoms = [App("c")] + ([App("x", (obj,))] if obj is not None else [])
    t = Num(Fraction(rng.randint(-2, 2)))
    for a in atoms:
        k = rng.randint(-1, 1)
        if k:
            t = Add(t, Mul(Num(Fraction(k)), a))
    return t


def random_atom(rng, obj=None):
    rel = rng.choice((Eq, Geq, Gt))
    return rel(_lin(rng, obj), _lin(rng, obj))


def random_program(rng, depth=2, ode=True, loops=True):
    """Loops are not nested, which keeps every trace set under the simulator budget."""
    kinds = ["assign", "qassign", "test"] + (["ode", "qode"] if ode else [])
    if depth > 0:
        kinds += ["choice", "seq"] + (["loop"] if loops else [])
    kind = rng.choice(kinds)
    if kind == "assign":
        return Assign(None, ((App("c"), _lin(rng)),))
    if kind == "qassign":
        return Assign(I, ((App("x", (I,)), _lin(rng, I)),))
    if kind == "test":
        return Test(random_atom(rng))
    if kind == "ode":
        dom = rng.choice((TrueF(), Geq(Num(Fraction(3)), App("c"))))
        return ODE(None, ((App("c"), Num(Fraction(rng.choice((-1, 1, 2))))),), dom)
    if kind == "qode":
        return ODE(I, ((App("x", (I,)), rng.choice((Num(Fraction(1)), App("c")))),), TrueF())
    if kind == "choice":
        return Choice(random_program(rng, depth - 1, ode, loops),
                      random_program(rng, depth - 1, ode, loops))
    if kind == "seq":
        return Seq(random_program(rng, depth - 1, ode, loops),
                   random_program(rng, depth - 1, ode, loops))
    return Loop(random_program(rng, depth - 1, ode, False))


def random_state_formula(rng, depth=2, ode=True, loops=True):
    """Temporal-free first-order dynamic formula."""
    if depth <= 0:
        return random_atom(rng)
    kind = rng.choice(("atom", "not", "and", "or", "implies", "forall", "box", "dia", "box", "dia"))
    sub = lambda: random_state_formula(rng, depth - 1, ode, loops)  # noqa: E731
    if kind == "atom":
        return random_atom(rng)
    if kind == "not":
        return Not(sub())
    if kind in ("and", "or", "implies"):
        return {"and": And, "or": Or, "implies": Implies}[kind](sub(), sub())
    if kind == "forall":
        return Forall(I, random_atom(rng, I))
    prog = random_program(rng, 2, ode, loops)
    return (Box if kind == "box" else Dia)(prog, sub())


def random_toy_state(rng, n_objects=None):
    from qdtl.semantics import make_state
    n = n_objects or rng.randint(1, 3)
    pool = tuple(f"A{k}" for k in range(n))
    return make_state({"A": pool}, {
        "c": rng.randint(-2, 2),
        "x": {(o,): rng.randint(-2, 2) for o in pool},
        "E": {(o,): 1 for o in pool},
    })


def random_term(rng, depth=3):
    """Polynomial term over c, k and x(o) with small integer and rational constants."""
    if depth <= 0 or rng.random() < 0.25:
        return rng.choice((App("c"), App("k"), App("x", (App("o"),)),
                           Num(Fraction(rng.randint(-3, 3), rng.randint(1, 3)))))
    kind = rng.choice(("add", "sub", "mul", "neg", "pow"))
    if kind == "neg":
        return Neg(random_term(rng, depth - 1))
    if kind == "pow":
        return Pow(random_term(rng, depth - 1), rng.randint(0, 3))
    op = {"add": Add, "sub": Sub, "mul": Mul}[kind]
    return op(random_term(rng, depth - 1), random_term(rng, depth - 1))
