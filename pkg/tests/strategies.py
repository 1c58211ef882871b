"""Hypothesis strategies over a small fixed signature.

Sort ``A`` with a flexible ``x: A -> R``, a flexible constant ``c`` and a
rigid constant ``k``.  Generated formulas only use bound variables.
"""
from fractions import Fraction

from hypothesis import strategies as st

from qdtl.syntax import (
    Add, And, App, Assign, Box, Choice, Dia, Eq, Exists, Forall, Geq, Gt, Implies, Loop, Mul,
    Neg, Not, Num, ODE, Or, Pow, Seq, Signature, Sub, Test, TrueF, Var, Always, Eventually,
)


def signature() -> Signature:
    sig = Signature()
    sig.add_sort("A")
    sig.add_function("x", ("A",), "R")
    sig.add_function("c", (), "R")
    sig.add_function("k", (), "R", rigid=True)
    return sig


OBJ_VARS = ("i", "j")
REAL_VARS = ("y", "z")


@st.composite
def terms(draw, env=(), depth=2):
    leaves = [st.builds(lambda n: Num(Fraction(n)), st.integers(0, 9)),
              st.just(App("c")), st.just(App("k"))]
    objs = [v for v in env if v.sort == "A"]
    reals = [v for v in env if v.sort == "R"]
    if objs:
        leaves.append(st.sampled_from([App("x", (v,)) for v in objs]))
    if reals:
        leaves.append(st.sampled_from(reals))
    if depth <= 0:
        return draw(st.one_of(leaves))
    sub = terms(env, depth - 1)
    return draw(st.one_of(
        *leaves,
        st.builds(Add, sub, sub), st.builds(Sub, sub, sub), st.builds(Mul, sub, sub),
        st.builds(Neg, sub), st.builds(Pow, sub, st.integers(1, 3)),
    ))


@st.composite
def programs(draw, env=(), depth=2, ode=True):
    i = Var("i", "A")
    kinds = ["assign", "qassign", "test"] + (["ode", "qode"] if ode else [])
    if depth > 0:
        kinds += ["choice", "seq", "loop"]
    kind = draw(st.sampled_from(kinds))
    if kind == "assign":
        return Assign(None, ((App("c"), draw(terms(env, 1))),))
    if kind == "qassign":
        env2 = tuple(v for v in env if v.name != "i") + (i,)
        return Assign(i, ((App("x", (i,)), draw(terms(env2, 1))),))
    if kind == "test":
        return Test(draw(formulas(env, 1, modal=False)))
    if kind == "ode":
        return ODE(None, ((App("c"), draw(terms(env, 1))),), draw(domains(env)))
    if kind == "qode":
        env2 = tuple(v for v in env if v.name != "i") + (i,)
        return ODE(i, ((App("x", (i,)), draw(terms(env2, 1))),), TrueF())
    sub = programs(env, depth - 1, ode)
    if kind == "choice":
        return Choice(draw(sub), draw(sub))
    if kind == "seq":
        return Seq(draw(sub), draw(sub))
    return Loop(draw(sub))


def domains(env):
    return st.one_of(st.just(TrueF()), st.builds(Geq, terms(env, 1), terms(env, 1)))


@st.composite
def atoms(draw, env):
    t = terms(env, 2)
    rel = draw(st.sampled_from([Eq, Geq, Gt]))
    return rel(draw(t), draw(t))


@st.composite
def formulas(draw, env=(), depth=3, modal=True, temporal=True, ode=True):
    if depth <= 0:
        return draw(atoms(env))
    kinds = ["atom", "not", "and", "or", "implies", "forall", "exists"]
    if modal:
        kinds += ["box", "dia"]
    kind = draw(st.sampled_from(kinds))
    sub = formulas(env, depth - 1, modal, temporal, ode)
    if kind == "atom":
        return draw(atoms(env))
    if kind == "not":
        return Not(draw(sub))
    if kind in ("and", "or", "implies"):
        return {"and": And, "or": Or, "implies": Implies}[kind](draw(sub), draw(sub))
    if kind in ("forall", "exists"):
        names = OBJ_VARS + REAL_VARS
        name = draw(st.sampled_from(names))
        v = Var(name, "A" if name in OBJ_VARS else "R")
        env2 = tuple(w for w in env if w.name != name) + (v,)
        body = draw(formulas(env2, depth - 1, modal, temporal, ode))
        return (Forall if kind == "forall" else Exists)(v, body)
    prog = draw(programs(env, 1, ode))
    post = draw(formulas(env, depth - 1, modal=False))
    if temporal and draw(st.booleans()):
        post = draw(st.sampled_from([Always, Eventually]))(post)
    return (Box if kind == "box" else Dia)(prog, post)
