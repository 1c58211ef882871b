import random
import shutil
import stat
from fractions import Fraction

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from oracles import grid_satisfiable, random_linear_system
from qdtl.parser import parse_formula, parse_term
from qdtl.poly import (
    LinearConstraint, Poly, SolverConfig, UnsupportedTerm, decide_universal,
    export_solver_query, fm_solve, fourier_motzkin, import_solver_verdict, normalize, qe,
    run_solver,
)
from qdtl.syntax import Add, App, Mul, Neg, Sub, Signature
from strategies import terms

X, Y = App("x"), App("y")


def P(text):
    return normalize(parse_term(text))


# -- normalization ---------------------------------------------------------

def test_normal_form_is_canonical():
    assert P("(x + y)^2") == P("x^2 + 2*x*y + y^2")
    assert P("x*y - y*x").is_zero()
    assert P("3/4*x + x/4") == P("x")


def test_division_by_constant_only():
    assert P("x/2") == Poly.atom(X).scale(Fraction(1, 2))
    with pytest.raises(UnsupportedTerm):
        P("x/y")
    with pytest.raises(UnsupportedTerm):
        P("x/(1 - 1)")


def test_degree_and_coefficients():
    p = P("x^2*y + 3*x - 1")
    assert p.degree() == 3
    assert p.degree_in(X) == 2
    coeffs = p.coefficients_in(X)
    assert coeffs[2] == Poly.atom(Y) and coeffs[1] == Poly.const(3) and coeffs[0] == Poly.const(-1)


def test_to_term_round_trips():
    p = P("2*x^2 - x*y + 7/2")
    assert normalize(p.to_term()) == p


def test_substitute_atom():
    p = P("x^2 + y").substitute(X, P("y + 1"))
    assert p == P("y^2 + 3*y + 1")


def test_fig2_cancellation_normalizes_to_zero():
    # derivative of the separation under the tangential velocity relation
    lhs = P("2*(x1 - x2)*(-w*(y1 - y2)) + 2*(y1 - y2)*(w*(x1 - x2))")
    assert lhs.is_zero()


pairs = st.tuples(terms(depth=3), terms(depth=3))


@settings(max_examples=1000, deadline=None, suppress_health_check=list(HealthCheck))
@given(pairs)
def test_normalize_is_a_ring_homomorphism(pair):
    a, b = pair
    na, nb = normalize(a), normalize(b)
    assert normalize(Add(a, b)) == na + nb
    assert normalize(Sub(a, b)) == na - nb
    assert normalize(Mul(a, b)) == na * nb
    assert normalize(Neg(a)) == -na


@settings(max_examples=300, deadline=None, suppress_health_check=list(HealthCheck))
@given(terms(depth=3), st.integers(-4, 4), st.integers(-4, 4))
def test_normal_form_preserves_value(t, c, k):
    from qdtl.semantics import eval_term, make_state
    s = make_state({}, {"c": c, "k": k})
    assert normalize(t).evaluate({App("c"): Fraction(c), App("k"): Fraction(k)}) == eval_term(s, t)


# -- Fourier-Motzkin -------------------------------------------------------

def lc(text, rel):
    return LinearConstraint(P(text), rel)


def test_fm_simple_systems():
    assert fm_solve([lc("x - 1", ">="), lc("2 - x", ">=")]) is not None
    assert fm_solve([lc("x - 1", ">"), lc("1 - x", ">=")]) is None
    m = fm_solve([lc("x + y - 3", "="), lc("x - y - 1", "=")])
    assert m == {X: 2, Y: 1}


def test_fm_projection_drops_variable():
    out = fourier_motzkin([lc("x - y", ">="), lc("y - 1", ">")], Y)
    assert all(Y not in c.poly.atoms() for c in out)
    assert fm_solve(out) is not None


def test_fm_agrees_with_grid_oracle():
    mismatches = []
    for seed in range(500):
        rng = random.Random(seed)
        atoms, cons, rows = random_linear_system(rng)
        model = fm_solve(cons)
        if model is not None:
            env = {a: model.get(a, Fraction(0)) for a in atoms}
            assert all(c.holds(env) for c in cons), seed
        if grid_satisfiable(rows, len(atoms)) != (model is not None):
            mismatches.append(seed)
    assert mismatches == []


# -- validity oracle -------------------------------------------------------

@pytest.mark.parametrize("text,status,oracle", [
    ("x^2 + 2*x*y + y^2 = (x + y)^2", "valid", "identity"),
    ("x^2 + y^2 >= 0", "valid", "sign"),
    ("x >= y && y >= z -> x >= z", "valid", "fm"),
    ("x >= 1 -> x > 1", "invalid", None),
    ("forall e (e > 0 -> x + e > x)", "valid", None),
])
def test_decide_universal(text, status, oracle):
    v = decide_universal(parse_formula(text))
    assert v.status == status
    if oracle:
        assert oracle in (v.oracle or "")


def test_invalid_verdict_carries_checked_witness():
    v = decide_universal(parse_formula("x*y >= 0"))
    assert v.status == "invalid"
    env = {k: Fraction(val) for k, val in v.witness.items()}
    assert env["x"] * env["y"] < 0


def test_unknown_without_solver_is_not_valid():
    v = decide_universal(parse_formula("x^3 - x + 1 > 0 -> x > -2"))
    assert v.status in ("unknown", "valid")
    if v.status == "unknown":
        assert "undecided" in v.detail or "outside" in v.detail


def test_linear_qe_eliminates_quantifier():
    f = qe(parse_formula("exists z (x < z && z < y)"))
    assert decide_universal(parse_formula("x < y")).status == "invalid"
    from qdtl.syntax import walk, Exists
    assert not any(isinstance(n, Exists) for n in walk(f))


def test_object_equalities_resolve():
    sig = Signature()
    sig.add_sort("A")
    sig.add_function("f", ("A",), "R")
    f = parse_formula("forall i:A forall j:A (i = j -> f(i) = f(j))", sig)
    body = f.body.body
    assert decide_universal(body, sig).status == "valid"


# -- external solver interface ---------------------------------------------

def test_query_asserts_negation():
    q = export_solver_query(parse_formula("x >= 0 -> x + 1 > 0"))
    assert q.startswith("(set-logic QF_NRA)")
    assert "(assert (not" in q and "(check-sat)" in q
    assert "(declare-fun |x| () Real)" in q


def test_verdict_import():
    assert import_solver_verdict("unsat\n").status == "valid"
    assert import_solver_verdict("sat\n(model)").status == "invalid"
    assert import_solver_verdict("").status == "unknown"


@pytest.fixture
def fake_solver(tmp_path):
    script = tmp_path / "z3"
    log = tmp_path / "calls"
    script.write_text(f"#!/bin/sh\ncat > /dev/null\necho x >> {log}\necho unsat\n")
    script.chmod(script.stat().st_mode | stat.S_IEXEC)
    return script, log


def test_solver_answers_are_cached(fake_solver, tmp_path):
    script, log = fake_solver
    cfg = SolverConfig(str(script), 2000, str(tmp_path / "cache"))
    q = export_solver_query(parse_formula("x^3 > 0 -> x > 0"))
    assert run_solver(q, cfg).status == "valid"
    assert run_solver(q, cfg).status == "valid"
    assert log.read_text().count("x") == 1


def test_missing_solver_is_unknown():
    v = run_solver("(check-sat)", SolverConfig("no-such-solver-binary"))
    assert v.status == "unknown" and "not found" in v.detail


def test_external_fallback_used_when_internal_undecided(fake_solver):
    script, _ = fake_solver
    f = parse_formula("x^3 - x + 1 > 0 -> x > -2")
    v = decide_universal(f, solver=SolverConfig(str(script)))
    assert v.status == "valid"


@pytest.mark.skipif(shutil.which("z3") is None, reason="z3 not installed")
def test_real_z3_decides_nonlinear():
    v = decide_universal(parse_formula("x^3 - x + 1 > 0 -> x > -2"), solver=SolverConfig("z3"))
    assert v.status == "valid"
