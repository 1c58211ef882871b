import json
import random

import pytest

import soundness
from oracles import I, random_atom, random_program, random_state_formula, random_toy_state, toy_signature
from qdtl import corpus
from qdtl.calculus import (
    RULES, Context, RuleError, apply_rule, auto_tactic, check_proof, derive_term,
    is_total, run_oracle, symbolic_solution, total_derivation, transform_monitor,
)
from qdtl.parser import Position, parse_formula, parse_program, parse_proof_script, pretty
from qdtl.poly import normalize
from qdtl.semantics import SimConfig, eval_state_formula
from qdtl.syntax import (
    Always, And, App, Assign, Box, Choice, Dia, Eventually, Exists, Forall, Implies,
    Loop, Not, Num, ODE, Or, Seq, Sequent, TrueF, Var, SubstitutionError, is_first_order, substitute,
    substitute_var,
)
import qdtl.syntax as syn


@pytest.fixture(scope="module")
def atc():
    th = corpus.load_theory(str(corpus.entry("atc-flight").theory_path))
    return th.signature, th.definitions


@pytest.fixture(scope="module")
def cars():
    th = corpus.load_theory(str(corpus.entry("cars-forward").theory_path))
    return th.signature, th.definitions


def toy():
    sig = toy_signature()
    sig.add_function("y", (), "R")
    return sig


def premises(rule, formula, sig, defs=None, side="R", ante=()):
    out = apply_rule(Context(sig.copy(), defs or {}), Sequent(tuple(ante), (formula,)), rule)
    return [str(s) for s in out.premises]


# ----- rule examples


def test_ode_box_drops_the_temporal_operator(atc):
    sig, defs = atc
    goal = parse_formula("[forall i:A F(i)] box Safe", sig, defs)
    (prem,) = premises("[']box", goal, sig, defs)
    assert prem == "==> " + pretty(parse_formula("[forall i:A F(i)] Safe", sig, defs))


def test_seq_box_splits_into_two_goals(atc):
    sig, defs = atc
    goal = parse_formula("[forall i:A t := 0; forall i:A M(i) & chi; ?eta] box Safe", sig, defs)
    first, second = premises("[;]box", goal, sig, defs)
    assert first == "==> " + pretty(parse_formula("[forall i:A t := 0] box Safe", sig, defs))
    rest = parse_formula("[forall i:A t := 0][forall i:A M(i) & chi; ?eta] box Safe", sig, defs)
    assert second == "==> " + pretty(rest)


def test_test_box_keeps_the_postcondition(atc):
    sig, defs = atc
    assert premises("[?]box", parse_formula("[?chi] box Safe", sig, defs), sig, defs) == [
        "==> " + pretty(parse_formula("Safe", sig, defs))]


def test_rule_mismatch_is_an_error(atc):
    sig, defs = atc
    with pytest.raises(RuleError, match="expects"):
        apply_rule(Context(sig.copy(), defs), Sequent((), (parse_formula("Safe", sig, defs),)),
                   "[']box")


def test_sound_rules_refuse_negative_positions():
    sig = toy()
    f = parse_formula("[c := 1; c := 2] box c >= 0", sig)
    with pytest.raises(RuleError, match="positive"):
        apply_rule(Context(sig), Sequent((f,), (parse_formula("y >= 0", sig),)), "[;]box")


# ----- total derivation


def test_derivation_of_separation(atc):
    sig, _ = atc
    f = parse_formula("forall i:A forall j:A (x1(i) - x1(j))^2 + (x2(i) - x2(j))^2 >= p^2", sig)
    d = total_derivation(f, {"x1", "x2", "d1", "d2"}, sig)
    assert pretty(d) == ("forall i:A forall j:A 2*(x1(i) - x1(j))*(x1(i)' - x1(j)') "
                         "+ 2*(x2(i) - x2(j))*(x2(i)' - x2(j)') >= 0")


def test_derivation_of_constants_is_trivial():
    assert pretty(total_derivation(parse_formula("5 >= 3"), set(), toy())) == "0 >= 0"


def test_derivation_rejects_negation_and_modalities():
    sig = toy()
    for bad in ("!(c >= 0)", "[c := 1] c >= 0"):
        with pytest.raises(RuleError, match="D is undefined"):
            total_derivation(parse_formula(bad, sig), {"c"}, sig)


def test_derivation_of_disjunction_is_conjunction():
    sig = toy()
    d = total_derivation(parse_formula("c >= 0 || y = 1", sig), {"c", "y"}, sig)
    assert isinstance(d, And)


def test_tangential_derivative_after_substitution(atc):
    sig, defs = atc
    ode = parse_program("forall i:A F(i)", sig, defs)
    tan = parse_formula("forall i:A forall j:A Tan(i, j)", sig, defs)
    goal = Sequent((), (Box(ode, tan),))
    ctx = Context(sig.copy(), defs)
    out = apply_rule(ctx, goal, "DI")
    prem = out.premises[0].succedent[0]
    assert pretty(prem.post) == ("forall i:A forall j:A (d1(i)' - d1(j)' = -omega*(x2(i)' - x2(j)') "
                                 "&& d2(i)' - d2(j)' = omega*(x1(i)' - x1(j)'))")
    (after,) = apply_rule(ctx, out.premises[0], "[:=]").premises
    # the second derivative identity cancels to zero
    body = after.succedent[0].body.body
    for eq in (body.left, body.right):
        assert normalize(eq.left) == normalize(eq.right)


def test_derive_term_of_driven_symbol():
    assert pretty(derive_term(parse_formula("c*c >= 0", toy()).left, {"c"})) == "c'*c + c*c'"


# ----- symbolic solutions


def test_double_integrator_solution(cars):
    sig, _ = cars
    sol = symbolic_solution(parse_program("forall i:C x(i)' = v(i), v(i)' = a(i)", sig), Var("s"))
    assert pretty(sol) == "forall i:C x(i) := x(i) + v(i)*s + 0.5*(a(i)*s^2), v(i) := v(i) + a(i)*s"


def test_clock_solution():
    sig = toy()
    assert pretty(symbolic_solution(parse_program("c' = 1", sig), Var("s"))) == "c := c + s"


def test_rotation_has_no_polynomial_solution(atc):
    sig, defs = atc
    with pytest.raises(RuleError, match="use DI/DC"):
        symbolic_solution(parse_program("forall i:A F(i)", sig, defs), Var("s"))


def test_flight_script_never_uses_solutions():
    res = corpus.check_entry("atc-flight")
    assert "[']" not in res.stats["rules"] and "<'>" not in res.stats["rules"]


# ----- monitor transformation


def test_monitor_examples():
    sig = toy()
    phi, t = parse_formula("y >= 1", sig), Var("t")
    mon = lambda p: pretty(transform_monitor(parse_program(p, sig), phi, t))  # noqa: E731
    assert mon("c := 1") == "c := 1; ?(y >= 1 -> t = 1)"
    assert mon("?c >= 0 ++ ?c <= 0") == "?(c >= 0) ++ ?(0 >= c)"
    assert mon("c' = y & c <= 2") == "c' = y & 2 >= c && (y >= 1 -> t = 1)"


def test_monitor_variable_must_be_fresh():
    sig = toy()
    with pytest.raises(RuleError, match="fresh"):
        transform_monitor(Assign(None, ((App("c"), Var("t")),)), parse_formula("y >= 1", sig),
                          Var("t"))


# ----- side conditions


def test_totality():
    sig = toy()
    assert is_total(parse_program("c := 1; ?c >= 2", sig))
    assert not is_total(parse_program("c' = 1 & c <= 0", sig))
    assert is_total(parse_program("c' = 1 & c <= 0 ++ c := 1", sig))
    assert not is_total(parse_program("c := 1; c' = 1 & c <= 0", sig))


def test_seq_eventually_needs_a_total_second_program():
    sig = toy()
    concl = parse_formula("<c := 1; c' = 1 & false> dia c = 1", sig)
    with pytest.raises(RuleError, match="side condition"):
        apply_rule(Context(sig), Sequent((), (concl,)), "<;>dia")
    # without the side condition the rule would prove a false formula
    unchecked = Or(Dia(concl.prog.left, concl.post),
                   Dia(concl.prog.left, Dia(concl.prog.right, concl.post)))
    s = random_toy_state(random.Random(0))
    cfg = SimConfig(h=0.5, durations=(0.0, 0.5))
    assert eval_state_formula(s, unchecked, cfg) and not eval_state_formula(s, concl, cfg)


def test_loop_unfolding_needs_a_total_body():
    sig = toy()
    f = parse_formula("[{c' = 1 & c <= 0}*] box c <= 0", sig)
    for rule in ("[*n]box", "[*]box"):
        with pytest.raises(RuleError, match="side condition"):
            apply_rule(Context(sig), Sequent((), (f,)), rule)


def test_di_rejects_non_injective_equations():
    sig = toy()
    f = Box(ODE(I, ((App("c"), App("x", (I,))),), TrueF()), parse_formula("c >= 0", sig))
    with pytest.raises(RuleError, match="not injective"):
        apply_rule(Context(sig), Sequent((), (f,)), "DI")


def test_skip_requires_untouched_postcondition():
    sig = toy()
    (prem,) = premises("skip", parse_formula("[c := 1] box y >= 0", sig), sig)
    assert prem == "==> y >= 0"
    with pytest.raises(RuleError, match="changed symbol"):
        apply_rule(Context(sig), Sequent((), (parse_formula("[c := 1] c >= 0", sig),)), "skip")


# ----- proof checking


def test_flight_proof(atc):
    res = corpus.check_entry("atc-flight")
    assert res.proved and res.stats["steps"] <= 50
    assert set(res.stats["rules"]) == {"impr", "[']box", "DC", "DI", "[:=]", "R"}


def test_untangled_flight_is_open_at_the_arithmetic_step():
    res = corpus.check_entry("atc-flight-untangled")
    assert res.status == "open"
    (goal,) = res.open_goals
    node = res.root.find(tuple(int(k) for k in goal["goal"].split(".")))
    assert all(is_first_order(f) for f in node.sequent.antecedent + node.sequent.succedent)
    th = corpus.load_theory(str(corpus.entry("atc-flight-untangled").theory_path))
    task = apply_rule(Context(th.signature.copy()), node.sequent, "R").pending
    assert not run_oracle(task).valid


def test_manoeuvre_proof():
    res = corpus.check_entry("atc-manoeuvre")
    assert res.proved
    assert {"[;]box", "[:=]box", "[?]box", "[']box", "DC", "DI", "ax"} <= set(res.stats["rules"])


def test_inapplicable_rule_leaves_goal_open():
    sig = toy()
    (script,) = parse_proof_script("proof g { andr; }")
    res = check_proof(parse_formula("c >= 0 -> c >= 0", sig), script, sig)
    assert res.status == "open"
    assert res.errors[0]["goal"] == "root" and "conjunction" in res.errors[0]["message"]
    assert res.open_goals[0]["suggest"][:2] == ["impr", "R"] or "impr" in res.open_goals[0]["suggest"]


def test_check_proof_is_deterministic_across_jobs():
    e = corpus.entry("atc-manoeuvre")
    one = corpus.check_entry(e, jobs=1).dumps()
    again = corpus.check_entry(e, jobs=1).dumps()
    many = corpus.check_entry(e, jobs=3).dumps()
    assert one == again == many
    assert json.loads(one)["status"] == "proved"


# ----- automation


def test_auto_splits_conjunction_then_test():
    sig = toy()
    script, res = auto_tactic(parse_formula("[?c >= 0] box y >= y && y >= y", sig), sig)
    steps = [line.split()[1].rstrip(";") for line in script.splitlines()[1:-1]]
    assert steps[:2] == ["andr", "[?]box"] and res.proved


def test_auto_decomposes_choice():
    sig = toy()
    script, res = auto_tactic(parse_formula("[c := 1 ++ c := 2] box y*y >= 0", sig), sig)
    assert script.splitlines()[1].split()[1] == "[++]box;" and res.proved


def test_auto_does_not_guess_loop_invariants():
    sig = toy()
    script, res = auto_tactic(parse_formula("[{c := c + 1}*] c >= 0", sig), sig)
    assert script.splitlines()[1:-1] == [] and res.status == "open"


def test_auto_script_replays():
    sig = toy()
    goal = parse_formula("c >= 0 -> [c := c + 1 ++ ?c >= 5] c >= 0", sig)
    script, res = auto_tactic(goal, sig)
    (parsed,) = parse_proof_script(script)
    assert res.proved and check_proof(goal, parsed, sig).proved


# ----- empirical local soundness


@pytest.mark.parametrize("rule", list(soundness.LOCAL) + list(soundness.PROPOSITIONAL))
def test_local_soundness(rule):
    if rule in soundness.LOCAL:
        rep = soundness.check_local(rule, 50, 50)
    else:
        rep = soundness.check_sequent_rule(rule, 50, 50)
    assert rep.instances == 50
    assert rep.violations == []
    assert rep.reverse_violations == 0


def test_soundness_harness_catches_a_broken_rule(monkeypatch):
    spec = RULES["[;]box"]
    broken = lambda ctx, f, args: Box(f.prog.left, f.post)  # noqa: E731
    monkeypatch.setattr(spec, "fn", broken)
    assert soundness.check_local("[;]box", 50, 50).violations


# ----- duality


DUAL_PAIRS = [("[++]box", "<++>dia", "choice"), ("[;]box", "<;>dia", "seq"),
              ("[?]box", "<?>dia", "test"), ("[:=]box", "<:=>dia", "assign"),
              ("[*n]box", "<*n>dia", "loop"), ("[*]box", "<*>dia", "loop"),
              ("[++]", "<++>", "choice"), ("[;]", "<;>", "seq"), ("[?]", "<?>", "test"),
              ("[:=]", "<:=>", "assign")]


def negate(f, phi):
    """The dual of a diamond premise, pushing negation through the modalities above phi."""
    if f == phi:
        return Not(phi)
    if isinstance(f, Or):
        return And(negate(f.left, phi), negate(f.right, phi))
    if isinstance(f, And):
        return Or(negate(f.left, phi), negate(f.right, phi))
    if isinstance(f, Dia) and isinstance(f.post, Eventually):
        return Box(f.prog, Always(negate(f.post.body, phi)))
    if isinstance(f, Dia):
        return Box(f.prog, negate(f.post, phi))
    return Not(f)


@pytest.mark.parametrize("box_rule,dia_rule,kind", DUAL_PAIRS)
def test_diamond_rules_are_duals_of_box_rules(box_rule, dia_rule, kind):
    rng = random.Random(box_rule)
    temporal = box_rule.endswith("box")
    cfg = soundness.CFG
    done = 0
    while done < 20:
        prog = soundness._prog(rng, kind)
        phi = random_state_formula(rng, 1, ode=False)
        dia = Dia(prog, Eventually(phi) if temporal else phi)
        box = Box(prog, Always(Not(phi)) if temporal else Not(phi))
        try:
            pd = RULES[dia_rule].fn(Context(toy_signature()), dia, {})
            pb = RULES[box_rule].fn(Context(toy_signature()), box, {})
        except (RuleError, SubstitutionError):
            continue
        done += 1
        if temporal:
            assert negate(pd, phi) == pb
        for _ in range(10):
            s = random_toy_state(rng)
            assert eval_state_formula(s, pd, cfg) != eval_state_formula(s, pb, cfg)


# ----- schema fidelity


def _atom(rng):
    return random_atom(rng)


def _local_cases(rng):
    """(rule, conclusion, expected premise builder) for the local schemata."""
    a, b = random_program(rng, 1, ode=False, loops=False), random_program(rng, 1, ode=False, loops=False)
    p, c = _atom(rng), random_atom(rng)
    theta = random_atom(rng).left
    assign = Assign(None, ((App("c"), theta),))
    loop = Loop(Assign(None, ((App("c"), theta),)))
    rhs = random_atom(rng, I).left
    choose = Assign(I, ((App("c"), rhs),))
    inst = lambda out: substitute(p, App("c"), substitute_var(rhs, I, out.var))  # noqa: E731
    return [
        ("[;]", Box(Seq(a, b), p), lambda out: Box(a, Box(b, p))),
        ("<;>", Dia(Seq(a, b), p), lambda out: Dia(a, Dia(b, p))),
        ("[++]", Box(Choice(a, b), p), lambda out: And(Box(a, p), Box(b, p))),
        ("<++>", Dia(Choice(a, b), p), lambda out: Or(Dia(a, p), Dia(b, p))),
        ("[?]", Box(syn.Test(c), p), lambda out: Implies(c, p)),
        ("<?>", Dia(syn.Test(c), p), lambda out: And(c, p)),
        ("[:=]", Box(assign, p), lambda out: substitute(p, App("c"), theta)),
        ("<:=>", Dia(assign, p), lambda out: substitute(p, App("c"), theta)),
        ("[:*]", Box(choose, p), lambda out: Forall(out.var, inst(out))),
        ("<:*>", Dia(choose, p), lambda out: Exists(out.var, inst(out))),
        ("[++]box", Box(Choice(a, b), Always(p)), lambda out: And(Box(a, Always(p)), Box(b, Always(p)))),
        ("<++>dia", Dia(Choice(a, b), Eventually(p)),
         lambda out: Or(Dia(a, Eventually(p)), Dia(b, Eventually(p)))),
        ("[;]box", Box(Seq(a, b), Always(p)),
         lambda out: And(Box(a, Always(p)), Box(a, Box(b, Always(p))))),
        ("<;>dia", Dia(Seq(a, assign), Eventually(p)),
         lambda out: Or(Dia(a, Eventually(p)), Dia(a, Dia(assign, Eventually(p))))),
        ("[?]box", Box(syn.Test(c), Always(p)), lambda out: p),
        ("<?>dia", Dia(syn.Test(c), Eventually(p)), lambda out: p),
        ("[:=]box", Box(assign, Always(p)), lambda out: And(p, Box(assign, p))),
        ("<:=>dia", Dia(assign, Eventually(p)), lambda out: Or(p, Dia(assign, p))),
        ("[']box", Box(ODE(None, ((App("c"), Num(1)),), TrueF()), Always(p)),
         lambda out: Box(ODE(None, ((App("c"), Num(1)),), TrueF()), p)),
        ("<'>dia", Dia(ODE(None, ((App("c"), Num(1)),), TrueF()), Eventually(p)),
         lambda out: Dia(ODE(None, ((App("c"), Num(1)),), TrueF()), p)),
        ("[*n]box", Box(loop, Always(p)), lambda out: Box(Seq(loop.body, loop), Always(p))),
        ("<*n>dia", Dia(loop, Eventually(p)), lambda out: Dia(Seq(loop.body, loop), Eventually(p))),
        ("[*]box", Box(loop, Always(p)), lambda out: Box(loop, Box(loop.body, Always(p)))),
        ("<*>dia", Dia(loop, Eventually(p)), lambda out: Dia(loop, Dia(loop.body, Eventually(p)))),
        ("[;]dia", Box(Seq(a, b), Eventually(p)),
         lambda out: Or(Box(a, Eventually(p)), Box(a, Box(b, Eventually(p))))),
    ]


LOCAL_SCHEMATA = [
    "[;]", "<;>", "[++]", "<++>", "[?]", "<?>", "[:=]", "<:=>", "[:*]", "<:*>", "[++]box",
    "<++>dia", "[;]box", "<;>dia", "[?]box", "<?>dia", "[:=]box", "<:=>dia", "[']box", "<'>dia",
    "[*n]box", "<*n>dia", "[*]box", "<*>dia", "[;]dia"]


@pytest.mark.parametrize("rule", LOCAL_SCHEMATA)
def test_local_schema_fidelity(rule):
    rng = random.Random(rule)
    for _ in range(20):
        _, concl, expected = next(c for c in _local_cases(rng) if c[0] == rule)
        out = RULES[rule].fn(Context(toy_signature()), concl, {})
        assert out == expected(out), (rule, pretty(concl))


def _seq_case(rule, rng):
    """A random sequent for a sequent rule and its expected premises."""
    p, q, r = _atom(rng), _atom(rng), _atom(rng)
    if rule in ("cut", "ind", "DC"):
        # the argument is passed as text, so compare against its parse
        p, r = (parse_formula(pretty(f), toy_signature()) for f in (p, r))
    if rule == "ax":
        return Sequent((p, q), (r, p)), {}, []
    if rule == "notr":
        return Sequent((q,), (Not(p), r)), {}, [Sequent((q, p), (r,))]
    if rule == "notl":
        return Sequent((Not(p), q), (r,)), {}, [Sequent((q,), (r, p))]
    if rule == "andr":
        return Sequent((r,), (And(p, q),)), {}, [Sequent((r,), (p,)), Sequent((r,), (q,))]
    if rule == "andl":
        return Sequent((And(p, q),), (r,)), {}, [Sequent((p, q), (r,))]
    if rule == "orr":
        return Sequent((r,), (Or(p, q),)), {}, [Sequent((r,), (p, q))]
    if rule == "orl":
        return Sequent((Or(p, q),), (r,)), {}, [Sequent((p,), (r,)), Sequent((q,), (r,))]
    if rule == "impr":
        return Sequent((r,), (Implies(p, q),)), {}, [Sequent((r, p), (q,))]
    if rule == "impl":
        return Sequent((Implies(p, q),), (r,)), {}, [Sequent((), (r, p)), Sequent((q,), (r,))]
    if rule == "cut":
        return Sequent((q,), (r,)), {"cut": pretty(p)}, [Sequent((q,), (r, p)), Sequent((q, p), (r,))]
    if rule == "hidel":
        return Sequent((p, q), (r,)), {"pos": Position("L", 0)}, [Sequent((q,), (r,))]
    if rule == "hider":
        return Sequent((p,), (q, r)), {"pos": Position("R", 1)}, [Sequent((p,), (q,))]
    if rule in ("[]gen", "<>gen"):
        mod = Box if rule == "[]gen" else Dia
        a = random_program(rng, 1, ode=False)
        return Sequent((mod(a, p),), (mod(a, q),)), {}, [Sequent((p,), (q,))]
    if rule == "ind":
        a = random_program(rng, 1, ode=False, loops=False)
        return (Sequent((p,), (Box(Loop(a), q),)), {"inv": pretty(r)},
                [Sequent((p,), (r,)), Sequent((r,), (Box(a, r),)), Sequent((r,), (q,))])
    if rule == "DC":
        ode = ODE(None, ((App("c"), Num(rng.choice((-1, 1)))),), TrueF())
        return (Sequent((q,), (Box(ode, p),)), {"cut": pretty(r)},
                [Sequent((q,), (Box(ode, r),)), Sequent((q,), (Box(ODE(None, ode.eqs, r), p),))])
    raise KeyError(rule)


SEQUENT_RULES = ["ax", "notr", "notl", "andr", "andl", "orr", "orl", "impr", "impl", "cut",
                 "hidel", "hider", "[]gen", "<>gen", "ind", "DC"]


@pytest.mark.parametrize("rule", SEQUENT_RULES)
def test_sequent_schema_fidelity(rule):
    rng = random.Random(rule)
    for _ in range(20):
        seq, args, expected = _seq_case(rule, rng)
        pos = args.pop("pos", None)
        out = apply_rule(Context(toy_signature()), seq, rule, pos, args)
        assert out.premises == expected, (rule, str(seq))
        assert (out.closed is not None) == (expected == [])


def _skolem(ctx, sig):
    (name,) = [n for n in ctx.sig.functions if n not in sig.functions]
    return App(name, ())


def test_quantifier_rule_schemata():
    sig = toy_signature()
    rng = random.Random(7)
    for _ in range(20):
        body = random_atom(rng, I)
        ctx = Context(sig.copy())
        (prem,) = apply_rule(ctx, Sequent((), (Forall(I, body),)), "allr").premises
        assert prem == Sequent((), (substitute_var(body, I, _skolem(ctx, sig)),))
        ctx = Context(sig.copy())
        (prem,) = apply_rule(ctx, Sequent((Exists(I, body),), ()), "existsl").premises
        assert prem == Sequent((substitute_var(body, I, _skolem(ctx, sig)),), ())
        ctx = Context(sig.copy())
        ctx.sig.add_function("o", (), "A")
        (prem,) = apply_rule(ctx, Sequent((Forall(I, body),), ()), "alll", None,
                             {"term": "o"}).premises
        assert prem == Sequent((Forall(I, body), substitute_var(body, I, App("o"))), ())
        (prem,) = apply_rule(ctx, Sequent((), (Exists(I, body),)), "existsr", None,
                             {"term": "o"}).premises
        assert prem == Sequent((), (Exists(I, body), substitute_var(body, I, App("o"))))


def test_object_instantiation_needs_a_term():
    sig = toy_signature()
    f = Forall(I, random_atom(random.Random(1), I))
    with pytest.raises(RuleError, match="term="):
        apply_rule(Context(sig), Sequent((f,), ()), "alll")


def test_existence_rule():
    sig = toy_signature()
    ctx = Context(sig.copy())
    (prem,) = apply_rule(ctx, Sequent((), (parse_formula("c >= 0", sig),)), "ex").premises
    (new,) = prem.antecedent
    assert isinstance(new, Exists) and new.var.sort == "A"
    assert pretty(new.body) == f"E({new.var.name}) = 0"
    closed = apply_rule(ctx, Sequent((), (new,)), "ex")
    assert closed.premises == [] and closed.closed == "ex"


def test_oracle_rule_is_deferred():
    sig = toy()
    out = apply_rule(Context(sig), Sequent((parse_formula("c >= 1", sig),),
                                           (parse_formula("c >= 0", sig),)), "R")
    assert out.premises == [] and out.pending is not None
    assert RULES["QE"].fn is RULES["R"].fn


def test_iexists_is_only_available_in_proofs():
    sig = toy()
    with pytest.raises(RuleError, match="inside a proof"):
        apply_rule(Context(sig), Sequent((), (parse_formula("c >= 0", sig),)), "iexists")


def test_every_rule_is_exercised():
    covered = set(SEQUENT_RULES) | set(LOCAL_SCHEMATA) | {
        "skip", "[']", "<'>", "[a]dia", "ex", "allr", "existsl", "existsr", "alll", "iall",
        "con", "DI", "R", "QE", "iexists"}
    assert set(RULES) <= covered
