"""Empirical local soundness: premises true at a state imply the conclusion there."""
import random
from dataclasses import dataclass, field, replace

from oracles import (
    I, random_atom, random_program, random_state_formula, random_toy_state, toy_signature,
)
from qdtl.calculus import RULES, Context, RuleError, apply_rule
from qdtl.parser import Position
from qdtl.semantics import SimConfig, eval_state_formula
from qdtl.syntax import (
    Always, And, App, Assign, Box, Choice, Dia, Eventually, Implies, Loop, Not, Or, Seq, Sequent,
    SubstitutionError, Test,
)

CFG = SimConfig(h=0.5, loop_bound=3, durations=(0.0, 0.5, 1.0))
# Unfolding a diamond loop adds one iteration to the premise, so its
# conclusion is read with one more iteration and loop-free postconditions.
UNFOLDING = {"<*n>dia", "<*>dia"}
CFG_UNFOLDED = replace(CFG, loop_bound=CFG.loop_bound + 1)


def _post(rng, temporal, loops=True):
    body = random_state_formula(rng, 1, ode=False, loops=loops)
    if temporal == "box":
        return Always(body)
    if temporal == "dia":
        return Eventually(body)
    return body


def _prog(rng, kind):
    r = lambda: random_program(rng, 1, ode=False)  # noqa: E731
    if kind == "seq":
        return Seq(r(), r())
    if kind == "choice":
        return Choice(r(), r())
    if kind == "test":
        return Test(random_atom(rng))
    if kind == "assign":
        return random_program(rng, 0, ode=False) if rng.random() < 0.3 else rng.choice(
            [Assign(None, ((App("c"), random_atom(rng).left),)),
             Assign(I, ((App("x", (I,)), random_atom(rng, I).left),))])
    if kind == "qchoice":
        return Assign(I, ((App("c"), random_atom(rng, I).left),))
    if kind == "loop":
        return Loop(random_program(rng, 1, ode=False, loops=False))
    raise ValueError(kind)


# rule -> (modality, program kind, post kind)
LOCAL = {
    "[;]": (Box, "seq", None), "<;>": (Dia, "seq", None),
    "[++]": (Box, "choice", None), "<++>": (Dia, "choice", None),
    "[?]": (Box, "test", None), "<?>": (Dia, "test", None),
    "[:=]": (Box, "assign", None), "<:=>": (Dia, "assign", None),
    "[:*]": (Box, "qchoice", None), "<:*>": (Dia, "qchoice", None),
    "[;]box": (Box, "seq", "box"), "<;>dia": (Dia, "seq", "dia"),
    "[++]box": (Box, "choice", "box"), "<++>dia": (Dia, "choice", "dia"),
    "[?]box": (Box, "test", "box"), "<?>dia": (Dia, "test", "dia"),
    "[:=]box": (Box, "assign", "box"), "<:=>dia": (Dia, "assign", "dia"),
    "[*n]box": (Box, "loop", "box"), "<*n>dia": (Dia, "loop", "dia"),
    "[*]box": (Box, "loop", "box"), "<*>dia": (Dia, "loop", "dia"),
}

PROPOSITIONAL = ("andr", "andl", "orr", "orl", "impr", "impl", "notr", "notl")


@dataclass
class Report:
    rule: str
    instances: int = 0
    checks: int = 0
    violations: list = field(default_factory=list)
    reverse_violations: int = 0


def _holds(s, f, cfg=CFG):
    return eval_state_formula(s, f, cfg)


def check_local(rule, n_instances=50, n_states=50, seed=0, attempts=2000) -> Report:
    rep = Report(rule)
    mod, kind, temporal = LOCAL[rule]
    rng = random.Random(f"{rule}:{seed}")
    spec = RULES[rule]
    for _ in range(attempts):
        if rep.instances >= n_instances:
            break
        concl = mod(_prog(rng, kind), _post(rng, temporal, loops=rule not in UNFOLDING))
        ctx = Context(toy_signature())
        try:
            prem = spec.fn(ctx, concl, {})
        except (RuleError, SubstitutionError):
            continue
        rep.instances += 1
        for _ in range(n_states):
            s = random_toy_state(rng)
            p = _holds(s, prem)
            c = _holds(s, concl, CFG_UNFOLDED if rule in UNFOLDING else CFG)
            rep.checks += 1
            if p and not c:
                rep.violations.append((concl, s))
            if spec.kind == "equiv" and c and not p:
                rep.reverse_violations += 1
    return rep


def _sequent_truth(s, seq):
    return _holds(s, seq.as_formula())


def check_sequent_rule(rule, n_instances=50, n_states=50, seed=0, attempts=2000) -> Report:
    rep = Report(rule)
    rng = random.Random(f"{rule}:{seed}")
    side = "L" if rule.endswith("l") else "R"
    shape = {"and": And, "or": Or, "imp": Implies, "not": Not}[rule[:-1]]
    for _ in range(attempts):
        if rep.instances >= n_instances:
            break
        sub = lambda: random_state_formula(rng, 1, ode=False)  # noqa: E731
        principal = Not(sub()) if shape is Not else shape(sub(), sub())
        ante = [sub() for _ in range(rng.randint(0, 1))]
        succ = [sub() for _ in range(rng.randint(0, 1))]
        if side == "L":
            ante.insert(0, principal)
        else:
            succ.insert(0, principal)
        goal = Sequent(tuple(ante), tuple(succ))
        ctx = Context(toy_signature())
        try:
            out = apply_rule(ctx, goal, rule, Position(side, 0))
        except RuleError:
            continue
        rep.instances += 1
        for _ in range(n_states):
            s = random_toy_state(rng)
            rep.checks += 1
            if all(_sequent_truth(s, p) for p in out.premises) and not _sequent_truth(s, goal):
                rep.violations.append((goal, s))
    return rep


def all_reports(n_instances=50, n_states=50):
    out = [check_local(r, n_instances, n_states) for r in LOCAL]
    out += [check_sequent_rule(r, n_instances, n_states) for r in PROPOSITIONAL]
    return out
