"""Bundled theories, proof scripts and their expected verdicts.

``manifest.json`` lists every entry; :func:`check_entry` replays one and
:func:`falsify_entry` runs the simulator-based falsifier on it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from pathlib import Path

from qdtl.calculus import ProofResult, check_proof
from qdtl.parser import Theory, parse_proof_script, parse_theory
from qdtl.poly import LinearConstraint, fm_solve, normalize
from qdtl.semantics import Counterexample, SimConfig, StateSampler, falsify, make_state
from qdtl.syntax import App, Eq, Num, conjuncts


def root() -> Path:
    return Path(str(resources.files(__name__)))


@dataclass(frozen=True)
class Entry:
    name: str
    theory: str
    script: str
    conjecture: str
    expected: str  # proved | open
    budget_s: float = 5.0
    falsify: dict | None = None
    note: str = ""

    @property
    def theory_path(self) -> Path:
        return root() / self.theory

    @property
    def script_path(self) -> Path:
        return root() / self.script


@lru_cache(maxsize=None)
def manifest() -> tuple[Entry, ...]:
    data = json.loads((root() / "manifest.json").read_text())
    return tuple(Entry(**e) for e in data["entries"])


def entry(name: str) -> Entry:
    for e in manifest():
        if e.name == name:
            return e
    raise KeyError(f"no corpus entry {name!r}")


@lru_cache(maxsize=None)
def load_theory(path: str) -> Theory:
    p = Path(path)
    return parse_theory(p.read_text(), file=p.name)


@lru_cache(maxsize=None)
def load_scripts(path: str) -> dict:
    p = Path(path)
    return {s.conjecture: s for s in parse_proof_script(p.read_text(), file=p.name)}


def check_entry(e: Entry | str, **kw) -> ProofResult:
    e = entry(e) if isinstance(e, str) else e
    th = load_theory(str(e.theory_path))
    script = load_scripts(str(e.script_path))[e.conjecture]
    return check_proof(th.conjectures[e.conjecture], script, th.signature, th.definitions, **kw)


def sampler_from_config(th: Theory, cfg: dict) -> StateSampler:
    ranges = {k: tuple(v) if isinstance(v, list) else v for k, v in cfg.get("ranges", {}).items()}
    return StateSampler(th.signature, dict(cfg["active"]), ranges,
                        reserve=cfg.get("reserve", 1),
                        default_range=tuple(cfg.get("default_range", (-5, 5))))


def sim_config(cfg: dict, **overrides) -> SimConfig:
    keys = ("h", "loop_bound", "durations", "seed")
    kw = {k: cfg[k] for k in keys if k in cfg}
    if "durations" in kw:
        kw["durations"] = tuple(kw["durations"])
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return SimConfig(**kw)


def falsify_entry(e: Entry | str, samples: int | None = None, **overrides) -> Counterexample | None:
    e = entry(e) if isinstance(e, str) else e
    if e.falsify is None:
        raise ValueError(f"{e.name} has no falsification configuration")
    th = load_theory(str(e.theory_path))
    sampler = sampler_from_config(th, e.falsify)
    cfg = sim_config(e.falsify, **overrides)
    n = samples if samples is not None else e.falsify.get("samples", 200)
    return falsify(sampler, th.conjectures[e.conjecture], cfg, n)


# --------------------------------------------------------------------------
# numeric roundabout configurations


@dataclass
class Roundabout:
    """Aircraft evenly spaced on one circle, velocities solved from Tan."""

    names: tuple
    values: dict = field(default_factory=dict)
    radius: float = 0.0

    def state(self):
        return make_state({"A": self.names}, self.values)


def roundabout(n: int, p: float = 5.0, omega: float = 1.0, margin: float = 1.25) -> Roundabout:
    """``n`` aircraft on a circle; velocities come from solving ``Tan(k, 0)``.

    Aircraft 0 flies tangentially with speed ``omega * r``; every other
    aircraft's velocity is the unique solution of the tangential condition
    relative to aircraft 0.
    """
    th = load_theory(str(root() / "atc" / "atc_unbounded.qdtl"))
    r = margin * p / (2 * math.sin(math.pi / n)) if n > 1 else p
    names = tuple(f"A{k}" for k in range(n))
    pos = {names[k]: (r * math.cos(2 * math.pi * k / n), r * math.sin(2 * math.pi * k / n))
           for k in range(n)}
    d0 = (-omega * pos[names[0]][1], omega * pos[names[0]][0])
    vel = {names[0]: d0}
    for k in range(1, n):
        me, ref = App(names[k]), App(names[0])
        tan = th.definitions["Tan"].expand((me, ref))
        known = {}
        for o, (a, b) in pos.items():
            known[App("x1", (App(o),))] = a
            known[App("x2", (App(o),))] = b
        known[App("d1", (ref,))], known[App("d2", (ref,))] = d0
        known[App("omega")] = omega
        cs = []
        for eq in conjuncts(tan):
            assert isinstance(eq, Eq)
            poly = normalize(eq.left) - normalize(eq.right)
            for atom, value in known.items():
                poly = poly.substitute(atom, normalize(Num(Fraction(value))))
            cs.append(LinearConstraint(poly, "="))
        model = fm_solve(cs)
        if model is None:
            raise ValueError("tangential condition has no solution")
        vel[names[k]] = (float(model[App("d1", (me,))]), float(model[App("d2", (me,))]))
    values = {"x1": {(o,): pos[o][0] for o in names}, "x2": {(o,): pos[o][1] for o in names},
              "d1": {(o,): vel[o][0] for o in names}, "d2": {(o,): vel[o][1] for o in names},
              "omega": omega, "p": p, "T": 1, "t": 0, "n": names[0]}
    return Roundabout(names, values, r)
