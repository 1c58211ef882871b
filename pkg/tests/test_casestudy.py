"""The air traffic and car case studies shipped with the package."""
import math
import time

import pytest

from qdtl import corpus
from qdtl.semantics import SimConfig, eval_state_formula, make_state

ORBIT = SimConfig(h=0.01, durations=(0.0, 1.0, 2 * math.pi))


@pytest.fixture(scope="module")
def flight():
    return corpus.load_theory(str(corpus.entry("atc-flight").theory_path))


@pytest.mark.parametrize("entry", corpus.manifest(), ids=lambda e: e.name)
def test_entry_verdict_within_budget(entry):
    t0 = time.perf_counter()
    res = corpus.check_entry(entry)
    assert res.status == entry.expected
    assert time.perf_counter() - t0 < entry.budget_s


def test_flight_proof_is_short_and_closes_by_identity():
    res = corpus.check_entry("atc-flight")
    assert res.stats["steps"] <= 50
    assert res.stats["oracles"] == {"identity": 2}
    closed = [n.closed for n in res.root.nodes() if n.rule == "R"]
    assert closed == ["R:identity", "R:identity"]


def test_dropping_the_final_test_breaks_the_script():
    res = corpus.check_entry("atc-manoeuvre-untested")
    assert res.status == "open"
    assert res.errors[0]["message"].startswith("[;]box")


def test_dropping_the_domain_keeps_the_property_provable():
    # the invariant argument never uses the duration bound
    res = corpus.check_entry("atc-manoeuvre-unbounded")
    assert res.proved


@pytest.mark.parametrize("n", [2, 3, 5])
def test_roundabout_satisfies_the_hypotheses(flight, n):
    s = corpus.roundabout(n).state()
    for name in ("Safe", "Tangential"):
        f = flight.definitions[name].expand(())
        assert eval_state_formula(s, f, ORBIT), name


@pytest.mark.parametrize("n", [2, 3, 5])
def test_roundabout_stays_separated_for_a_full_turn(flight, n):
    s = corpus.roundabout(n).state()
    assert eval_state_formula(s, flight.conjectures["flight"], ORBIT)


def test_roundabout_radius_grows_with_the_number_of_aircraft():
    radii = [corpus.roundabout(n).radius for n in (2, 3, 5, 8)]
    assert radii == sorted(radii)
    assert radii[1] == pytest.approx(1.25 * 5 / (2 * math.sin(math.pi / 3)))


def test_a_stationary_aircraft_is_hit(flight):
    rb = corpus.roundabout(2)
    values = dict(rb.values)
    values["d1"] = {**values["d1"], ("A1",): 0.0}
    values["d2"] = {**values["d2"], ("A1",): 0.0}
    s = make_state({"A": rb.names}, values)
    assert not eval_state_formula(s, flight.definitions["Tangential"].expand(()), ORBIT)
    assert not eval_state_formula(s, flight.conjectures["flight_untangled"], ORBIT)


def test_untangled_flight_has_a_collision():
    cx = corpus.falsify_entry("atc-flight-untangled")
    assert cx is not None
    assert cx.state.get("p", ()) == 1


def test_arrival_creates_an_aircraft(flight):
    s = corpus.roundabout(3).state()
    assert eval_state_formula(s, flight.conjectures["arrival"], ORBIT)


def test_braking_needs_the_domain_constraint():
    cx = corpus.falsify_entry("cars-braking", samples=100)
    assert cx is not None and cx.sample < 100
