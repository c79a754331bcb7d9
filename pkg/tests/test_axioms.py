import pytest

from tsocc import litmus as lt
from tsocc.axioms import (INIT, READ, WRITE, BudgetExceeded, Event, Execution, ExecutionError, Relation,
                          UsageError, axiomatic_outcomes, candidate_count, check_axioms, derive_relations,
                          enumerate_candidates, relation_closure, relation_compose, relation_is_acyclic)
from oracles import condition_holds, sc_outcomes, x86_tso_outcomes

U = ["a", "b", "c", "d"]


def rel(*pairs):
    return Relation(pairs, U)


class TestRelation:
    def test_set_ops(self):
        r, s = rel(("a", "b"), ("b", "c")), rel(("b", "c"), ("c", "d"))
        assert set(r | s) == {("a", "b"), ("b", "c"), ("c", "d")}
        assert set(r & s) == {("b", "c")}
        assert set(r - s) == {("a", "b")}
        assert set(r.inverse()) == {("b", "a"), ("c", "b")}

    def test_compose(self):
        r = rel(("a", "b"), ("b", "c"))
        assert set(relation_compose(r, r)) == {("a", "c")}

    def test_closure(self):
        r = rel(("a", "b"), ("b", "c"), ("c", "d"))
        plus = relation_closure(r)
        assert ("a", "d") in plus and ("a", "a") not in plus
        star = relation_closure(r, reflexive=True)
        assert all((x, x) in star for x in U)

    def test_acyclic_reports_cycle(self):
        ok, cyc = relation_is_acyclic(rel(("a", "b"), ("b", "c"), ("c", "a")))
        assert not ok
        assert set(cyc) == {"a", "b", "c"}
        ok, cyc = relation_is_acyclic(rel(("a", "b"), ("b", "c")))
        assert ok and cyc is None

    def test_self_loop_is_cycle(self):
        assert not relation_is_acyclic(rel(("a", "a")))[0]

    def test_universe_mismatch(self):
        with pytest.raises(UsageError):
            rel(("a", "b")) | Relation([("a", "b")], ["a", "b"])

    def test_pairs_outside_universe_rejected(self):
        with pytest.raises(UsageError):
            Relation([("a", "z")], U)


def _sb(r0, r1):
    """SB with chosen read values; co is forced (init first)."""
    ev = [Event("ix", INIT, WRITE, "x", 0), Event("iy", INIT, WRITE, "y", 0),
          Event("w0", 0, WRITE, "x", 1, 0), Event("r0", 0, READ, "y", r0, 1),
          Event("w1", 1, WRITE, "y", 1, 0), Event("r1", 1, READ, "x", r1, 1)]
    u = [e.id for e in ev]
    po = Relation([("w0", "r0"), ("w1", "r1")], u)
    rf = Relation([("iy" if r0 == 0 else "w1", "r0"), ("ix" if r1 == 0 else "w0", "r1")], u)
    co = Relation([("ix", "w0"), ("iy", "w1")], u)
    return Execution(tuple(ev), po, rf, co)


class TestTsoAxioms:
    def test_sb_relaxed_outcome_allowed(self):
        assert check_axioms(_sb(0, 0)).overall

    def test_derived_relations_sb(self):
        d = derive_relations(_sb(0, 0))
        assert len(d.ppo) == 0  # both po edges are W->R
        assert set(d.fr) == {("r0", "w1"), ("r1", "w0")}

    def test_mp_forbidden_outcome(self):
        t = lt.builtin("mp")
        outs = axiomatic_outcomes(t)
        assert not any(condition_holds(t, o) for o in outs)

    def test_observation_fails_on_mp_candidate(self):
        ev = [Event("ix", INIT, WRITE, "x", 0), Event("iy", INIT, WRITE, "y", 0),
              Event("wx", 0, WRITE, "x", 1, 0), Event("wy", 0, WRITE, "y", 1, 1),
              Event("ry", 1, READ, "y", 1, 0), Event("rx", 1, READ, "x", 0, 1)]
        u = [e.id for e in ev]
        ex = Execution(tuple(ev), Relation([("wx", "wy"), ("ry", "rx")], u),
                       Relation([("wy", "ry"), ("ix", "rx")], u), Relation([("ix", "wx"), ("iy", "wy")], u))
        v = check_axioms(ex)
        assert not v.overall
        assert "observation" in v.failed()

    def test_rf_value_mismatch_is_invalid(self):
        ex = _sb(0, 0)
        bad = Execution(ex.events, ex.po, Relation([("w1", "r0"), ("ix", "r1")], ex.universe), ex.co)
        with pytest.raises(ExecutionError):
            bad.validate()

    def test_candidate_budget(self):
        t = lt.builtin("fig3")
        with pytest.raises(BudgetExceeded):
            enumerate_candidates(t, budget=candidate_count(t) - 1)


@pytest.mark.parametrize("name", ["sb", "sb_rfi", "mp", "lb", "iriw", "fig3"])
def test_axiomatic_outcomes_equal_store_buffer_oracle(name):
    t = lt.builtin(name)
    assert frozenset(axiomatic_outcomes(t)) == x86_tso_outcomes(t)


@pytest.mark.parametrize("seed", range(40))
def test_random_programs_match_store_buffer_oracle(seed):
    t = lt.generate_random(seed, max_threads=3, max_instrs=3)
    outs = frozenset(axiomatic_outcomes(t))
    assert outs == x86_tso_outcomes(t)
    assert sc_outcomes(t) <= outs
