import pytest

from tsocc import litmus as lt
from tsocc.axioms import BudgetExceeded
from oracles import condition_holds, lb_outcomes, x86_tso_outcomes

# expected verdicts, fixed by the store-buffer and load-buffer oracles in oracles.py
BATTERY = {
    "sb": (lt.OBSERVABLE, lt.OBSERVABLE),
    "sb_rfi": (lt.OBSERVABLE, lt.OBSERVABLE),
    "mp": (lt.NOT_OBSERVABLE, lt.NOT_OBSERVABLE),
    "lb": (lt.NOT_OBSERVABLE, lt.NOT_OBSERVABLE),
    "iriw": (lt.NOT_OBSERVABLE, lt.NOT_OBSERVABLE),
    "fig3": (lt.OBSERVABLE, lt.NOT_OBSERVABLE),
}


def oracle_verdicts(t):
    ax = any(condition_holds(t, o) for o in x86_tso_outcomes(t))
    lb = any(condition_holds(t, o) for o in lb_outcomes(t))
    return tuple(lt.OBSERVABLE if x else lt.NOT_OBSERVABLE for x in (ax, lb))


class TestParse:
    def test_fig3_shape(self):
        t = lt.builtin("fig3")
        assert [len(th) for th in t.threads] == [5, 5]
        assert t.condition == (("r1", 0), ("r2", 1), ("r3", 0), ("r4", 0), ("r5", 1), ("r6", 0))
        assert t.addresses == ["a", "b", "x", "y"]

    def test_conjunction_spellings(self):
        base = "test t\ninit x=0\nthread P1 { r1 <- x; r2 <- x }\nobservable? r1=0 AND r2=0\n"
        for op in ("&", "/\\", "∧"):
            assert lt.parse(base.replace("AND", op)).condition == (("r1", 0), ("r2", 0))

    def test_comments_and_semicolon_lines(self):
        t = lt.parse("# c\ntest t; init x=0 # trailing\nthread P1 {\n  x <- 1\n  r1 <- x\n}\nobservable? r1=1")
        assert len(t.threads[0]) == 2

    @pytest.mark.parametrize("text,where", [
        ("test t\ninit x=0\nthread P1 { x <- ; }\n", (3, 18)),
        ("test t\ninit x=0\nthread P1 { r1 <- y }\n", (3, 19)),
        ("test t\ninit x=0\nthread P1 { r1 <- x }\nobservable? r2=0\n", (4, 13)),
        ("test t\ninit x=0\nthread P1 { r1 <- x; r1 <- x }\n", (3, 22)),
        ("test t\ninit x=0\nthread P1 { x <- 1 } %\n", (3, 22)),
        ("test t\ninit x=0\nexpect axiomatic=Maybe\n", (3, 8)),
    ])
    def test_errors_carry_position(self, text, where):
        with pytest.raises(lt.LitmusSyntaxError) as e:
            lt.parse(text)
        assert (e.value.line, e.value.col) == where

    def test_fence_is_unsupported(self):
        with pytest.raises(lt.UnsupportedFeature) as e:
            lt.parse("test t\ninit x=0\nthread P1 { x <- 1; mfence; r1 <- x }\n")
        assert (e.value.line, e.value.col) == (3, 21)

    @pytest.mark.parametrize("name", list(BATTERY))
    def test_format_roundtrip(self, name):
        t = lt.builtin(name)
        assert lt.parse(lt.format_test(t)) == t


@pytest.mark.parametrize("name", list(BATTERY))
def test_battery_matches_oracles(name):
    t = lt.builtin(name)
    assert oracle_verdicts(t) == BATTERY[name]
    c = lt.compare(t)
    assert (c.axiomatic.verdict, c.tsolb.verdict) == BATTERY[name]
    assert t.expectation == dict(zip(lt.ENGINES, BATTERY[name]))


@pytest.mark.parametrize("name", list(BATTERY))
def test_witnesses_validate(name):
    t = lt.builtin(name)
    for e in lt.ENGINES:
        assert lt.validate_witness(t, lt.evaluate(t, e))


def test_fig3_is_a_strictness_gap():
    assert lt.compare(lt.builtin("fig3")).classification == lt.STRICTNESS_GAP


def test_classification_table():
    yes, no = lt.Verdict("x", lt.OBSERVABLE), lt.Verdict("x", lt.NOT_OBSERVABLE)
    assert lt.Comparison("t", no, yes).classification == lt.SOUNDNESS_BUG
    assert lt.Comparison("t", yes, no).classification == lt.STRICTNESS_GAP
    assert lt.Comparison("t", yes, yes).classification == lt.CONSISTENT
    assert lt.Comparison("t", no, no).classification == lt.CONSISTENT


def test_tampered_witnesses_fail_validation():
    t = lt.builtin("sb")
    v = lt.evaluate(t, "tsolb")
    assert not lt.validate_witness(t, lt.Verdict("tsolb", lt.OBSERVABLE, tuple(reversed(v.witness))))
    ax = lt.evaluate(t, "axiomatic").witness
    ex = ax.execution
    from tsocc.axioms import Candidate, Execution
    swapped = Execution(ex.events, ex.po, ex.rf, ex.co.inverse())
    assert not lt.validate_witness(t, lt.Verdict("axiomatic", lt.OBSERVABLE, Candidate(swapped, ax.registers)))


def test_unknown_engine():
    with pytest.raises(ValueError):
        lt.evaluate(lt.builtin("sb"), "herd")


def test_budget():
    with pytest.raises(BudgetExceeded):
        lt.evaluate(lt.builtin("fig3"), "axiomatic", budget=10)


def test_random_generation_is_seeded():
    assert lt.generate_random(11) == lt.generate_random(11)
    assert lt.generate_random(11) != lt.generate_random(12)
    with pytest.raises(ValueError):
        lt.generate_random(0, max_threads=0)


@pytest.mark.parametrize("seed", range(60))
def test_random_tests_match_oracles(seed):
    t = lt.generate_random(seed, max_threads=3, max_instrs=3)
    c = lt.compare(t)
    assert (c.axiomatic.verdict, c.tsolb.verdict) == oracle_verdicts(t)
    assert c.classification != lt.SOUNDNESS_BUG
