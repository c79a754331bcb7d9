import pytest

from tsocc.mc import INVARIANT_VIOLATION, explore, replay
from tsocc.param import (ABSTRACT_RULES, DslError, StateView, abstractify, check_lemmas_concrete,
                         check_overapproximation, check_pairing, load_rules, parse_rules, project,
                         shipped_paths)
from tsocc.protocol import DATAE, TsoCC, WS


def shipped():
    r, l = shipped_paths()
    return load_rules(r, l)


class TestDsl:
    def test_parse_restriction_and_lemma(self):
        rs, ls = parse_rules("""
            # comment
            restrict Dir-Recv-GetS-Abs when dir[a].state = I by quiet -- only from idle
            lemma quiet: forall a: dir[a].state = I => InFlight(Ack, a) = 0
        """)
        assert rs[0].rule == "Dir-Recv-GetS-Abs" and rs[0].lemmas == ("quiet",)
        assert rs[0].rationale == "only from idle"
        assert ls[0].variables == ("a",)
        assert check_pairing(rs, ls) == []

    @pytest.mark.parametrize("text", [
        "restrict No-Such-Rule when True",
        "lemma x: forall a: __import__('os')",
        "lemma x: forall a: dir[a].secret = 1",
        "lemma x: forall a: open(a)",
        "lemma x: forall a: dir[b].state = I",
        "whatever",
        "lemma x: forall a: (dir[a].state = ",
    ])
    def test_rejects(self, text):
        with pytest.raises(DslError):
            parse_rules(text)

    def test_pairing_problems(self):
        rs, ls = parse_rules("restrict Dir-Recv-GetS-Abs when True\n"
                             "restrict Dir-Recv-GetX-Abs when True by ghost\n")
        probs = check_pairing(rs, ls)
        assert any("cites no lemma" in p for p in probs)
        assert any("unknown lemma 'ghost'" in p for p in probs)
        with pytest.raises(DslError):
            abstractify(2, 1, 2, rs, ls)

    def test_lemma_violation_binding(self):
        cc = TsoCC(2, 1, 2)
        m = cc.model()
        s = [t for r, b, t in m.successors(m.initial[0]) if r.name == "Read-I" and b == (1, 0)][0]
        _, ls = parse_rules("lemma noreq: forall c a: cache[c][a].state = I")
        assert ls[0].violation(cc, m.initial[0]) is None
        assert ls[0].violation(cc, s) == {"c": 1, "a": 0}

    def test_state_view(self):
        cc = TsoCC(2, 1, 2, with_other=True)
        l = list(cc.initial())
        i = cc.line(0, 0)
        l[i] = WS
        cc.push(l, 0, cc.code(DATAE, cc.DIR, 0, 1))
        v = StateView(cc, tuple(l))
        assert v.cache[0][0].state == "WS"
        msg = v.net[0][0][0]
        assert (msg.msgType, msg.src, msg.val) == ("DataE", "Dir", 1)
        assert v.net[0][0][1].msgType is None  # padded slot
        assert v.in_flight("DataE", 0) == 1 and v.in_flight(("DataS", "DataX"), 0) == 0
        assert v.dir[0].owner is None and not v.is_owner(0, 0)


def test_shipped_files_parse_and_pair():
    rs, ls = shipped()
    assert rs and ls
    assert check_pairing(rs, ls) == []
    assert {r.rule for r in rs} <= set(ABSTRACT_RULES)


def test_project_drops_last_cache():
    big, small = TsoCC(3, 1, 2), TsoCC(2, 1, 2, with_other=True)
    m = big.model(symmetric=False)
    s = [t for r, b, t in m.successors(m.initial[0]) if r.name == "Read-I" and b == (2, 0)][0]
    p = project(big, small, s)
    assert p[:small.shadow.local_off] == small.initial()[:small.shadow.local_off]
    s = [t for r, b, t in m.successors(s) if r.name == "Dir-Recv-GetS"][0]
    p = project(big, small, s)
    d = small.dirent(0)
    assert p[d + 2] == small.OTHER


SMALL = [(2, 1, 2), pytest.param((1, 2, 2), marks=pytest.mark.slow)]


@pytest.mark.parametrize("cfg", SMALL)
def test_unrestricted_abstract_node_overapproximates(cfg):
    rep = check_overapproximation(*cfg)
    assert rep.passed, rep.failures[:1]
    assert rep.matched > 0 and rep.stutters > 0


@pytest.mark.parametrize("cfg", SMALL)
def test_shipped_restrictions_overapproximate(cfg):
    rs, _ = shipped()
    rep = check_overapproximation(*cfg, rs)
    assert rep.passed, rep.failures[:1]


def test_unrestricted_abstract_model_fails():
    am = abstractify(2, 1, 2)
    rep = explore(am.model, symmetry=True)
    assert not rep.passed
    assert replay(am.model, rep.counterexample)


def test_shipped_set_small_configuration():
    rs, ls = shipped()
    am = abstractify(2, 1, 2, rs, ls)
    rep = explore(am.model, symmetry=True)
    assert rep.passed, rep.violated


def test_lemmas_hold_concretely_small():
    _, ls = shipped()
    rep = check_lemmas_concrete(3, 1, 2, ls)
    assert rep.passed, rep.violated


def test_false_lemma_is_refuted_concretely():
    _, ls = parse_rules("lemma never_m: forall c a: cache[c][a].state = M => False")
    rep = check_lemmas_concrete(1, 1, 2, ls)
    assert rep.verdict == INVARIANT_VIOLATION and rep.violated == "lemma:never_m"
    assert replay(rep.model_ref, rep.counterexample)
