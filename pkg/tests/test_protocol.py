import random

import pytest

from tsocc.mc import INVARIANT_VIOLATION, PASS, PROTOCOL_ERROR, explore, replay
from tsocc.protocol import (DATAS, DATAX, DE, DWE, E, ERR_MATCH, GETS, M, NOBODY, S, WS, WX, ConfigError, TsoCC,
                            build_model)
from tsocc.refinement import read_witness, tso_store
from tsocc.tsolb import initial_state

READ_HITS = {"Read-S-hit", "Read-E", "Read-M"}


def observed(cc, rule, b, s):
    """The TSO-LB event a protocol step performs, from the rule name alone."""
    if rule in READ_HITS:
        c, a = b
        return "R", c, a, s[cc.line(c, a) + 1]
    if rule in ("Write-E", "Write-M"):
        return ("W",) + tuple(b)
    if rule in ("Cache-Recv-DataS", "Cache-Recv-DataE"):
        c, a, _, v = b
        return "R", c, a, v
    if rule == "Cache-Recv-DataX":
        c, a, _, _ = b
        return "W", c, a, s[cc.line(c, a) + 2]
    return None


def random_walk(m, cc, steps, rng):
    """Follow random transitions, stepping an independent shadow alongside.

    Returns (match_fired, reads_ok, diverged): whether the protocol flagged a
    Match failure, whether every observed read had a TSO-LB step, and whether
    the embedded shadow ever differed from the independent one.
    """
    s = m.initial[0]
    sh = initial_state(cc.P, cc.A, cc.V)
    ok, diverged = True, False
    for _ in range(steps):
        succ = list(m.successors(s))
        if not succ:
            break
        r, b, t = rng.choice(succ)
        ev = observed(cc, r.name, b, s)
        if ev is not None:
            kind, c, a, v = ev
            if kind == "W":
                sh = tso_store(sh, c, a, v)
            else:
                w = read_witness(sh, c, a, v)
                if w is None:
                    ok = False
                    break
                sh = w.last
        if t[cc.ERR] == ERR_MATCH:
            return True, ok, diverged
        diverged = diverged or cc.shadow_state(t) != sh
        s = t
    return False, ok, diverged


class TestLayout:
    def test_initial_state(self):
        cc = TsoCC(2, 2, 2)
        s = cc.initial()
        assert all(s[cc.line(c, a)] == 0 for c in range(2) for a in range(2))
        assert s[cc.dirent(0) + 2] == NOBODY
        assert cc.decode(cc.encode(s)) == s

    def test_message_codes_roundtrip(self):
        cc = TsoCC(3, 2, 3)
        for mt in (GETS, DATAS, DATAX):
            for x in range(cc.X):
                for a in range(2):
                    for v in range(3):
                        assert cc.decode_msg[cc.code(mt, x, a, v)] == (mt, x, a, v)

    def test_wide_encoding(self):
        cc = TsoCC(4, 3, 3)
        assert cc.wide
        s = tuple(range(cc.size))
        assert cc.decode(cc.encode(s)) == s

    def test_push_keeps_buffer_sorted(self):
        cc = TsoCC(2, 1, 2, net_max=3)
        l = list(cc.initial())
        for x in (4, 9, 6):
            cc.push(l, cc.DIR, x)
        b = cc.buf(cc.DIR)
        assert l[b:b + 3] == [9, 6, 4]
        assert not cc.has_space(l, cc.DIR)
        cc.pop(l, cc.DIR, 6)
        assert l[b:b + 3] == [9, 4, 0]

    def test_config_errors(self):
        with pytest.raises(ConfigError):
            TsoCC(2, 2, 1)
        with pytest.raises(ConfigError):
            TsoCC(2, 2, 2, mutation="no-such-bug")

    def test_permute_swaps_caches(self):
        cc = TsoCC(2, 1, 2)
        m = cc.model()
        s = m.initial[0]
        (r, b, t), = [x for x in m.successors(s) if x[0].name == "Read-I" and x[1] == (0, 0)]
        u = cc.permute(t, (1, 0))
        assert u[cc.line(1, 0)] == WS and u[cc.line(0, 0)] == 0
        assert cc.permute(u, (1, 0)) == t


class TestRules:
    def _step(self, m, s, rule, b):
        for r, b2, t in m.successors(s):
            if r.name == rule and tuple(b2) == tuple(b):
                return t
        raise AssertionError(f"{rule} {b} not enabled")

    def test_exclusive_grant_then_silent_write(self):
        cc = TsoCC(2, 1, 2)
        m = cc.model()
        s = self._step(m, m.initial[0], "Read-I", (0, 0))
        s = self._step(m, s, "Dir-Recv-GetS", (0, 0))
        d = cc.dirent(0)
        assert s[d] == DWE and s[d + 2] == 0 and cc.is_owner(s, 0, 0)
        s = self._step(m, s, "Cache-Recv-DataE", (0, 0, cc.DIR, 0))
        s = self._step(m, s, "Dir-Recv-Ack", (0, 0))
        assert s[d] == DE
        s = self._step(m, s, "Write-E", (0, 0, 1))
        assert s[cc.line(0, 0)] == M
        assert cc.shadow_state(s).glob == (1,)

    def test_forwarded_read_demotes_owner(self):
        cc = TsoCC(2, 1, 2)
        m = cc.model()
        s = m.initial[0]
        for rule, b in [("Read-I", (0, 0)), ("Dir-Recv-GetS", (0, 0)), ("Cache-Recv-DataE", (0, 0, cc.DIR, 0)),
                        ("Dir-Recv-Ack", (0, 0)), ("Write-E", (0, 0, 1)), ("Read-I", (1, 0)),
                        ("Dir-Recv-GetS", (0, 1)), ("Cache-Recv-FwdS", (0, 0, 1)), ("Dir-Recv-Data", (0, 0, 1)),
                        ("Cache-Recv-DataS", (1, 0, cc.DIR, 1))]:
            s = self._step(m, s, rule, b)
        assert s[cc.line(0, 0)] == S and s[cc.line(1, 0)] == S and s[cc.line(1, 0) + 1] == 1
        assert cc.match_ok(s)

    def test_directory_stalls_in_transient_states(self):
        cc = TsoCC(2, 1, 2)
        m = cc.model()
        s = self._step(m, m.initial[0], "Read-I", (0, 0))
        s = self._step(m, s, "Read-I", (1, 0))
        s = self._step(m, s, "Dir-Recv-GetS", (0, 0))
        assert s[cc.dirent(0)] == DWE
        assert not [b for r, b, _ in m.successors(s) if r.name == "Dir-Recv-GetS"]

    def test_write_miss_records_pending_value(self):
        cc = TsoCC(1, 1, 2)
        m = cc.model()
        s = self._step(m, m.initial[0], "Write-I", (0, 0, 1))
        i = cc.line(0, 0)
        assert (s[i], s[i + 2]) == (WX, 1)
        s = self._step(m, s, "Dir-Recv-GetX", (0, 0))
        s = self._step(m, s, "Cache-Recv-DataX", (0, 0, cc.DIR, 0))
        assert (s[i], s[i + 1], s[i + 2]) == (M, 1, 0)


@pytest.mark.parametrize("cfg", [(1, 1, 2), (2, 1, 2), (1, 2, 2), (3, 1, 2)])
def test_small_configurations_pass(cfg):
    rep = explore(build_model(*cfg))
    assert rep.verdict == PASS, rep.violated


# state counts frozen from exhaustive runs of the checker
@pytest.mark.parametrize("cfg,sym,states", [((2, 1, 2), False, 410), ((2, 1, 2), True, 211),
                                             ((3, 1, 2), False, 9054), ((3, 1, 2), True, 1628)])
def test_state_counts(cfg, sym, states):
    assert explore(build_model(*cfg), symmetry=sym).states == states


@pytest.mark.parametrize("seed", range(30))
def test_random_walks_track_independent_shadow(seed):
    m = build_model(2, 2, 2)
    assert random_walk(m, m.protocol, 200, random.Random(seed)) == (False, True, False)


def test_random_walks_catch_missing_store():
    m = build_model(2, 2, 2, mutation="no-store-write-e")
    fired = 0
    for seed in range(100):
        match_fired, ok, diverged = random_walk(m, m.protocol, 300, random.Random(seed))
        # data values stay correct; only the embedded shadow loses the write
        assert ok
        if match_fired:
            fired += 1
            assert diverged
    assert fired > 0


@pytest.mark.parametrize("mutation,verdict,violated", [
    ("no-stall", PROTOCOL_ERROR, "ProtocolError"),
    ("no-store-write-e", INVARIANT_VIOLATION, "Match"),
])
def test_mutations_small(mutation, verdict, violated):
    m = build_model(2, 1, 2, mutation=mutation)
    rep = explore(m)
    assert (rep.verdict, rep.violated) == (verdict, violated)
    assert replay(m, rep.counterexample)


def test_match_only_mode_isolates_refinement():
    m = build_model(2, 1, 2, mutation="no-stall", match_only=True)
    assert [i.name for i in m.invariants] == ["Match"]
    assert "Recv-Unhandled" not in m.rule_index
    rep = explore(m, check_deadlock=False)
    assert rep.violated == "Match"
    assert replay(m, rep.counterexample)


def test_dump_mentions_every_component():
    cc = TsoCC(2, 1, 2)
    text = cc.dump(cc.initial())
    for part in ("c0.0:", "c1.0:", "dir.0:", "net.dir:", "shadow"):
        assert part in text
    assert "error" not in text
