import pytest
from hypothesis import given, settings, strategies as st

from tsocc.axioms import UsageError
from tsocc.tsolb import (DisabledLabel, LbTrace, Propagate, Read, Write, apply_label,
                         check_trace_tso, dump_trace, enabled_labels, extract_execution, initial_state,
                         iter_traces, load_trace, logical_time)
from oracles import count_lb_traces


def labels_strategy(procs, addrs, values, max_len=12):
    step = st.one_of(
        st.tuples(st.just("W"), st.integers(0, procs - 1), st.integers(0, addrs - 1), st.integers(0, values - 1)),
        st.tuples(st.just("P"), st.integers(0, procs - 1)),
    )
    return st.lists(step, max_size=max_len)


def run(procs, addrs, raw):
    s = initial_state(procs, addrs)
    for r in raw:
        s = apply_label(s, Write(*r[1:]) if r[0] == "W" else Propagate(r[1]))
    return s


class TestSemantics:
    def test_initial_state(self):
        s = initial_state(2, 3)
        assert s.local == ((0, 0, 0), (0, 0, 0)) and s.glob == (0, 0, 0)

    def test_empty_domain(self):
        with pytest.raises(UsageError):
            initial_state(0, 1)

    def test_read_requires_local_value(self):
        s = initial_state(2, 1)
        s = apply_label(s, Write(0, 0, 1))
        with pytest.raises(DisabledLabel):
            apply_label(s, Read(1, 0, 1))
        s = apply_label(s, Propagate(1))
        assert apply_label(s, Read(1, 0, 1)) == s

    def test_propagate_copies_whole_buffer(self):
        s = initial_state(2, 2)
        s = apply_label(apply_label(s, Write(0, 0, 1)), Write(0, 1, 1))
        assert s.local[1] == (0, 0)
        assert apply_label(s, Propagate(1)).local[1] == (1, 1)

    def test_enabled_labels(self):
        s = initial_state(2, 2)
        ls = enabled_labels(s, 2)
        assert len(ls) == 2 * 2 + 2 * 2 * 2 + 2
        assert Read(0, 0, 0) in ls and Read(0, 0, 1) not in ls

    def test_trace_text_roundtrip(self):
        tr = (Write(0, 0, 1), Propagate(1), Read(1, 0, 1))
        assert tuple(load_trace(dump_trace(tr))) == tr

    @pytest.mark.parametrize("depth", [0, 1, 2, 3])
    def test_trace_count_matches_closed_form(self, depth):
        assert sum(1 for _ in iter_traces(2, 2, 2, depth)) == count_lb_traces(2, 2, 2, depth)


class TestLogicalTime:
    def test_read_anchored_at_propagate(self):
        tr = LbTrace.from_labels([Write(0, 0, 1), Write(1, 1, 1), Propagate(1), Read(1, 0, 1)], procs=2, addrs=2)
        assert tr.anchors[3] == 2
        assert tr.provenance[3] == "e0"
        order = logical_time(tr).order
        assert order.index("e3") > order.index("e1")

    def test_initial_read_precedes_writes(self):
        tr = LbTrace.from_labels([Write(0, 0, 1), Read(1, 0, 0)], procs=2, addrs=1)
        assert tr.anchors[1] == -1
        assert logical_time(tr).order == ("e1", "e0")
        assert check_trace_tso(tr).passed

    def test_store_buffering_passes(self):
        labels = [Write(0, 0, 1), Write(1, 1, 1), Read(0, 1, 0), Read(1, 0, 0)]
        tr = LbTrace.from_labels(labels, procs=2, addrs=2)
        rep = check_trace_tso(tr)
        assert rep.passed, rep.describe()

    def test_ppo_counterexample(self):
        # the second read is anchored at the initial state, the first after the write
        tr = LbTrace.from_labels([Write(0, 0, 0), Read(0, 0, 0), Read(0, 1, 0)], procs=2, addrs=2)
        rep = check_trace_tso(tr)
        assert rep.failed_categories() == ["ppo"]
        assert rep.violations["ppo"] == [("e1", "e2")]
        assert not rep.axioms_failed

    def test_extract_execution_rf(self):
        tr = LbTrace.from_labels([Write(0, 0, 1), Propagate(1), Read(1, 0, 1)], procs=2, addrs=1)
        ex = extract_execution(tr)
        assert set(ex.rf) == {("e0", "e2")}
        ex.validate()

    def test_wrong_provenance_is_caught(self):
        tr = LbTrace.from_labels([Write(0, 0, 1), Write(0, 0, 1), Propagate(1), Read(1, 0, 1)], procs=2, addrs=1)
        bad = tr.with_provenance(3, "e0")
        assert "rf" in check_trace_tso(bad).violations or "fr" in check_trace_tso(bad).violations


@settings(max_examples=2000, deadline=None)
@given(labels_strategy(3, 2, 2), st.integers(0, 2))
def test_propagate_idempotent(raw, p):
    s = apply_label(run(3, 2, raw), Propagate(p))
    assert apply_label(s, Propagate(p)) == s


@settings(max_examples=2000, deadline=None)
@given(labels_strategy(3, 2, 2), st.integers(0, 2), st.integers(0, 1), st.integers(0, 1))
def test_write_agreement(raw, p, a, v):
    s = apply_label(run(3, 2, raw), Write(p, a, v))
    assert s.local[p][a] == s.glob[a] == v


@settings(max_examples=2000, deadline=None)
@given(labels_strategy(1, 3, 3))
def test_single_processor_local_is_global(raw):
    s = run(1, 3, raw)
    assert s.local[0] == s.glob
