import pytest

from tsocc.sweep import HAVE_COMPILED, sweep, sweep_compiled, sweep_python, write_counterexamples
from tsocc.tsolb import LbTrace, Read, Write, check_trace_tso, load_trace
from oracles import count_lb_traces

needs_compiled = pytest.mark.skipif(not HAVE_COMPILED, reason="compiled kernel not built")

# ppo failure counts at (2,2,2), frozen from a run of the pure-Python checker
PPO_FAILURES = {2: 0, 3: 8, 4: 376}


@pytest.mark.parametrize("depth", [2, 3, 4])
def test_python_backend_counts(depth):
    r = sweep_python(2, 2, 2, depth)
    assert r.traces == count_lb_traces(2, 2, 2, depth)
    assert r.failures["ppo"] == PPO_FAILURES[depth]
    assert r.failing() == (["ppo"] if PPO_FAILURES[depth] else [])


@needs_compiled
@pytest.mark.parametrize("cfg", [(2, 2, 2, 4), (3, 2, 2, 3), (2, 3, 2, 3), (2, 2, 3, 3), (1, 2, 2, 4)])
def test_backends_agree(cfg):
    a, b = sweep_compiled(*cfg), sweep_python(*cfg)
    assert a.traces == b.traces
    assert a.failures == b.failures
    assert a.first == b.first


@needs_compiled
def test_compiled_depth6_frozen():
    r = sweep_compiled(2, 2, 2, 6)
    assert r.traces == count_lb_traces(2, 2, 2, 6) == 8108731
    assert r.failures["ppo"] == 260424
    assert r.failing() == ["ppo"]


def test_first_counterexample_is_minimal():
    r = sweep(2, 2, 2, 4)
    first = r.first["ppo"]
    assert len(first) == 3
    assert first == (Write(0, 0, 0), Read(0, 0, 0), Read(0, 1, 0))
    assert check_trace_tso(LbTrace.from_labels(first, procs=2, addrs=2)).failed_categories() == ["ppo"]


def test_counterexample_files(tmp_path):
    r = sweep(2, 2, 2, 3)
    paths = write_counterexamples(r, tmp_path)
    assert [p.split("/")[-1] for p in paths] == ["trace_ppo.txt"]
    assert tuple(load_trace((tmp_path / "trace_ppo.txt").read_text())) == r.first["ppo"]


def test_backend_env_override(monkeypatch):
    monkeypatch.setenv("TSOCC_BACKEND", "python")
    assert sweep(1, 1, 2, 2).backend == "python"


def test_unknown_backend():
    with pytest.raises(ValueError):
        sweep(1, 1, 2, 1, backend="gpu")
