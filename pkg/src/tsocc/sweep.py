"""Exhaustive check of every TSO-LB trace up to a length bound.

The compiled kernel (``tsocc._sweep``) is used when it was built; otherwise the
pure-Python path drives :func:`tsolb.check_trace_tso` over every trace.  Both
return the same :class:`SweepResult`.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .tsolb import (CATEGORIES, LbLabel, LbTrace, Propagate, Read, Write, check_trace_tso, dump_trace,
                    iter_traces)

try:
    from ._sweep import sweep as _compiled_sweep
except ImportError:  # pragma: no cover - exercised only on installs without a compiler
    _compiled_sweep = None

HAVE_COMPILED = _compiled_sweep is not None


@dataclass
class SweepResult:
    procs: int
    addrs: int
    values: int
    depth: int
    backend: str
    traces: int
    failures: Dict[str, int]
    first: Dict[str, Optional[Tuple[LbLabel, ...]]]
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return not any(self.failures.values())

    def failing(self) -> List[str]:
        return [c for c in CATEGORIES if self.failures[c]]

    def summary(self) -> str:
        lines = [f"traces of length <= {self.depth} over ({self.procs},{self.addrs},{self.values}): "
                 f"{self.traces} checked by {self.backend} in {self.seconds:.1f}s"]
        for c in CATEGORIES:
            status = "ok" if not self.failures[c] else f"FAIL in {self.failures[c]} traces"
            lines.append(f"  {c:16s} {status}")
            if self.first[c] is not None:
                lines.append("    first counterexample: " + " ; ".join(map(str, self.first[c])))
        return "\n".join(lines)


def _decode(path) -> Tuple[LbLabel, ...]:
    out = []
    for kind, p, a, v in path:
        out.append(Read(p, a, v) if kind == 0 else Write(p, a, v) if kind == 1 else Propagate(p))
    return tuple(out)


def sweep_compiled(procs: int, addrs: int, values: int, depth: int) -> SweepResult:
    if _compiled_sweep is None:
        raise RuntimeError("compiled sweep kernel is not available")
    t0 = time.perf_counter()
    count, fails, first = _compiled_sweep(procs, addrs, values, depth)
    return SweepResult(procs, addrs, values, depth, "compiled", count,
                       dict(zip(CATEGORIES, fails)),
                       {c: (_decode(f) if f is not None else None) for c, f in zip(CATEGORIES, first)},
                       time.perf_counter() - t0)


def sweep_python(procs: int, addrs: int, values: int, depth: int) -> SweepResult:
    t0 = time.perf_counter()
    failures = {c: 0 for c in CATEGORIES}
    first: Dict[str, Optional[Tuple[LbLabel, ...]]] = {c: None for c in CATEGORIES}
    count = 0
    for labels in iter_traces(procs, addrs, values, depth):
        count += 1
        report = check_trace_tso(LbTrace.from_labels(labels, procs=procs, addrs=addrs))
        for c in report.failed_categories():
            failures[c] += 1
            # shortest-first is not guaranteed by DFS; keep the shortest seen
            if first[c] is None or len(labels) < len(first[c]):
                first[c] = labels
    return SweepResult(procs, addrs, values, depth, "python", count, failures, first,
                       time.perf_counter() - t0)


def sweep(procs: int, addrs: int, values: int, depth: int, backend: str = "auto") -> SweepResult:
    if backend == "auto":
        backend = os.environ.get("TSOCC_BACKEND", "compiled" if HAVE_COMPILED else "python")
    if backend == "compiled":
        return sweep_compiled(procs, addrs, values, depth)
    if backend == "python":
        return sweep_python(procs, addrs, values, depth)
    raise ValueError(f"unknown backend {backend!r}")


def write_counterexamples(result: SweepResult, outdir) -> List[str]:
    from pathlib import Path
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for c, labels in result.first.items():
        if labels is None:
            continue
        p = out / f"trace_{c}.txt"
        p.write_text(f"# first trace failing {c}\n" + dump_trace(labels))
        paths.append(str(p))
    return paths
