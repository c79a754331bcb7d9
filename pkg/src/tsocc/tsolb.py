"""The TSO-LB load-buffer machine.

Every processor owns a local buffer holding one value per address; a single
global buffer holds the most recent write to each address.  Reads hit the
local buffer, writes update both, and a silent Propagate(p) refreshes all of
p's local buffer from the global one in a single step.

Processors, addresses and values are small integers ``0..n-1``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

from .axioms import (INIT, READ, WRITE, BudgetExceeded, Event, Execution, Relation, UsageError,
                     check_axioms, derive_relations)

if TYPE_CHECKING:
    from .litmus import LitmusTest


@dataclass(frozen=True)
class TsoLbState:
    local: Tuple[Tuple[int, ...], ...]
    glob: Tuple[int, ...]

    @property
    def procs(self) -> int:
        return len(self.local)

    @property
    def addrs(self) -> int:
        return len(self.glob)

    def dump(self) -> str:
        loc = " ".join(f"p{p}=[{','.join(map(str, row))}]" for p, row in enumerate(self.local))
        return f"local {loc} global [{','.join(map(str, self.glob))}]"


def _label_eq(self, other):
    # plain tuple equality would make Read(p, a, v) == Write(p, a, v)
    return type(self) is type(other) and tuple.__eq__(self, other)


def _label_ne(self, other):
    return not _label_eq(self, other)


def _label_hash(self):
    return hash((type(self).__name__, tuple(self)))


class Read(NamedTuple):
    p: int
    a: int
    v: int

    def __str__(self):
        return f"R {self.p} {self.a} {self.v}"

    __eq__, __ne__, __hash__ = _label_eq, _label_ne, _label_hash


class Write(NamedTuple):
    p: int
    a: int
    v: int

    def __str__(self):
        return f"W {self.p} {self.a} {self.v}"

    __eq__, __ne__, __hash__ = _label_eq, _label_ne, _label_hash


class Propagate(NamedTuple):
    p: int

    def __str__(self):
        return f"P {self.p}"

    __eq__, __ne__, __hash__ = _label_eq, _label_ne, _label_hash


LbLabel = Union[Read, Write, Propagate]


class DisabledLabel(ValueError):
    pass


def initial_state(procs: int, addrs: int, values: int = 2) -> TsoLbState:
    if procs < 1 or addrs < 1 or values < 1:
        raise UsageError("processor, address and value domains must be nonempty")
    return TsoLbState(tuple((0,) * addrs for _ in range(procs)), (0,) * addrs)


def enabled_labels(s: TsoLbState, values: int) -> List[LbLabel]:
    out: List[LbLabel] = []
    for p, row in enumerate(s.local):
        for a, v in enumerate(row):
            out.append(Read(p, a, v))
    for p in range(s.procs):
        for a in range(s.addrs):
            for v in range(values):
                out.append(Write(p, a, v))
    out.extend(Propagate(p) for p in range(s.procs))
    return out


def apply_label(s: TsoLbState, label: LbLabel) -> TsoLbState:
    if isinstance(label, Read):
        if s.local[label.p][label.a] != label.v:
            raise DisabledLabel(f"{label}: local value is {s.local[label.p][label.a]}")
        return s
    if isinstance(label, Write):
        p, a, v = label
        row = list(s.local[p])
        row[a] = v
        glob = list(s.glob)
        glob[a] = v
        local = s.local[:p] + (tuple(row),) + s.local[p + 1:]
        return TsoLbState(local, tuple(glob))
    if isinstance(label, Propagate):
        p = label.p
        if s.local[p] == s.glob:
            return s
        return TsoLbState(s.local[:p] + (s.glob,) + s.local[p + 1:], s.glob)
    raise TypeError(f"not a TSO-LB label: {label!r}")


def format_label(label: LbLabel) -> str:
    return str(label)


def parse_label(line: str) -> LbLabel:
    parts = line.split()
    try:
        if parts[0] == "R" and len(parts) == 4:
            return Read(*map(int, parts[1:]))
        if parts[0] == "W" and len(parts) == 4:
            return Write(*map(int, parts[1:]))
        if parts[0] == "P" and len(parts) == 2:
            return Propagate(int(parts[1]))
    except (IndexError, ValueError):
        pass
    raise ValueError(f"bad trace label: {line!r}")


def dump_trace(labels: Iterable[LbLabel]) -> str:
    return "".join(f"{format_label(l)}\n" for l in labels)


def load_trace(text: str) -> List[LbLabel]:
    return [parse_label(l) for l in text.splitlines() if l.strip() and not l.lstrip().startswith("#")]


# ---------------------------------------------------------------------------
# traces with provenance


def event_id(k: int) -> str:
    return f"e{k}"


def init_id(a: int) -> str:
    return f"init_{a}"


@dataclass(frozen=True)
class LbTrace:
    """A finite trace.

    ``provenance[k]`` is, for a read at position k, the id of the write event
    the read takes its value from; ``anchors[k]`` is the trace position of the
    event that last assigned the local cell the read hit (-1 for the initial
    state).  Both are None at non-read positions.
    """

    initial: TsoLbState
    labels: Tuple[LbLabel, ...]
    provenance: Tuple[Optional[str], ...]
    anchors: Tuple[Optional[int], ...]

    @classmethod
    def from_labels(cls, labels: Sequence[LbLabel], initial: Optional[TsoLbState] = None,
                    procs: Optional[int] = None, addrs: Optional[int] = None) -> "LbTrace":
        labels = tuple(labels)
        if initial is None:
            procs = procs if procs is not None else 1 + max((l.p for l in labels), default=0)
            addrs = addrs if addrs is not None else 1 + max((l.a for l in labels if not isinstance(l, Propagate)), default=0)
            initial = initial_state(procs, addrs)
        s = initial
        # each cell: (writer id, position of the event that assigned it)
        lcell = [[(init_id(a), -1) for a in range(initial.addrs)] for _ in range(initial.procs)]
        gcell = [init_id(a) for a in range(initial.addrs)]
        prov: List[Optional[str]] = []
        anch: List[Optional[int]] = []
        for k, l in enumerate(labels):
            s = apply_label(s, l)
            if isinstance(l, Read):
                w, pos = lcell[l.p][l.a]
                prov.append(w)
                anch.append(pos)
                continue
            prov.append(None)
            anch.append(None)
            if isinstance(l, Write):
                lcell[l.p][l.a] = (event_id(k), k)
                gcell[l.a] = event_id(k)
            else:
                lcell[l.p] = [(gcell[a], k) for a in range(initial.addrs)]
        return cls(initial, labels, tuple(prov), tuple(anch))

    def with_provenance(self, k: int, writer: str) -> "LbTrace":
        """Copy with the read at position k re-pointed to ``writer`` (fixture use)."""
        prov = list(self.provenance)
        prov[k] = writer
        return LbTrace(self.initial, self.labels, tuple(prov), self.anchors)

    def observable(self) -> List[LbLabel]:
        return [l for l in self.labels if not isinstance(l, Propagate)]


@dataclass(frozen=True)
class LogicalOrder:
    order: Tuple[str, ...]

    def position(self) -> Dict[str, int]:
        return {e: i for i, e in enumerate(self.order)}

    def before(self, x: str, y: str) -> bool:
        pos = self.position()
        return _lpos(pos, x) < _lpos(pos, y)


def _lpos(pos: Dict[str, int], e: str) -> int:
    # initializer writes precede every trace event
    return -1 if e.startswith("init_") else pos[e]


def logical_time(tr: LbTrace) -> LogicalOrder:
    """Writes stay in trace order; each read moves back to just after the event
    that last assigned the local cell it hit, ties broken by program order."""
    keyed = []
    for k, l in enumerate(tr.labels):
        if isinstance(l, Write):
            keyed.append(((k, 0, 0), event_id(k)))
        elif isinstance(l, Read):
            anchor = tr.anchors[k]
            if anchor is None:
                raise RuntimeError(f"read at {k} has no provenance")
            keyed.append(((anchor, 1, k), event_id(k)))
    keyed.sort()
    return LogicalOrder(tuple(e for _, e in keyed))


def extract_execution(tr: LbTrace) -> Execution:
    events: List[Event] = [Event(init_id(a), INIT, WRITE, a, tr.initial.glob[a]) for a in range(tr.initial.addrs)]
    po_idx: Dict[int, int] = {}
    value_of: Dict[str, int] = {e.id: e.value for e in events}
    for k, l in enumerate(tr.labels):
        if isinstance(l, Propagate):
            continue
        i = po_idx.get(l.p, 0)
        po_idx[l.p] = i + 1
        kind = WRITE if isinstance(l, Write) else READ
        events.append(Event(event_id(k), l.p, kind, l.a, l.v, i))
        if kind == WRITE:
            value_of[event_id(k)] = l.v
    universe = [e.id for e in events]
    by_proc: Dict[int, List[str]] = {}
    for e in events:
        if not e.is_init:
            by_proc.setdefault(e.proc, []).append(e.id)
    po = Relation(((x, y) for ids in by_proc.values() for i, x in enumerate(ids) for y in ids[i + 1:]), universe)
    rf = Relation(((tr.provenance[k], event_id(k)) for k, l in enumerate(tr.labels) if isinstance(l, Read)), universe)
    co_pairs = []
    for a in range(tr.initial.addrs):
        ws = [e.id for e in events if e.is_write and e.addr == a]
        co_pairs.extend((x, y) for i, x in enumerate(ws) for y in ws[i + 1:])
    co = Relation(co_pairs, universe)
    return Execution(tuple(events), po, rf, co)


PROPOSITIONS = ("co", "rf", "fr", "ppo", "po_loc")
AXIOMS = ("sc_per_location", "no_thin_air", "observation", "propagation")
CATEGORIES = PROPOSITIONS + AXIOMS


@dataclass
class TraceReport:
    violations: Dict[str, List[Tuple[str, str]]] = field(default_factory=dict)
    axioms_failed: List[str] = field(default_factory=list)
    order: Optional[LogicalOrder] = None

    @property
    def passed(self) -> bool:
        return not self.violations and not self.axioms_failed

    def failed_categories(self) -> List[str]:
        return [c for c in PROPOSITIONS if c in self.violations] + list(self.axioms_failed)

    def describe(self) -> str:
        if self.passed:
            return "pass"
        parts = [f"{name} not contained in L: {pairs[0]}" for name, pairs in self.violations.items()]
        parts += [f"axiom {a} fails" for a in self.axioms_failed]
        return "; ".join(parts)


def check_trace_tso(tr: LbTrace) -> TraceReport:
    L = logical_time(tr)
    ex = extract_execution(tr)
    d = derive_relations(ex, validate=False)
    pos = L.position()
    rels = {"co": ex.co, "rf": ex.rf, "fr": d.fr, "ppo": d.ppo, "po_loc": d.po_loc}
    report = TraceReport(order=L)
    for name in PROPOSITIONS:
        bad = sorted((x, y) for x, y in rels[name] if not _lpos(pos, x) < _lpos(pos, y))
        if bad:
            report.violations[name] = bad
    report.axioms_failed = check_axioms(ex, validate=False).failed()
    return report


def iter_traces(procs: int, addrs: int, values: int, depth: int) -> Iterator[Tuple[LbLabel, ...]]:
    """All label sequences of length <= depth from the canonical initial state, in DFS order."""
    s0 = initial_state(procs, addrs, values)
    stack = [(s0, ())]
    while stack:
        s, labels = stack.pop()
        yield labels
        if len(labels) == depth:
            continue
        for l in reversed(enabled_labels(s, values)):
            stack.append((apply_label(s, l), labels + (l,)))


# ---------------------------------------------------------------------------
# litmus execution


@dataclass
class LbRun:
    outcomes: Dict[Tuple[Tuple[str, int], ...], Tuple[LbLabel, ...]]
    states: int


def litmus_setup(t: "LitmusTest") -> Tuple[Dict[str, int], Dict[int, int], int, TsoLbState, Tuple[LbLabel, ...]]:
    """Map a litmus test onto integer domains; nonzero init values become a prologue."""
    addr_ix = {a: i for i, a in enumerate(t.addresses)}
    vals = sorted({0} | set(t.init.values()) | {ins.value for th in t.threads for ins in th if ins.is_write}
                  | {v for _, v in t.condition})
    val_ix = {v: i for i, v in enumerate(vals)}
    procs = max(1, len(t.threads))
    s = initial_state(procs, max(1, len(addr_ix)), len(vals))
    prologue: List[LbLabel] = []
    for a, v in sorted(t.init.items()):
        if v != 0:
            prologue.append(Write(0, addr_ix[a], val_ix[v]))
    if prologue:
        prologue.extend(Propagate(p) for p in range(procs))
    for l in prologue:
        s = apply_label(s, l)
    return addr_ix, val_ix, len(vals), s, tuple(prologue)


def run_litmus_exhaustive(t: "LitmusTest", budget: int = 10**6) -> LbRun:
    """Every register outcome reachable by some TSO-LB trace running each
    thread in program order, with one witness trace per outcome."""
    addr_ix, val_ix, _, s0, prologue = litmus_setup(t)
    inv_val = {i: v for v, i in val_ix.items()}
    threads = t.threads
    nthreads = len(threads)
    start = (s0, (0,) * nthreads, ())
    parent: Dict[tuple, Optional[Tuple[tuple, LbLabel]]] = {start: None}
    queue = deque([start])
    outcomes: Dict[Tuple[Tuple[str, int], ...], Tuple[LbLabel, ...]] = {}

    def witness(node) -> Tuple[LbLabel, ...]:
        labels = []
        while parent[node] is not None:
            node, l = parent[node]
            labels.append(l)
        return prologue + tuple(reversed(labels))

    while queue:
        node = queue.popleft()
        s, pcs, regs = node
        if all(pc == len(th) for pc, th in zip(pcs, threads)):
            key = tuple(sorted((r, inv_val[v]) for r, v in regs))
            if key not in outcomes:
                outcomes[key] = witness(node)
            continue
        succs = []
        for p, th in enumerate(threads):
            if pcs[p] == len(th):
                continue
            ins = th[pcs[p]]
            npcs = pcs[:p] + (pcs[p] + 1,) + pcs[p + 1:]
            a = addr_ix[ins.addr]
            if ins.is_write:
                l = Write(p, a, val_ix[ins.value])
                succs.append(((apply_label(s, l), npcs, regs), l))
            else:
                v = s.local[p][a]
                succs.append(((s, npcs, tuple(sorted(regs + ((ins.reg, v),)))), Read(p, a, v)))
            if s.local[p] != s.glob:
                succs.append(((apply_label(s, Propagate(p)), pcs, regs), Propagate(p)))
        for nxt, l in succs:
            if nxt in parent:
                continue
            parent[nxt] = (node, l)
            if len(parent) > budget:
                raise BudgetExceeded("TSO-LB litmus states", len(parent), budget)
            queue.append(nxt)
    return LbRun(outcomes, len(parent))


def replay_litmus_trace(t: "LitmusTest", labels: Sequence[LbLabel]) -> Dict[str, int]:
    """Re-run a witness trace against the test program; returns the registers."""
    addr_ix, val_ix, _, s, prologue = litmus_setup(t)
    inv_val = {i: v for v, i in val_ix.items()}
    labels = list(labels)
    if tuple(labels[:len(prologue)]) != prologue:
        raise DisabledLabel("witness does not start with the init prologue")
    for l in prologue:
        s = apply_label(s, l)
    pcs = [0] * len(t.threads)
    regs: Dict[str, int] = {}
    for l in labels[len(prologue):]:
        s = apply_label(s, l)
        if isinstance(l, Propagate):
            continue
        ins = t.threads[l.p][pcs[l.p]]
        pcs[l.p] += 1
        if addr_ix[ins.addr] != l.a or ins.is_write != isinstance(l, Write):
            raise DisabledLabel(f"{l} does not match instruction {ins}")
        if ins.is_write and val_ix[ins.value] != l.v:
            raise DisabledLabel(f"{l} writes the wrong value")
        if not ins.is_write:
            regs[ins.reg] = inv_val[l.v]
    if any(pc != len(th) for pc, th in zip(pcs, t.threads)):
        raise DisabledLabel("witness does not run every thread to completion")
    return regs
