"""Finite relation algebra over memory events and the axiomatic TSO checker.

Relations are immutable sets of event-id pairs over a fixed universe.  The
TSO architecture is the herd-style one with fences fixed to the empty set:

    ppo  = po \\ WR
    prop = ppo | rfe | fr
    hb   = ppo | rfe

and an execution is valid when SC PER LOCATION, NO THIN AIR, OBSERVATION and
PROPAGATION all hold.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, FrozenSet, Iterable, Iterator, List, Optional, Tuple

if TYPE_CHECKING:
    from .litmus import LitmusTest

INIT = "init"
READ = "R"
WRITE = "W"

DEFAULT_CANDIDATE_BUDGET = 10**6


class UsageError(ValueError):
    pass


class ExecutionError(ValueError):
    """An execution violates one of the candidate-execution invariants."""


class BudgetExceeded(RuntimeError):
    def __init__(self, what: str, count: int, budget: int):
        super().__init__(f"{what}: {count} exceeds budget {budget}")
        self.count = count
        self.budget = budget


@dataclass(frozen=True)
class Event:
    id: str
    proc: object
    kind: str
    addr: str
    value: int
    po_index: Optional[int] = None

    @property
    def is_init(self) -> bool:
        return self.proc == INIT

    @property
    def is_read(self) -> bool:
        return self.kind == READ

    @property
    def is_write(self) -> bool:
        return self.kind == WRITE


class Relation:
    __slots__ = ("pairs", "universe")

    def __init__(self, pairs: Iterable[Tuple[str, str]], universe: Iterable[str]):
        self.universe: FrozenSet[str] = frozenset(universe)
        self.pairs: FrozenSet[Tuple[str, str]] = frozenset(pairs)
        for x, y in self.pairs:
            if x not in self.universe or y not in self.universe:
                raise UsageError(f"pair ({x}, {y}) outside the relation universe")

    @classmethod
    def empty(cls, universe: Iterable[str]) -> "Relation":
        return cls((), universe)

    @classmethod
    def identity(cls, universe: Iterable[str]) -> "Relation":
        u = frozenset(universe)
        return cls(((x, x) for x in u), u)

    def _same(self, other: "Relation") -> None:
        if self.universe != other.universe:
            raise UsageError("relations over different universes")

    def __or__(self, other: "Relation") -> "Relation":
        self._same(other)
        return Relation(self.pairs | other.pairs, self.universe)

    def __and__(self, other: "Relation") -> "Relation":
        self._same(other)
        return Relation(self.pairs & other.pairs, self.universe)

    def __sub__(self, other: "Relation") -> "Relation":
        self._same(other)
        return Relation(self.pairs - other.pairs, self.universe)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Relation):
            return NotImplemented
        return self.universe == other.universe and self.pairs == other.pairs

    def __hash__(self) -> int:
        return hash((self.pairs, self.universe))

    def __contains__(self, pair: Tuple[str, str]) -> bool:
        return pair in self.pairs

    def __iter__(self) -> Iterator[Tuple[str, str]]:
        return iter(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def __le__(self, other: "Relation") -> bool:
        self._same(other)
        return self.pairs <= other.pairs

    def __repr__(self) -> str:
        return f"Relation({sorted(self.pairs)})"

    def inverse(self) -> "Relation":
        return Relation(((y, x) for x, y in self.pairs), self.universe)

    def filter(self, keep) -> "Relation":
        return Relation((p for p in self.pairs if keep(*p)), self.universe)

    def successors(self) -> Dict[str, set]:
        succ: Dict[str, set] = {}
        for x, y in self.pairs:
            succ.setdefault(x, set()).add(y)
        return succ

    def is_irreflexive(self) -> bool:
        return all(x != y for x, y in self.pairs)


def relation_compose(r1: Relation, r2: Relation) -> Relation:
    """Sequential composition ``r1 ; r2``."""
    r1._same(r2)
    succ2 = r2.successors()
    out = set()
    for x, y in r1.pairs:
        for z in succ2.get(y, ()):
            out.add((x, z))
    return Relation(out, r1.universe)


def relation_closure(r: Relation, reflexive: bool = False) -> Relation:
    succ = r.successors()
    out = set()
    for start in (r.universe if reflexive else succ.keys()):
        seen = set()
        stack = list(succ.get(start, ()))
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            stack.extend(succ.get(n, ()))
        if reflexive:
            seen.add(start)
        out.update((start, n) for n in seen)
    return Relation(out, r.universe)


def relation_is_acyclic(r: Relation) -> Tuple[bool, Optional[List[str]]]:
    """Return ``(True, None)`` or ``(False, cycle)`` with one cycle as an id list."""
    succ = {k: sorted(v) for k, v in r.successors().items()}
    white, grey, black = 0, 1, 2
    colour = {n: white for n in r.universe}
    for root in sorted(r.universe):
        if colour[root] != white:
            continue
        path = [root]
        iters = [iter(succ.get(root, ()))]
        colour[root] = grey
        while iters:
            nxt = next(iters[-1], None)
            if nxt is None:
                colour[path.pop()] = black
                iters.pop()
                continue
            if colour[nxt] == grey:
                return False, path[path.index(nxt):]
            if colour[nxt] == white:
                colour[nxt] = grey
                path.append(nxt)
                iters.append(iter(succ.get(nxt, ())))
    return True, None


@dataclass(frozen=True)
class Execution:
    events: Tuple[Event, ...]
    po: Relation
    rf: Relation
    co: Relation

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {e.id: e for e in self.events})

    @property
    def universe(self) -> FrozenSet[str]:
        return self.po.universe

    def event(self, eid: str) -> Event:
        return self._by_id[eid]

    def reads(self) -> List[Event]:
        return [e for e in self.events if e.is_read]

    def writes(self) -> List[Event]:
        return [e for e in self.events if e.is_write]

    def validate(self) -> None:
        ids = [e.id for e in self.events]
        if len(set(ids)) != len(ids):
            raise ExecutionError("event ids are not unique")
        universe = frozenset(ids)
        for name, rel in (("po", self.po), ("rf", self.rf), ("co", self.co)):
            if rel.universe != universe:
                raise ExecutionError(f"{name} universe differs from the event set")
        inits: Dict[str, int] = {}
        for e in self.events:
            if e.is_init:
                if not e.is_write or e.po_index is not None:
                    raise ExecutionError(f"initializer {e.id} must be a write without po_index")
                inits[e.addr] = inits.get(e.addr, 0) + 1
            elif e.po_index is None:
                raise ExecutionError(f"event {e.id} lacks po_index")
        addrs = {e.addr for e in self.events}
        for a in addrs:
            if inits.get(a, 0) != 1:
                raise ExecutionError(f"address {a} needs exactly one initializer write")
        by = self._by_id
        expected_po = set()
        procs: Dict[object, List[Event]] = {}
        for e in self.events:
            if not e.is_init:
                procs.setdefault(e.proc, []).append(e)
        for evs in procs.values():
            evs.sort(key=lambda e: e.po_index)
            idx = [e.po_index for e in evs]
            if len(set(idx)) != len(idx):
                raise ExecutionError("duplicate po_index within a processor")
            for i, x in enumerate(evs):
                for y in evs[i + 1:]:
                    expected_po.add((x.id, y.id))
        if set(self.po.pairs) != expected_po:
            raise ExecutionError("po is not the per-processor order given by po_index")
        sources: Dict[str, List[str]] = {}
        for w, r in self.rf:
            ew, er = by[w], by[r]
            if not (ew.is_write and er.is_read):
                raise ExecutionError(f"rf pair ({w}, {r}) is not write-to-read")
            if ew.addr != er.addr or ew.value != er.value:
                raise ExecutionError(f"rf pair ({w}, {r}) disagrees on address or value")
            sources.setdefault(r, []).append(w)
        for e in self.events:
            if e.is_read and len(sources.get(e.id, ())) != 1:
                raise ExecutionError(f"read {e.id} must read from exactly one write")
        for a in addrs:
            ws = [e.id for e in self.events if e.is_write and e.addr == a]
            sub = {(x, y) for x, y in self.co if by[x].addr == a}
            for x, y in self.co:
                if not (by[x].is_write and by[y].is_write and by[x].addr == by[y].addr):
                    raise ExecutionError(f"co pair ({x}, {y}) is not a same-address write pair")
            for x, y in itertools.combinations(ws, 2):
                if ((x, y) in sub) == ((y, x) in sub):
                    raise ExecutionError(f"co is not a strict total order at {a}")
            init = next(e.id for e in self.events if e.is_init and e.addr == a)
            if any((w, init) in sub for w in ws):
                raise ExecutionError(f"initializer of {a} is not co-first")
        closure = relation_closure(self.co)
        if closure != self.co or not self.co.is_irreflexive():
            raise ExecutionError("co is not transitive and irreflexive")


@dataclass(frozen=True)
class DerivedRelations:
    po_loc: Relation
    com: Relation
    rfe: Relation
    fr: Relation
    fre: Relation
    hb: Relation
    ppo: Relation
    prop: Relation


def derive_relations(e: Execution, validate: bool = True) -> DerivedRelations:
    if validate:
        e.validate()
    ev = e.event
    u = e.universe
    po_loc = e.po.filter(lambda x, y: ev(x).addr == ev(y).addr)
    fr = relation_compose(e.rf.inverse(), e.co)
    rfe = e.rf.filter(lambda x, y: ev(x).proc != ev(y).proc)
    fre = fr.filter(lambda x, y: ev(x).proc != ev(y).proc)
    ppo = e.po.filter(lambda x, y: not (ev(x).is_write and ev(y).is_read))
    fences = Relation.empty(u)
    hb = ppo | fences | rfe
    prop = ppo | fences | rfe | fr
    com = e.co | e.rf | fr
    return DerivedRelations(po_loc=po_loc, com=com, rfe=rfe, fr=fr, fre=fre, hb=hb, ppo=ppo, prop=prop)


@dataclass(frozen=True)
class AxiomVerdict:
    sc_per_location: bool
    no_thin_air: bool
    observation: bool
    propagation: bool
    witnesses: Dict[str, List[str]] = field(default_factory=dict, compare=False)

    @property
    def overall(self) -> bool:
        return self.sc_per_location and self.no_thin_air and self.observation and self.propagation

    def failed(self) -> List[str]:
        return [n for n in ("sc_per_location", "no_thin_air", "observation", "propagation") if not getattr(self, n)]


def check_axioms(e: Execution, validate: bool = True) -> AxiomVerdict:
    d = derive_relations(e, validate=validate)
    witnesses: Dict[str, List[str]] = {}

    ok_sc, cyc = relation_is_acyclic(d.po_loc | d.com)
    if cyc:
        witnesses["sc_per_location"] = cyc
    ok_hb, cyc = relation_is_acyclic(d.hb)
    if cyc:
        witnesses["no_thin_air"] = cyc
    obs = relation_compose(relation_compose(d.fre, d.prop), relation_closure(d.hb, reflexive=True))
    bad = sorted(x for x, y in obs if x == y)
    if bad:
        witnesses["observation"] = bad[:1]
    ok_prop, cyc = relation_is_acyclic(e.co | d.prop)
    if cyc:
        witnesses["propagation"] = cyc
    return AxiomVerdict(ok_sc, ok_hb, not bad, ok_prop, witnesses)


# ---------------------------------------------------------------------------
# candidate enumeration


@dataclass(frozen=True)
class Candidate:
    execution: Execution
    registers: Dict[str, int]
    verdict: Optional[AxiomVerdict] = None


def litmus_events(t: "LitmusTest") -> Tuple[List[Event], List[Tuple[Event, str]]]:
    """Events for a litmus program; read values are left as placeholders (-1)."""
    events = [Event(f"init_{a}", INIT, WRITE, a, t.init.get(a, 0)) for a in t.addresses]
    reads: List[Tuple[Event, str]] = []
    for ti, thread in enumerate(t.threads):
        for k, ins in enumerate(thread):
            eid = f"t{ti}_{k}"
            if ins.is_write:
                events.append(Event(eid, ti, WRITE, ins.addr, ins.value, k))
            else:
                ev = Event(eid, ti, READ, ins.addr, -1, k)
                events.append(ev)
                reads.append((ev, ins.reg))
    return events, reads


def candidate_count(t: "LitmusTest") -> int:
    events, reads = litmus_events(t)
    writes_at: Dict[str, int] = {}
    for e in events:
        if e.is_write:
            writes_at[e.addr] = writes_at.get(e.addr, 0) + 1
    n = 1
    for r, _ in reads:
        n *= writes_at[r.addr]
    for cnt in writes_at.values():
        n *= math.factorial(cnt - 1)
    return n


def _po_relation(events: List[Event], universe) -> Relation:
    pairs = []
    procs: Dict[object, List[Event]] = {}
    for e in events:
        if not e.is_init:
            procs.setdefault(e.proc, []).append(e)
    for evs in procs.values():
        evs.sort(key=lambda e: e.po_index)
        pairs.extend((x.id, y.id) for i, x in enumerate(evs) for y in evs[i + 1:])
    return Relation(pairs, universe)


def iter_candidates(t: "LitmusTest", budget: int = DEFAULT_CANDIDATE_BUDGET,
                    with_verdict: bool = True) -> Iterator[Candidate]:
    count = candidate_count(t)
    if count > budget:
        raise BudgetExceeded("candidate executions", count, budget)
    events, reads = litmus_events(t)
    universe = [e.id for e in events]
    po = _po_relation(events, universe)
    writes: Dict[str, List[Event]] = {}
    for e in events:
        if e.is_write:
            writes.setdefault(e.addr, []).append(e)
    addrs = sorted(writes)
    co_choices = []
    for a in addrs:
        init, rest = writes[a][0], writes[a][1:]
        orders = []
        for perm in itertools.permutations(rest):
            seq = (init,) + perm
            orders.append([(x.id, y.id) for i, x in enumerate(seq) for y in seq[i + 1:]])
        co_choices.append(orders)
    rf_choices = [writes[r.addr] for r, _ in reads]
    for rf_pick in itertools.product(*rf_choices):
        value_of = {r.id: w.value for (r, _), w in zip(reads, rf_pick)}
        evs = tuple(Event(e.id, e.proc, e.kind, e.addr, value_of[e.id], e.po_index) if e.is_read else e
                    for e in events)
        rf = Relation(((w.id, r.id) for (r, _), w in zip(reads, rf_pick)), universe)
        regs = {reg: value_of[r.id] for r, reg in reads}
        for co_pick in itertools.product(*co_choices):
            co = Relation((p for pairs in co_pick for p in pairs), universe)
            ex = Execution(evs, po, rf, co)
            verdict = check_axioms(ex, validate=False) if with_verdict else None
            yield Candidate(ex, regs, verdict)


def enumerate_candidates(t: "LitmusTest", budget: int = DEFAULT_CANDIDATE_BUDGET) -> List[Candidate]:
    return list(iter_candidates(t, budget))


def axiomatic_outcomes(t: "LitmusTest", budget: int = DEFAULT_CANDIDATE_BUDGET) -> Dict[Tuple[Tuple[str, int], ...], Candidate]:
    """Register outcomes of all axiom-passing candidates, each with one witness."""
    out: Dict[Tuple[Tuple[str, int], ...], Candidate] = {}
    for cand in iter_candidates(t, budget, with_verdict=False):
        key = tuple(sorted(cand.registers.items()))
        if key in out:
            continue
        v = check_axioms(cand.execution, validate=False)
        if v.overall:
            out[key] = Candidate(cand.execution, cand.registers, v)
    return out
