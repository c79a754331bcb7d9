"""Explicit-state model checking over guarded-command models.

A :class:`Model` is a set of initial states and a list of :class:`Rule` objects.
Each rule yields ``(binding, successor)`` pairs for the bindings whose guard
holds.  :func:`explore` runs breadth-first reachability, checks state and
transition invariants, detects deadlocks and rebuilds a shortest
counterexample from parent links.

States must be hashable values.  The visited set stores ``model.encode(state)``;
the encoding has to be injective because equality of keys is taken as equality
of states (no lossy hashing).
"""

from __future__ import annotations

import itertools
import multiprocessing
import time
from array import array
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Hashable, Iterable, Iterator, List, Optional, Sequence, Tuple

State = Hashable
Binding = Tuple[Any, ...]

PASS = "pass"
INVARIANT_VIOLATION = "invariant-violation"
DEADLOCK = "deadlock"
PROTOCOL_ERROR = "protocol-error"


class BudgetExceeded(RuntimeError):
    def __init__(self, what: str, stats: Dict[str, Any]):
        super().__init__(f"{what} budget exceeded after {stats.get('states', 0)} states")
        self.what = what
        self.stats = stats


class ReplayError(RuntimeError):
    def __init__(self, step: int, reason: str):
        super().__init__(f"replay diverges at step {step}: {reason}")
        self.step = step
        self.reason = reason


class Rule:
    """A named guarded command over finite parameter domains.

    Either give ``guard``/``effect`` (and ``domains``, one sequence per parameter)
    or give ``successors``, a function ``state -> iterable of (binding, state)``
    for rule families that enumerate their enabled bindings directly.
    """

    def __init__(self, name: str, params: Sequence[str] = (), domains: Sequence[Sequence[Any]] = (),
                 guard: Optional[Callable[..., bool]] = None, effect: Optional[Callable[..., State]] = None,
                 successors: Optional[Callable[[State], Iterable[Tuple[Binding, State]]]] = None,
                 observable: bool = False):
        if successors is None and (guard is None or effect is None):
            raise ValueError(f"rule {name}: need guard and effect, or successors")
        if successors is None and len(domains) != len(params):
            raise ValueError(f"rule {name}: {len(params)} params but {len(domains)} domains")
        self.name = name
        self.params = tuple(params)
        self.domains = tuple(tuple(d) for d in domains)
        self.guard = guard
        self.effect = effect
        self._successors = successors
        self.observable = observable

    def successors(self, s: State) -> Iterator[Tuple[Binding, State]]:
        if self._successors is not None:
            yield from self._successors(s)
            return
        for b in itertools.product(*self.domains):
            if self.guard(s, *b):
                yield b, self.effect(s, *b)

    def format_binding(self, b: Binding) -> str:
        if self.params and len(self.params) == len(b):
            return " ".join(f"{k}={v}" for k, v in zip(self.params, b))
        return " ".join(map(str, b))

    def __repr__(self) -> str:
        return f"Rule({self.name!r})"


@dataclass
class Invariant:
    name: str
    check: Callable[[State], bool]
    kind: str = INVARIANT_VIOLATION


@dataclass
class TransitionInvariant:
    name: str
    check: Callable[[State, str, Binding, State], bool]
    kind: str = INVARIANT_VIOLATION


@dataclass
class Model:
    name: str
    initial: Sequence[State]
    rules: Sequence[Rule]
    invariants: Sequence[Invariant] = ()
    transition_invariants: Sequence[TransitionInvariant] = ()
    accepting: Optional[Callable[[State], bool]] = None
    encode: Callable[[State], Hashable] = lambda s: s
    decode: Callable[[Hashable], State] = lambda k: k
    dump: Callable[[State], str] = repr
    permute: Optional[Callable[[State, Tuple[int, ...]], State]] = None
    n_procs: int = 0
    config: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.initial:
            raise ValueError("model needs at least one initial state")
        self.rule_index = {r.name: r for r in self.rules}
        if len(self.rule_index) != len(self.rules):
            raise ValueError("rule names must be unique")

    def successors(self, s: State) -> Iterator[Tuple[Rule, Binding, State]]:
        for r in self.rules:
            for b, t in r.successors(s):
                yield r, b, t


@dataclass
class Step:
    rule: str
    binding: Binding
    state: State


@dataclass
class Counterexample:
    initial: State
    steps: List[Step]
    kind: str
    reason: str

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def final(self) -> State:
        return self.steps[-1].state if self.steps else self.initial

    def states(self) -> List[State]:
        return [self.initial] + [st.state for st in self.steps]


@dataclass
class ExplorationReport:
    model: str
    verdict: str
    states: int
    transitions: int
    depth: int
    seconds: float
    counterexample: Optional[Counterexample] = None
    violated: Optional[str] = None
    frontier_peak: int = 0
    workers: int = 1
    symmetry: bool = False
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def summary(self) -> Dict[str, Any]:
        return {"model": self.model, "verdict": self.verdict, "states": self.states,
                "transitions": self.transitions, "depth": self.depth,
                "seconds": round(self.seconds, 3), "violated": self.violated,
                "counterexample_length": None if self.counterexample is None else len(self.counterexample),
                "frontier_peak": self.frontier_peak, "workers": self.workers,
                "symmetry": self.symmetry, "note": self.note}


def canonicalize(m: Model, s: State) -> State:
    """Lexicographically least encoding over all processor permutations."""
    if m.permute is None or m.n_procs < 2:
        return s
    best, best_key = s, m.encode(s)
    for perm in itertools.permutations(range(m.n_procs)):
        t = m.permute(s, perm)
        k = m.encode(t)
        if k < best_key:
            best, best_key = t, k
    return best


def _check_state(m: Model, s: State) -> Optional[Invariant]:
    for inv in m.invariants:
        if not inv.check(s):
            return inv
    return None


def _check_transition(m: Model, s: State, r: Rule, b: Binding, t: State) -> Optional[TransitionInvariant]:
    for inv in m.transition_invariants:
        if not inv.check(s, r.name, b, t):
            return inv
    return None


# Frontier expansion in worker processes.  The model holds closures, so it is
# handed to the pool by fork inheritance rather than by pickling.
_POOL_MODEL: Optional[Model] = None


def _expand_chunk(keys: List[Hashable]) -> List[List[Tuple[int, Binding, Hashable, Optional[str], Optional[str]]]]:
    m = _POOL_MODEL
    names = {r.name: i for i, r in enumerate(m.rules)}
    out = []
    for k in keys:
        s = m.decode(k)
        succ = []
        for r, b, t in m.successors(s):
            bad = _check_transition(m, s, r, b, t)
            succ.append((names[r.name], b, m.encode(t), None if bad is None else bad.name,
                         None if bad is None else bad.kind))
        out.append(succ)
    return out


def explore(m: Model, max_states: Optional[int] = None, max_seconds: Optional[float] = None,
            symmetry: bool = False, workers: int = 1, check_deadlock: bool = True,
            chunk: int = 512) -> ExplorationReport:
    """Breadth-first reachability with invariant and deadlock checking.

    The verdict and the state count are the same for every worker count: workers
    only compute successor lists, which the parent merges in frontier order.
    """
    t0 = time.perf_counter()
    enc = m.encode
    canon = (lambda s: canonicalize(m, s)) if symmetry else (lambda s: s)
    index: Dict[Hashable, int] = {}
    keys: List[Hashable] = []
    parent = array("q")
    depth_of = array("i")
    transitions = 0
    peak = 0

    def stats():
        return {"states": len(keys), "transitions": transitions, "seconds": time.perf_counter() - t0,
                "frontier_peak": peak}

    def report(verdict, cex=None, violated=None):
        return ExplorationReport(m.name, verdict, len(keys), transitions,
                                 max(depth_of) if depth_of else 0, time.perf_counter() - t0, cex, violated,
                                 peak, workers, symmetry,
                                 "counterexample is shortest under breadth-first order" if cex else "")

    def add(s: State, par: int, d: int) -> Tuple[int, bool]:
        k = enc(s)
        i = index.get(k)
        if i is not None:
            return i, False
        i = len(keys)
        index[k] = i
        keys.append(k)
        parent.append(par)
        depth_of.append(d)
        if max_states is not None and len(keys) > max_states:
            raise BudgetExceeded("state", stats())
        return i, True

    def cex_to(i: int, kind: str, reason: str, last: Optional[Tuple[Rule, Binding, State]] = None):
        chain = []
        j = i
        while j >= 0:
            chain.append(j)
            j = parent[j]
        chain.reverse()
        targets = [m.decode(keys[j]) for j in chain]
        steps = _rebuild(m, targets, symmetry)
        first = steps.pop(0).state if steps else targets[0]
        if last is not None:
            r, b, t = last
            cur = steps[-1].state if steps else first
            if symmetry:
                # redo the final step from the concrete (non-canonical) state
                for r2, b2, t2 in m.successors(cur):
                    if r2.name == r.name and _check_transition(m, cur, r2, b2, t2) is not None:
                        r, b, t = r2, b2, t2
                        break
            steps.append(Step(r.name, b, t))
        return Counterexample(first, steps, kind, reason)

    frontier = deque()
    for s0 in m.initial:
        s0 = canon(s0)
        i, new = add(s0, -1, 0)
        if new:
            bad = _check_state(m, s0)
            if bad is not None:
                return report(bad.kind, cex_to(i, bad.kind, bad.name), bad.name)
            frontier.append(i)

    pool = None
    if workers > 1:
        global _POOL_MODEL
        _POOL_MODEL = m
        pool = multiprocessing.get_context("fork").Pool(workers)
    try:
        while frontier:
            peak = max(peak, len(frontier))
            if max_seconds is not None and time.perf_counter() - t0 > max_seconds:
                raise BudgetExceeded("time", stats())
            if pool is None:
                batch = [frontier.popleft()]
                expanded = None
            else:
                batch = [frontier.popleft() for _ in range(min(len(frontier), chunk * workers))]
                parts = [[keys[i] for i in batch[j:j + chunk]] for j in range(0, len(batch), chunk)]
                expanded = [succ for part in pool.map(_expand_chunk, parts) for succ in part]
            for n, i in enumerate(batch):
                s = m.decode(keys[i])
                d = depth_of[i] + 1
                if expanded is None:
                    succ_iter = ((r, b, t, _check_transition(m, s, r, b, t)) for r, b, t in m.successors(s))
                else:
                    succ_iter = ((m.rules[ri], b, m.decode(tk),
                                  None if bn is None else TransitionInvariant(bn, None, bk))
                                 for ri, b, tk, bn, bk in expanded[n])
                any_succ = False
                for r, b, t, bad_t in succ_iter:
                    any_succ = True
                    transitions += 1
                    if bad_t is not None:
                        return report(bad_t.kind, cex_to(i, bad_t.kind, bad_t.name, (r, b, t)), bad_t.name)
                    t = canon(t)
                    j, new = add(t, i, d)
                    if not new:
                        continue
                    bad = _check_state(m, t)
                    if bad is not None:
                        return report(bad.kind, cex_to(j, bad.kind, bad.name), bad.name)
                    frontier.append(j)
                if not any_succ and check_deadlock and not (m.accepting and m.accepting(s)):
                    return report(DEADLOCK, cex_to(i, DEADLOCK, "no rule enabled"), "deadlock")
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    return report(PASS)


def _rebuild(m: Model, targets: List[State], symmetry: bool) -> List[Step]:
    """Recover rule bindings along a chain of visited states.

    Returns a list whose first entry carries the concrete initial state; with
    symmetry reduction each hop is matched up to canonical form, which yields
    a concrete path that replays without canonicalization.
    """
    key = (lambda s: m.encode(canonicalize(m, s))) if symmetry else m.encode
    cur = targets[0]
    steps = [Step("", (), cur)]
    for tgt in targets[1:]:
        want = key(tgt)
        for r, b, t in m.successors(cur):
            if key(t) == want:
                steps.append(Step(r.name, b, t))
                cur = t
                break
        else:  # pragma: no cover - would mean a nondeterministic model
            raise ReplayError(len(steps), "parent link has no matching successor")
    return steps


def replay(m: Model, cex: Counterexample, strict: bool = False) -> bool:
    """True iff every step is an enabled rule binding producing the recorded state."""
    try:
        replay_or_raise(m, cex)
        return True
    except ReplayError:
        if strict:
            raise
        return False


def replay_or_raise(m: Model, cex: Counterexample) -> State:
    if not any(m.encode(cex.initial) == m.encode(s0) for s0 in m.initial):
        raise ReplayError(0, "not an initial state")
    cur = cex.initial
    for k, st in enumerate(cex.steps, 1):
        r = m.rule_index.get(st.rule)
        if r is None:
            raise ReplayError(k, f"unknown rule {st.rule}")
        want = m.encode(st.state)
        ok = False
        enabled = False
        for b, t in r.successors(cur):
            if tuple(b) == tuple(st.binding):
                enabled = True
                if m.encode(t) == want:
                    ok = True
                    break
        if not ok:
            raise ReplayError(k, "guard does not hold" if not enabled else "effect differs from recorded state")
        cur = st.state
    return cur


def enabled_count(m: Model, s: State) -> int:
    return sum(1 for _ in m.successors(s))


def format_counterexample(m: Model, cex: Counterexample) -> str:
    cfg = " ".join(f"{k}={v}" for k, v in sorted(m.config.items()))
    lines = [f"# model {m.name}", f"# config {cfg}", f"# verdict {cex.kind}", f"# reason {cex.reason}",
             f"# steps {len(cex.steps)}", "state 0"]
    lines += ["  " + ln for ln in m.dump(cex.initial).splitlines()]
    for k, st in enumerate(cex.steps, 1):
        r = m.rule_index[st.rule]
        lines.append(f"rule {st.rule} {r.format_binding(st.binding)}".rstrip())
        lines.append(f"state {k}")
        lines += ["  " + ln for ln in m.dump(st.state).splitlines()]
    return "\n".join(lines) + "\n"


def write_counterexample(m: Model, cex: Counterexample, path) -> str:
    from pathlib import Path
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(format_counterexample(m, cex))
    return str(p)
