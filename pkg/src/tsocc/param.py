"""Parameterized check: N concrete caches plus one stateless abstract node.

The abstract node ``Other`` stands for any number of further caches.  It keeps
no state, so it may deliver any message a cache could send, whenever the
receiver would handle it:

==========================  ==============================================
Cache-Recv-DataX-Abs c a v  DataX from Other to cache c in WX
Dir-Recv-GetS-Abs a         GetS from Other
Dir-Recv-GetX-Abs a         GetX from Other
Dir-Recv-Ack-Abs a          Ack from Other to a WE/WA entry
Dir-Recv-Data-Abs a v       Data from Other to a WSd entry (an abstract
                            write: tso_store_abs)
==========================  ==============================================

Messages the concrete nodes address to Other are dropped.  Spurious
abstract messages are cut by *restrictions*; each restriction names the
non-interference *lemmas* that justify it, and every lemma is checked as an
invariant both inside the abstract run and on the plain concrete model.

Restriction and lemma text::

    # comment
    restrict <rule> when <predicate> [by <lemma>, ...] [-- rationale]
    lemma <name>: forall <vars>: <predicate>

Predicates are Python-like expressions with ``=`` for equality, ``=>`` for
implication and ``and``/``or``/``not``.  Vocabulary: ``cache[c][a].state``,
``.val``, ``.pending``; ``dir[a].state``, ``.val``, ``.owner``, ``.req``;
``net[n][a][i].msgType``, ``.src``, ``.val``, ``.to`` (empty slots have
``msgType = None``); ``IsOwner(n, a)`` (directory in E or WE with owner ``n``;
in WSd the owner field still names the node the FwdS went to); ``InFlight(type, a)`` counts buffered
messages of a type (or tuple of types) for ``a``.  State and message names
(``WX``, ``WSd``, ``DataX``, ...), ``Dir``, ``Other`` and ``None`` are constants.
Quantified variables take their domain from their first letter: ``n`` nodes
(caches and ``Dir``), ``c``/``d`` caches, ``a``/``b`` addresses, ``i``/``j``
buffer slots, ``v``/``w`` values.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

from .mc import INVARIANT_VIOLATION, ExplorationReport, Invariant, Model, Rule, explore
from .protocol import (CACHE_STATES, DATAX, DIR_STATES, DWA, DWE, DWSD, GETS, GETX, MSG_TYPES, NOBODY, WX,
                       TsoCC)

ABSTRACT_RULES = ("Cache-Recv-DataX-Abs", "Dir-Recv-GetS-Abs", "Dir-Recv-GetX-Abs",
                  "Dir-Recv-Ack-Abs", "Dir-Recv-Data-Abs")
ABSTRACT_PARAMS = {"Cache-Recv-DataX-Abs": ("c", "a", "v"), "Dir-Recv-GetS-Abs": ("a",),
                   "Dir-Recv-GetX-Abs": ("a",), "Dir-Recv-Ack-Abs": ("a",),
                   "Dir-Recv-Data-Abs": ("a", "v")}


class DslError(ValueError):
    def __init__(self, msg: str, line: int = 0):
        super().__init__(f"line {line}: {msg}" if line else msg)
        self.line = line


# --------------------------------------------------------------------- views
class Line(NamedTuple):
    state: str
    val: int
    pending: Optional[int]


class DirView(NamedTuple):
    state: str
    val: int
    owner: Any
    req: Any


class Msg(NamedTuple):
    msgType: Optional[str]
    src: Any = None
    val: Optional[int] = None
    to: Any = None
    addr: Optional[int] = None


EMPTY = Msg(None)


class StateView:
    """Read-only names over a protocol state, built lazily for predicate evaluation."""

    _last: Optional["StateView"] = None

    def __init__(self, cc: TsoCC, s: Sequence[int]):
        self.cc = cc
        self.s = s

    @classmethod
    def of(cls, cc: TsoCC, s: Sequence[int]) -> "StateView":
        # the explorer checks every lemma (and restriction) on the same state in turn
        v = cls._last
        if v is None or v.s is not s or v.cc is not cc:
            v = cls._last = cls(cc, s)
        return v

    def node(self, x: int) -> Any:
        cc = self.cc
        if x == NOBODY:
            return None
        if x < cc.P:
            return x
        return "Other" if x == cc.OTHER else "Dir"

    @cached_property
    def cache(self) -> List[List[Line]]:
        cc, s = self.cc, self.s
        out = []
        for c in range(cc.P):
            row = []
            for a in range(cc.A):
                i = cc.line(c, a)
                row.append(Line(CACHE_STATES[s[i]], s[i + 1], s[i + 2] if s[i] == WX else None))
            out.append(row)
        return out

    @cached_property
    def dir(self) -> List[DirView]:
        cc, s = self.cc, self.s
        out = []
        for a in range(cc.A):
            d = cc.dirent(a)
            out.append(DirView(DIR_STATES[s[d]], s[d + 1], self.node(s[d + 2]), self.node(s[d + 3])))
        return out

    @cached_property
    def net(self) -> Dict[Any, List[List[Msg]]]:
        cc, s = self.cc, self.s
        out = {}
        for n in list(range(cc.P)) + [cc.DIR]:
            per = [[] for _ in range(cc.A)]
            b = cc.buf(n)
            for x in s[b:b + cc.NM]:
                if not x:
                    break
                mt, y, a, v = cc.decode_msg[x]
                fwd = mt in (8, 9)
                per[a].append(Msg(MSG_TYPES[mt], "Dir" if fwd else self.node(y), v if mt in (3, 4, 5, 6) else None,
                                  self.node(y) if fwd else None, a))
            out["Dir" if n == cc.DIR else n] = [_Padded(p, cc.NM) for p in per]
        return out

    def is_owner(self, n, a) -> bool:
        d = self.dir[a]
        return d.state in ("E", "WE") and d.owner == n

    def in_flight(self, t, a) -> int:
        types = (t,) if isinstance(t, str) else tuple(t)
        return sum(1 for per in self.net.values() for m in per[a] if m.msgType in types)

    @cached_property
    def namespace(self) -> Dict[str, Any]:
        ns = dict(_CONSTANTS)
        ns.update(__builtins__={}, next=next, cache=_Lazy(self, "cache"), dir=_Lazy(self, "dir"),
                  net=_Lazy(self, "net"), IsOwner=self.is_owner, InFlight=self.in_flight)
        return ns


class _Padded(list):
    """A message list that reads as ``EMPTY`` past its end (a fixed-size buffer)."""

    def __init__(self, items, size):
        super().__init__(items)
        self.size = size

    def __getitem__(self, i):
        if isinstance(i, int) and len(self) <= i < self.size:
            return EMPTY
        return super().__getitem__(i)


# ----------------------------------------------------------------------- DSL
_ALLOWED = (ast.Expression, ast.BoolOp, ast.And, ast.Or, ast.UnaryOp, ast.Not, ast.USub, ast.Compare, ast.Eq,
            ast.NotEq, ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.In, ast.NotIn, ast.Is, ast.IsNot, ast.Name,
            ast.Load, ast.Constant, ast.Attribute, ast.Subscript, ast.Call, ast.BinOp, ast.Add, ast.Sub,
            ast.Tuple, ast.IfExp)
_ATTRS = {"state", "val", "pending", "owner", "req", "msgType", "src", "to", "addr"}
_FUNCS = {"IsOwner", "InFlight"}
_CONSTANTS = {name: name for name in CACHE_STATES + DIR_STATES + tuple(MSG_TYPES.values()) + ("Dir", "Other")}
_STATE_NAMES = {"cache", "dir", "net"}


def _split_implication(text: str) -> str:
    depth = 0
    for k in range(len(text) - 1):
        ch = text[k]
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        elif depth == 0 and text.startswith("=>", k):
            return f"(not ({text[:k]})) or ({_split_implication(text[k + 2:])})"
    return text


def _to_python(text: str) -> str:
    text = text.replace("∧", " and ").replace("∨", " or ").replace("¬", " not ").replace("⟹", "=>")
    text = _split_implication(text)
    return re.sub(r"(?<![<>=!])=(?![=>])", "==", text)


class Predicate:
    """A compiled predicate over a :class:`StateView` and bound variables."""

    def __init__(self, text: str, free: Sequence[str] = (), line: int = 0):
        self.text = text.strip()
        self.free = tuple(free)
        src = _to_python(self.text)
        try:
            tree = ast.parse(src, mode="eval")
        except SyntaxError as e:
            raise DslError(f"cannot parse predicate {self.text!r}: {e.msg}", line) from None
        for node in ast.walk(tree):
            if not isinstance(node, _ALLOWED):
                raise DslError(f"{type(node).__name__} not allowed in {self.text!r}", line)
            if isinstance(node, ast.Attribute) and node.attr not in _ATTRS:
                raise DslError(f"unknown field .{node.attr}", line)
            if isinstance(node, ast.Call):
                if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                    raise DslError(f"unknown function in {self.text!r}", line)
            if isinstance(node, ast.Name) and node.id not in _FUNCS:
                if node.id not in _CONSTANTS and node.id not in _STATE_NAMES and node.id not in self.free \
                        and node.id != "None":
                    raise DslError(f"unknown name {node.id!r}", line)
        self.code = compile(tree, "<predicate>", "eval")
        self.src = src
        self._search = None

    def __call__(self, view: StateView, env: Dict[str, Any]) -> bool:
        ns = dict(view.namespace)
        ns.update(env)
        return bool(eval(self.code, ns))

    def first_failure(self, view: StateView, domains: Sequence[Sequence[Any]]) -> Optional[Tuple[Any, ...]]:
        """The first binding of the free variables (in domain order) that falsifies the predicate."""
        if self._search is None:
            loops = " ".join(f"for {v} in _dom{k}" for k, v in enumerate(self.free))
            src = f"next((({', '.join(self.free)},) {loops} if not ({self.src})), None)"
            self._search = compile(src, "<predicate>", "eval")
        ns = dict(view.namespace)
        ns.update((f"_dom{k}", d) for k, d in enumerate(domains))
        return eval(self._search, ns)


class _Lazy:
    def __init__(self, view, attr):
        self.view = view
        self.attr = attr

    def __getitem__(self, k):
        return getattr(self.view, self.attr)[k]


@dataclass
class Restriction:
    rule: str
    predicate: Predicate
    lemmas: Tuple[str, ...] = ()
    rationale: str = ""

    def holds(self, view: StateView, binding: Dict[str, Any]) -> bool:
        return self.predicate(view, binding)


@dataclass
class Lemma:
    name: str
    variables: Tuple[str, ...]
    predicate: Predicate

    def domain(self, var: str, cc: TsoCC):
        k = var[0]
        if k == "n":
            return list(range(cc.P)) + ["Dir"]
        if k in "cd":
            return range(cc.P)
        if k in "ab":
            return range(cc.A)
        if k in "ij":
            return range(cc.NM)
        if k in "vw":
            return range(cc.V)
        raise DslError(f"lemma {self.name}: no domain for variable {var!r}")

    def violation(self, cc: TsoCC, s: Sequence[int]) -> Optional[Dict[str, Any]]:
        """A binding falsifying the lemma in ``s``, or None."""
        doms = [self.domain(v, cc) for v in self.variables]
        if not self.variables:
            return None if self.predicate(StateView.of(cc, s), {}) else {}
        bad = self.predicate.first_failure(StateView.of(cc, s), doms)
        return None if bad is None else dict(zip(self.variables, bad))


_RESTRICT = re.compile(r"^restrict\s+(\S+)\s+when\s+(.*?)(?:\s+by\s+([\w,\s]+?))?(?:\s+--\s*(.*))?$")
_LEMMA = re.compile(r"^lemma\s+(\w+)\s*:\s*forall\s+([\w\s,]*?)\s*:\s*(.*)$")


def parse_rules(text: str) -> Tuple[List[Restriction], List[Lemma]]:
    restrictions: List[Restriction] = []
    lemmas: List[Lemma] = []
    for k, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _RESTRICT.match(line)
        if m:
            rule, pred, by, why = m.groups()
            if rule not in ABSTRACT_PARAMS:
                raise DslError(f"restriction names unknown rule {rule!r}", k)
            names = tuple(x.strip() for x in by.split(",") if x.strip()) if by else ()
            restrictions.append(Restriction(rule, Predicate(pred, ABSTRACT_PARAMS[rule], k), names,
                                            (why or "").strip()))
            continue
        m = _LEMMA.match(line)
        if m:
            name, vars_, pred = m.groups()
            variables = tuple(v for v in re.split(r"[\s,]+", vars_) if v)
            lemmas.append(Lemma(name, variables, Predicate(pred, variables, k)))
            continue
        raise DslError(f"expected 'restrict ... when ...' or 'lemma name: forall ...: ...', got {line!r}", k)
    return restrictions, lemmas


def load_rules(*paths) -> Tuple[List[Restriction], List[Lemma]]:
    restrictions: List[Restriction] = []
    lemmas: List[Lemma] = []
    for p in paths:
        r, l = parse_rules(Path(p).read_text())
        restrictions += r
        lemmas += l
    return restrictions, lemmas


def shipped_paths() -> Tuple[Path, Path]:
    base = resources.files("tsocc") / "data" / "param"
    return Path(str(base / "restrictions.txt")), Path(str(base / "lemmas.txt"))


def check_pairing(restrictions: Sequence[Restriction], lemmas: Sequence[Lemma]) -> List[str]:
    """Problems with the restriction/lemma pairing (empty when every restriction cites a known lemma)."""
    names = {l.name for l in lemmas}
    out = []
    if len(names) != len(lemmas):
        out.append("duplicate lemma names")
    for r in restrictions:
        if not r.lemmas:
            out.append(f"restriction on {r.rule} ({r.predicate.text}) cites no lemma")
        for n in r.lemmas:
            if n not in names:
                out.append(f"restriction on {r.rule} cites unknown lemma {n!r}")
    return out


# ------------------------------------------------------------ abstract model
@dataclass
class AbstractModel:
    cc: TsoCC
    restrictions: List[Restriction]
    lemmas: List[Lemma]
    model: Model = field(init=False)

    def __post_init__(self):
        self.model = self._build()
        self.model.protocol = self.cc

    def _allowed(self, rule: str, s, binding: Dict[str, Any]) -> bool:
        rs = self._by_rule.get(rule)
        if not rs:
            return True
        view = StateView.of(self.cc, s)
        return all(r.holds(view, binding) for r in rs)

    def _abstract_rules(self) -> List[Rule]:
        cc = self.cc
        P, A, V, OTHER = cc.P, cc.A, cc.V, cc.OTHER
        allowed = self._allowed

        def datax(s):
            for c in range(P):
                for a in range(A):
                    if s[cc.line(c, a)] != WX:
                        continue
                    for v in range(V):
                        if not allowed("Cache-Recv-DataX-Abs", s, {"c": c, "a": a, "v": v}):
                            continue
                        l = list(s)
                        if cc.recv_grant(l, c, a, DATAX, v):
                            yield (c, a, v), tuple(l)

        def get(mt, name):
            def succ(s):
                for a in range(A):
                    if not allowed(name, s, {"a": a}):
                        continue
                    l = list(s)
                    if cc.dir_get(l, a, mt, OTHER):
                        yield (a,), tuple(l)
            return succ

        def ack(s):
            for a in range(A):
                if s[cc.dirent(a)] not in (DWE, DWA) or not allowed("Dir-Recv-Ack-Abs", s, {"a": a}):
                    continue
                l = list(s)
                cc.dir_ack(l, a)
                yield (a,), tuple(l)

        def data(s):
            for a in range(A):
                if s[cc.dirent(a)] != DWSD:
                    continue
                for v in range(V):
                    if not allowed("Dir-Recv-Data-Abs", s, {"a": a, "v": v}):
                        continue
                    l = list(s)
                    cc.shadow.store_abs(l, a, v)
                    if cc.dir_data(l, a, v):
                        yield (a, v), tuple(l)

        P_ = ABSTRACT_PARAMS
        return [
            Rule("Cache-Recv-DataX-Abs", P_["Cache-Recv-DataX-Abs"], successors=datax),
            Rule("Dir-Recv-GetS-Abs", P_["Dir-Recv-GetS-Abs"], successors=get(GETS, "Dir-Recv-GetS-Abs")),
            Rule("Dir-Recv-GetX-Abs", P_["Dir-Recv-GetX-Abs"], successors=get(GETX, "Dir-Recv-GetX-Abs")),
            Rule("Dir-Recv-Ack-Abs", P_["Dir-Recv-Ack-Abs"], successors=ack),
            Rule("Dir-Recv-Data-Abs", P_["Dir-Recv-Data-Abs"], successors=data),
        ]

    def _build(self) -> Model:
        self._by_rule: Dict[str, List[Restriction]] = {}
        for r in self.restrictions:
            self._by_rule.setdefault(r.rule, []).append(r)
        base = self.cc.model("tso-cc-param", symmetric=True)
        invs = list(base.invariants) + [lemma_invariant(self.cc, l) for l in self.lemmas]
        cfg = dict(base.config, other=1, restrictions=len(self.restrictions), lemmas=len(self.lemmas))
        return Model(name="tso-cc-param", initial=base.initial, rules=list(base.rules) + self._abstract_rules(),
                     invariants=invs, transition_invariants=base.transition_invariants,
                     encode=base.encode, decode=base.decode, dump=base.dump, permute=base.permute,
                     n_procs=base.n_procs, config=cfg)


def lemma_invariant(cc: TsoCC, lemma: Lemma) -> Invariant:
    return Invariant(f"lemma:{lemma.name}", lambda s: lemma.violation(cc, s) is None, INVARIANT_VIOLATION)


def abstractify(procs: int, addrs: int, values: int, restrictions: Sequence[Restriction] = (),
                lemmas: Sequence[Lemma] = (), net_max: Optional[int] = None) -> AbstractModel:
    problems = [p for p in check_pairing(restrictions, lemmas) if "unknown lemma" in p]
    if problems:
        raise DslError("; ".join(problems))
    cc = TsoCC(procs, addrs, values, net_max, with_other=True)
    return AbstractModel(cc, list(restrictions), list(lemmas))


@dataclass
class ParamReport:
    abstract: ExplorationReport
    concrete: Optional[ExplorationReport]
    pairing: List[str]
    trigger: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.abstract.passed and (self.concrete is None or self.concrete.passed) and not self.pairing


def check_parameterized(am: AbstractModel, max_states: Optional[int] = None, workers: int = 1,
                        symmetry: bool = True, concrete: bool = True) -> ParamReport:
    """Explore the abstract model (Match, structure, lemmas); optionally re-check lemmas concretely."""
    rep = explore(am.model, max_states=max_states, workers=workers, symmetry=symmetry)
    trigger = None
    if rep.counterexample is not None:
        for st in reversed(rep.counterexample.steps):
            if st.rule.endswith("-Abs"):
                trigger = f"{st.rule} {am.model.rule_index[st.rule].format_binding(st.binding)}"
                break
    crep = None
    if concrete:
        crep = check_lemmas_concrete(am.cc.P, am.cc.A, am.cc.V, am.lemmas, net_max=am.cc.NM,
                                     max_states=max_states, workers=workers)
    return ParamReport(rep, crep, check_pairing(am.restrictions, am.lemmas), trigger)


def check_lemmas_concrete(procs: int, addrs: int, values: int, lemmas: Sequence[Lemma],
                          net_max: Optional[int] = None, max_states: Optional[int] = None,
                          workers: int = 1) -> ExplorationReport:
    """Every lemma as an invariant of the plain concrete model (no abstract node)."""
    cc = TsoCC(procs, addrs, values, net_max)
    base = cc.model("tso-cc-lemmas")
    m = Model(name="tso-cc-lemmas", initial=base.initial, rules=base.rules,
              invariants=[lemma_invariant(cc, l) for l in lemmas] + list(base.invariants),
              encode=base.encode, decode=base.decode, dump=base.dump, permute=base.permute,
              n_procs=base.n_procs, config=dict(base.config, lemmas=len(lemmas)))
    m.protocol = cc
    rep = explore(m, max_states=max_states, workers=workers, symmetry=True)
    rep.model_ref = m
    return rep


# ------------------------------------------------------- over-approximation
def project(big: TsoCC, small: TsoCC, s: Sequence[int]) -> Tuple[int, ...]:
    """Drop cache ``small.P`` of ``big`` and rename it to Other.

    Messages the dropped cache sent or is due to receive disappear, since the
    abstract node delivers its messages directly and discards those sent to it.
    The shadow is left zero: abstract writes reach it at a different point.
    """
    P = small.P
    gone = big.P - 1
    assert gone == P

    def ren(x):
        if x == NOBODY:
            return NOBODY
        if x == gone:
            return small.OTHER
        if x == big.DIR:
            return small.DIR
        return x

    l = [0] * small.size
    for c in range(P):
        for a in range(small.A):
            i, j = big.line(c, a), small.line(c, a)
            l[j:j + 3] = s[i:i + 3]
    for a in range(small.A):
        i, j = big.dirent(a), small.dirent(a)
        l[j], l[j + 1], l[j + 2], l[j + 3] = s[i], s[i + 1], ren(s[i + 2]), ren(s[i + 3])
    for n in list(range(P)) + [big.DIR]:
        msgs = []
        b = big.buf(n)
        for x in s[b:b + big.NM]:
            if not x:
                break
            mt, y, a, v = big.decode_msg[x]
            if mt not in (8, 9) and y == gone:
                continue
            msgs.append(small.code(mt, ren(y), a, v))
        msgs.sort(reverse=True)
        dst = small.buf(small.DIR if n == big.DIR else n)
        if len(msgs) > small.NM:
            raise ValueError("projected buffer exceeds the abstract bound")
        l[dst:dst + small.NM] = msgs + [0] * (small.NM - len(msgs))
    return tuple(l)


@dataclass
class OverApproxReport:
    transitions: int
    stutters: int
    matched: int
    failures: List[Tuple[str, str, str]]
    states: int

    @property
    def passed(self) -> bool:
        return not self.failures


def check_overapproximation(procs: int, addrs: int, values: int,
                            restrictions: Sequence[Restriction] = (), net_max: Optional[int] = None,
                            max_failures: int = 5) -> OverApproxReport:
    """Every step of the concrete (procs+1)-cache model maps to an abstract step or a stutter.

    The extra cache plays Other.  Each concrete transition is projected; it
    must either leave the projection unchanged or be matched by some enabled
    rule of the abstract model (restrictions included), comparing states
    without the shadow.
    """
    if net_max is None:
        net_max = 2 * (procs + 1)
    big = TsoCC(procs + 1, addrs, values, net_max)
    # lemmas play no part here, so the citation check of abstractify is skipped
    small = TsoCC(procs, addrs, values, net_max, with_other=True)
    am = AbstractModel(small, list(restrictions), [])
    bm = big.model("tso-cc-big", symmetric=False)
    sh0 = small.shadow.local_off

    def strip(t):
        return t[:sh0] + (0,) * (small.size - sh0)

    seen = {bm.encode(bm.initial[0])}
    frontier = [bm.initial[0]]
    transitions = stutters = matched = 0
    failures: List[Tuple[str, str, str]] = []
    cache: Dict[Tuple[int, ...], set] = {}
    while frontier and len(failures) < max_failures:
        nxt = []
        for s in frontier:
            ps = project(big, small, s)
            for r, b, t in bm.successors(s):
                transitions += 1
                pt = project(big, small, t)
                if r.name == "Recv-Unhandled":
                    continue
                if strip(pt) == strip(ps):
                    stutters += 1
                else:
                    succ = cache.get(ps)
                    if succ is None:
                        succ = {strip(u) for _, _, u in am.model.successors(ps)}
                        cache[ps] = succ
                    if strip(pt) in succ:
                        matched += 1
                    else:
                        failures.append((f"{r.name} {r.format_binding(b)}", small.dump(ps), small.dump(pt)))
                k = bm.encode(t)
                if k not in seen:
                    seen.add(k)
                    nxt.append(t)
            cache.pop(ps, None)
        frontier = nxt
    return OverApproxReport(transitions, stutters, matched, failures, len(seen))
