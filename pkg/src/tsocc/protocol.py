"""TSO-CC without timestamps, as a guarded-command model with a TSO-LB shadow.

Caches, a directory and one unordered bounded message buffer per node.  The
access counter is abstracted: a read hit on a Shared line may either hit or
re-fetch.  Every observable action also steps the shadow TSO-LB state (see
:mod:`tsocc.refinement`); a read whose value the shadow cannot produce sets the
error flag, which the ``Match`` invariant reports.

State layout (a flat tuple of ints):

====================  ===========================================
caches                per (c, a): state, value, pending write
directory             per a: state, value, owner, requester
network               per node (caches, then directory): ``net_max``
                      message codes, sorted descending, 0 = empty
shadow                TSO-LB locals then global
error flag            0 ok, 1 Match failed, 2 unhandled message
====================  ===========================================
"""

from __future__ import annotations

from array import array
from typing import Iterator, List, Optional, Sequence, Tuple

from .mc import PROTOCOL_ERROR, Invariant, Model, Rule, TransitionInvariant
from .refinement import ShadowLayout
from .tsolb import TsoLbState

# cache line states
I, S, E, M, WS, WX = range(6)
CACHE_STATES = ("I", "S", "E", "M", "WS", "WX")
# directory states
DI, DS, DE, DWE, DWA, DWSD = range(6)
DIR_STATES = ("I", "S", "E", "WE", "WA", "WSd")
# message types
GETS, GETX, DATAS, DATAE, DATAX, DATA, ACK, FWDS, FWDX = range(1, 10)
MSG_TYPES = {GETS: "GetS", GETX: "GetX", DATAS: "DataS", DATAE: "DataE", DATAX: "DataX",
             DATA: "Data", ACK: "Ack", FWDS: "FwdS", FWDX: "FwdX"}
GRANTS = (DATAS, DATAE, DATAX)

NOBODY = 255
ERR_NONE, ERR_MATCH, ERR_PROTOCOL = 0, 1, 2

MUTATIONS = ("no-self-invalidation", "no-stall", "no-store-write-e")

# (line state, message type) pairs a cache knows how to handle
CACHE_HANDLED = {(WS, DATAS), (WS, DATAE), (WX, DATAX), (E, FWDS), (M, FWDS), (E, FWDX), (M, FWDX)}


class ConfigError(ValueError):
    pass


class TsoCC:
    """Layout, rule families and invariants for one configuration.

    ``with_other`` reserves node id ``procs`` for the abstract node of the
    parameterized model; messages addressed to it are dropped.
    """

    def __init__(self, procs: int, addrs: int, values: int, net_max: Optional[int] = None,
                 mutation: Optional[str] = None, with_other: bool = False):
        if procs < 1 or addrs < 1 or values < 2:
            raise ConfigError("need procs >= 1, addrs >= 1, values >= 2")
        if net_max is None:
            net_max = 2 * procs
        if net_max < 1:
            raise ConfigError("net_max must be positive")
        if mutation is not None and mutation not in MUTATIONS:
            raise ConfigError(f"unknown mutation {mutation!r}; choose from {', '.join(MUTATIONS)}")
        self.P, self.A, self.V, self.NM = procs, addrs, values, net_max
        self.mutation = mutation
        self.with_other = with_other
        self.OTHER = procs
        self.DIR = procs + 1
        self.X = procs + 2
        self.D = 3 * procs * addrs
        self.N = self.D + 4 * addrs
        self.shadow = ShadowLayout(procs, addrs, self.N + (procs + 1) * net_max)
        self.ERR = self.shadow.local_off + self.shadow.size
        self.size = self.ERR + 1
        self.max_code = 9 * self.X * addrs * values
        self.wide = self.max_code >= 256 or values > 255 or procs >= NOBODY - 2
        self.decode_msg: List[Optional[Tuple[int, int, int, int]]] = [None]
        for mt in range(1, 10):
            for x in range(self.X):
                for a in range(addrs):
                    for v in range(values):
                        self.decode_msg.append((mt, x, a, v))

    # ------------------------------------------------------------------ layout
    def code(self, mt: int, x: int, a: int, v: int = 0) -> int:
        return 1 + (((mt - 1) * self.X + x) * self.A + a) * self.V + v

    def line(self, c: int, a: int) -> int:
        return 3 * (c * self.A + a)

    def dirent(self, a: int) -> int:
        return self.D + 4 * a

    def buf(self, node: int) -> int:
        """Offset of ``node``'s message buffer (cache id or ``self.DIR``)."""
        return self.N + (self.P if node == self.DIR else node) * self.NM

    def encode(self, s: Tuple[int, ...]) -> bytes:
        return array("H", s).tobytes() if self.wide else bytes(s)

    def decode(self, k: bytes) -> Tuple[int, ...]:
        if self.wide:
            a = array("H")
            a.frombytes(k)
            return tuple(a)
        return tuple(k)

    def initial(self) -> Tuple[int, ...]:
        l = [0] * self.size
        for a in range(self.A):
            d = self.dirent(a)
            l[d + 2] = NOBODY
            l[d + 3] = NOBODY
        return tuple(l)

    # ----------------------------------------------------------------- network
    def has_space(self, s: Sequence[int], node: int) -> bool:
        if node == self.OTHER:
            return True
        return s[self.buf(node) + self.NM - 1] == 0

    def push(self, l: List[int], node: int, code: int) -> None:
        if node == self.OTHER:
            return
        b = self.buf(node)
        items = [x for x in l[b:b + self.NM] if x]
        items.append(code)
        items.sort(reverse=True)
        items += [0] * (self.NM - len(items))
        l[b:b + self.NM] = items

    def pop(self, l: List[int], node: int, code: int) -> None:
        b = self.buf(node)
        slots = l[b:b + self.NM]
        slots.remove(code)
        slots.append(0)
        l[b:b + self.NM] = slots

    def messages(self, s: Sequence[int], node: int) -> Iterator[int]:
        """Distinct message codes buffered at ``node``."""
        b = self.buf(node)
        prev = 0
        for k in range(b, b + self.NM):
            x = s[k]
            if x == 0:
                return
            if x != prev:
                yield x
                prev = x

    def all_messages(self, s: Sequence[int]) -> Iterator[Tuple[int, Tuple[int, int, int, int]]]:
        """(destination, decoded message) for every buffered message, with repeats."""
        for n in list(range(self.P)) + [self.DIR]:
            b = self.buf(n)
            for k in range(b, b + self.NM):
                x = s[k]
                if x == 0:
                    break
                yield n, self.decode_msg[x]

    # -------------------------------------------------------------- protocol
    def self_invalidate(self, l: List[int], c: int, a: int) -> None:
        """Every other Shared line of ``c`` drops to Invalid."""
        for a2 in range(self.A):
            if a2 != a:
                i = self.line(c, a2)
                if l[i] == S:
                    l[i] = I
                    l[i + 1] = 0

    def is_owner(self, s: Sequence[int], c: int, a: int) -> bool:
        d = self.dirent(a)
        return s[d] in (DE, DWE) and s[d + 2] == c

    def match_ok(self, s: Sequence[int]) -> bool:
        return s[self.ERR] != ERR_MATCH

    def shadow_state(self, s: Sequence[int]) -> TsoLbState:
        return self.shadow.to_state(s)

    def _processor_rules(self) -> List[Rule]:
        P, A, V = self.P, self.A, self.V
        sh = self.shadow
        ERR, DIR = self.ERR, self.DIR
        line, has_space, push, code = self.line, self.has_space, self.push, self.code
        no_store_e = self.mutation == "no-store-write-e"

        def lines(s, states):
            for c in range(P):
                for a in range(A):
                    if s[line(c, a)] in states:
                        yield c, a

        def read_fetch(st):
            def succ(s):
                if not has_space(s, DIR):
                    return
                for c, a in lines(s, (st,)):
                    l = list(s)
                    i = line(c, a)
                    l[i], l[i + 1] = WS, 0
                    push(l, DIR, code(GETS, c, a))
                    yield (c, a), tuple(l)
            return succ

        def read_hit(st):
            def succ(s):
                for c, a in lines(s, (st,)):
                    l = list(s)
                    if not sh.verify(l, c, a, s[line(c, a) + 1]):
                        l[ERR] = ERR_MATCH
                    yield (c, a), tuple(l)
            return succ

        def write_hit(st):
            def succ(s):
                for c, a in lines(s, (st,)):
                    for v in range(V):
                        l = list(s)
                        i = line(c, a)
                        l[i], l[i + 1] = M, v
                        if not (no_store_e and st == E):
                            sh.store(l, c, a, v)
                        yield (c, a, v), tuple(l)
            return succ

        def write_miss(st):
            def succ(s):
                if not has_space(s, DIR):
                    return
                for c, a in lines(s, (st,)):
                    for v in range(V):
                        l = list(s)
                        i = line(c, a)
                        l[i], l[i + 1], l[i + 2] = WX, 0, v
                        push(l, DIR, code(GETX, c, a))
                        yield (c, a, v), tuple(l)
            return succ

        ca, cav = ("c", "a"), ("c", "a", "v")
        return [
            Rule("Read-I", ca, successors=read_fetch(I)),
            Rule("Read-S-hit", ca, successors=read_hit(S), observable=True),
            Rule("Read-S-max", ca, successors=read_fetch(S)),
            Rule("Read-E", ca, successors=read_hit(E), observable=True),
            Rule("Read-M", ca, successors=read_hit(M), observable=True),
            Rule("Write-E", cav, successors=write_hit(E), observable=True),
            Rule("Write-M", cav, successors=write_hit(M), observable=True),
            Rule("Write-I", cav, successors=write_miss(I)),
            Rule("Write-S", cav, successors=write_miss(S)),
        ]

    # The receive effects are shared with the abstract rules of the
    # parameterized model, which deliver messages from the abstract node
    # without buffering them.
    def recv_grant(self, l: List[int], c: int, a: int, mt: int, v: int) -> bool:
        """WS+DataS/DataE or WX+DataX at cache ``c``.  False if the Ack cannot be sent."""
        if not self.has_space(l, self.DIR):
            return False
        i = self.line(c, a)
        if mt == DATAX:
            w = l[i + 2]
            l[i], l[i + 1], l[i + 2] = M, w, 0
            self.shadow.store(l, c, a, w)
        else:
            l[i], l[i + 1] = (S if mt == DATAS else E), v
            if not self.shadow.verify(l, c, a, v):
                l[self.ERR] = ERR_MATCH
        self.push(l, self.DIR, self.code(ACK, c, a))
        if not (mt == DATAS and self.mutation == "no-self-invalidation"):
            self.self_invalidate(l, c, a)
        return True

    def dir_get(self, l: List[int], a: int, mt: int, r: int) -> bool:
        """Directory handles GetS/GetX from requester ``r``.  False when stalled or blocked."""
        d = self.dirent(a)
        st = l[d]
        if self.mutation == "no-stall":
            st = {DWE: DE, DWA: DS}.get(st, st)
        if st in (DI, DS):
            if mt == GETS and st == DS:
                if not self.has_space(l, r):
                    return False
                self.push(l, r, self.code(DATAS, self.DIR, a, l[d + 1]))
                l[d], l[d + 3] = DWA, r
                return True
            if not self.has_space(l, r):
                return False
            self.push(l, r, self.code(DATAE if mt == GETS else DATAX, self.DIR, a, l[d + 1]))
            l[d], l[d + 1], l[d + 2], l[d + 3] = DWE, 0, r, NOBODY
            return True
        if st == DE:
            owner = l[d + 2]
            if not self.has_space(l, owner):
                return False
            self.push(l, owner, self.code(FWDS if mt == GETS else FWDX, r, a))
            if mt == GETS:
                l[d], l[d + 3] = DWSD, r
            else:
                l[d], l[d + 2], l[d + 3] = DWE, r, NOBODY
            return True
        return False

    def dir_data(self, l: List[int], a: int, v: int) -> bool:
        """WSd+Data(v): store, forward DataS to the remembered requester."""
        d = self.dirent(a)
        r = l[d + 3]
        if not self.has_space(l, r):
            return False
        self.push(l, r, self.code(DATAS, self.DIR, a, v))
        l[d], l[d + 1], l[d + 2] = DWA, v, NOBODY
        return True

    def dir_ack(self, l: List[int], a: int) -> None:
        d = self.dirent(a)
        if l[d] == DWE:
            l[d] = DE
        else:
            l[d], l[d + 3] = DS, NOBODY

    def _receive_rules(self) -> List[Rule]:
        P = self.P
        DIR, ERR = self.DIR, self.ERR
        dec, line, dirent = self.decode_msg, self.line, self.dirent

        def cache_grant(mt, want):
            def succ(s):
                for c in range(P):
                    for x in self.messages(s, c):
                        m, src, a, v = dec[x]
                        if m != mt or s[line(c, a)] != want:
                            continue
                        l = list(s)
                        self.pop(l, c, x)
                        if self.recv_grant(l, c, a, mt, v):
                            yield (c, a, src, v), tuple(l)
            return succ

        def cache_fwd(mt):
            def succ(s):
                for c in range(P):
                    for x in self.messages(s, c):
                        m, r, a, _ = dec[x]
                        if m != mt or s[line(c, a)] not in (E, M):
                            continue
                        i = line(c, a)
                        dest = DIR if mt == FWDS else r
                        if not self.has_space(s, dest):
                            continue
                        l = list(s)
                        self.pop(l, c, x)
                        if mt == FWDS:
                            self.push(l, DIR, self.code(DATA, c, a, s[i + 1]))
                            l[i] = S
                        else:
                            self.push(l, r, self.code(DATAX, c, a, s[i + 1]))
                            l[i], l[i + 1] = I, 0
                        yield (c, a, r), tuple(l)
            return succ

        def dir_get(mt):
            def succ(s):
                for x in self.messages(s, DIR):
                    m, r, a, _ = dec[x]
                    if m != mt:
                        continue
                    l = list(s)
                    self.pop(l, DIR, x)
                    if self.dir_get(l, a, mt, r):
                        yield (a, r), tuple(l)
            return succ

        def dir_data(s):
            for x in self.messages(s, DIR):
                m, src, a, v = dec[x]
                if m != DATA or s[dirent(a)] != DWSD:
                    continue
                l = list(s)
                self.pop(l, DIR, x)
                if self.dir_data(l, a, v):
                    yield (a, src, v), tuple(l)

        def dir_ack(s):
            for x in self.messages(s, DIR):
                m, src, a, _ = dec[x]
                if m != ACK or s[dirent(a)] not in (DWE, DWA):
                    continue
                l = list(s)
                self.pop(l, DIR, x)
                self.dir_ack(l, a)
                yield (a, src), tuple(l)

        def unhandled(s):
            for c in range(P):
                for x in self.messages(s, c):
                    m, _, a, _ = dec[x]
                    if (s[line(c, a)], m) not in CACHE_HANDLED:
                        l = list(s)
                        l[ERR] = ERR_PROTOCOL
                        yield (f"c{c}", self.format_msg(x)), tuple(l)
            for x in self.messages(s, DIR):
                m, _, a, _ = dec[x]
                st = s[dirent(a)]
                ok = m in (GETS, GETX) or (m == DATA and st == DWSD) or (m == ACK and st in (DWE, DWA))
                if not ok:
                    l = list(s)
                    l[ERR] = ERR_PROTOCOL
                    yield ("dir", self.format_msg(x)), tuple(l)

        grant = ("c", "a", "src", "v")
        return [
            Rule("Cache-Recv-DataS", grant, successors=cache_grant(DATAS, WS), observable=True),
            Rule("Cache-Recv-DataE", grant, successors=cache_grant(DATAE, WS), observable=True),
            Rule("Cache-Recv-DataX", grant, successors=cache_grant(DATAX, WX), observable=True),
            Rule("Cache-Recv-FwdS", ("c", "a", "req"), successors=cache_fwd(FWDS)),
            Rule("Cache-Recv-FwdX", ("c", "a", "req"), successors=cache_fwd(FWDX)),
            Rule("Dir-Recv-GetS", ("a", "src"), successors=dir_get(GETS)),
            Rule("Dir-Recv-GetX", ("a", "src"), successors=dir_get(GETX)),
            Rule("Dir-Recv-Data", ("a", "src", "v"), successors=dir_data),
            Rule("Dir-Recv-Ack", ("a", "src"), successors=dir_ack),
            Rule("Recv-Unhandled", ("node", "msg"), successors=unhandled),
        ]

    def rules(self) -> List[Rule]:
        return self._processor_rules() + self._receive_rules()

    # -------------------------------------------------------------- invariants
    def owner_coupling(self, s: Sequence[int]) -> bool:
        for a in range(self.A):
            d = self.dirent(a)
            st, owner = s[d], s[d + 2]
            if st in (DE, DWE):
                if owner == NOBODY:
                    return False
                if owner >= self.P:
                    continue
                cst = s[self.line(owner, a)]
                if st == DE and cst not in (E, M):
                    return False
                if st == DWE and cst not in (WS, WX, E, M):
                    return False
        return True

    def single_grant(self, s: Sequence[int]) -> bool:
        seen = set()
        for _, (m, _, a, _) in self.all_messages(s):
            if m in GRANTS:
                if a in seen:
                    return False
                seen.add(a)
        return True

    def net_bound(self, s: Sequence[int]) -> bool:
        for n in list(range(self.P)) + [self.DIR]:
            b = self.buf(n)
            slots = s[b:b + self.NM]
            if list(slots) != sorted(slots, reverse=True):
                return False
        return True

    def lines_well_formed(self, s: Sequence[int]) -> bool:
        for c in range(self.P):
            for a in range(self.A):
                i = self.line(c, a)
                st, v, w = s[i], s[i + 1], s[i + 2]
                if st != WX and w != 0:
                    return False
                if st in (I, WS, WX) and v != 0:
                    return False
        return True

    def self_invalidation(self, s, rule: str, b, t) -> bool:
        if rule not in ("Cache-Recv-DataS", "Cache-Recv-DataE", "Cache-Recv-DataX"):
            return True
        c, a = b[0], b[1]
        return all(t[self.line(c, a2)] != S for a2 in range(self.A) if a2 != a)

    def invariants(self) -> List[Invariant]:
        return [
            Invariant("Match", self.match_ok),
            Invariant("ProtocolError", lambda s: s[self.ERR] != ERR_PROTOCOL, PROTOCOL_ERROR),
            Invariant("DirOwnerCoupling", self.owner_coupling),
            Invariant("SingleGrantInFlight", self.single_grant),
            Invariant("NetBound", self.net_bound),
            Invariant("LineWellFormed", self.lines_well_formed),
        ]

    def transition_invariants(self) -> List[TransitionInvariant]:
        return [TransitionInvariant("SelfInvalidation", self.self_invalidation)]

    # ---------------------------------------------------------------- symmetry
    def permute(self, s: Sequence[int], perm: Tuple[int, ...]) -> Tuple[int, ...]:
        """Rename processor ``c`` to ``perm[c]`` everywhere."""
        P, A = self.P, self.A
        l = list(s)

        def ren(x):
            return perm[x] if x < P else x

        for c in range(P):
            src, dst = self.line(c, 0), self.line(perm[c], 0)
            l[dst:dst + 3 * A] = s[src:src + 3 * A]
        for a in range(A):
            d = self.dirent(a)
            l[d + 2] = ren(s[d + 2])
            l[d + 3] = ren(s[d + 3])
        dec = self.decode_msg
        for c in list(range(P)) + [self.DIR]:
            src = self.buf(c)
            dst = self.buf(perm[c] if c < P else c)
            msgs = []
            for x in s[src:src + self.NM]:
                if x:
                    m, y, a, v = dec[x]
                    x = self.code(m, ren(y), a, v)
                msgs.append(x)
            msgs.sort(reverse=True)
            l[dst:dst + self.NM] = msgs
        sh = self.shadow
        for c in range(P):
            src, dst = sh.local_off + c * A, sh.local_off + perm[c] * A
            l[dst:dst + A] = s[src:src + A]
        return tuple(l)

    # ------------------------------------------------------------------- dumps
    def node_name(self, x: int) -> str:
        if x < self.P:
            return f"c{x}"
        if x == self.OTHER:
            return "Other"
        if x == self.DIR:
            return "dir"
        return "-"

    def format_msg(self, x: int) -> str:
        m, y, a, v = self.decode_msg[x]
        name = MSG_TYPES[m]
        if m in (FWDS, FWDX):
            return f"{name}(a={a},to={self.node_name(y)})"
        if m in (DATAS, DATAE, DATAX, DATA):
            return f"{name}(a={a},src={self.node_name(y)},v={v})"
        return f"{name}(a={a},src={self.node_name(y)})"

    def dump(self, s: Sequence[int]) -> str:
        out = []
        for c in range(self.P):
            for a in range(self.A):
                i = self.line(c, a)
                st = CACHE_STATES[s[i]]
                extra = f" pending={s[i + 2]}" if s[i] == WX else ""
                out.append(f"c{c}.{a}: {st} v={s[i + 1]}{extra}")
        for a in range(self.A):
            d = self.dirent(a)
            out.append(f"dir.{a}: {DIR_STATES[s[d]]} v={s[d + 1]} owner={self.node_name(s[d + 2])} "
                       f"req={self.node_name(s[d + 3])}")
        for n in list(range(self.P)) + [self.DIR]:
            b = self.buf(n)
            msgs = [self.format_msg(x) for x in s[b:b + self.NM] if x]
            out.append(f"net.{self.node_name(n)}: {' '.join(msgs) if msgs else '-'}")
        out.append("shadow " + self.shadow_state(s).dump())
        if s[self.ERR]:
            out.append("error " + ("Match" if s[self.ERR] == ERR_MATCH else "unhandled-message"))
        return "\n".join(out)

    def model(self, name: str = "tso-cc", symmetric: bool = True) -> Model:
        return Model(name=name, initial=[self.initial()], rules=self.rules(),
                     invariants=self.invariants(), transition_invariants=self.transition_invariants(),
                     encode=self.encode, decode=self.decode, dump=self.dump,
                     permute=self.permute if symmetric else None, n_procs=self.P,
                     config={"procs": self.P, "addrs": self.A, "vals": self.V, "net_max": self.NM,
                             "mutation": self.mutation or "none"})


def build_model(procs: int, addrs: int, values: int, net_max: Optional[int] = None,
                mutation: Optional[str] = None, match_only: bool = False,
                symmetric: bool = True) -> Model:
    """The protocol as an mc-core Model; ``model.protocol`` is the :class:`TsoCC`.

    ``match_only`` keeps the Match invariant alone and drops the
    unhandled-message rule, isolating refinement failures from structural
    ones (explore it with ``check_deadlock=False``).
    """
    cc = TsoCC(procs, addrs, values, net_max, mutation)
    m = cc.model(symmetric=symmetric)
    if match_only:
        m = Model(name=m.name + "-match", initial=m.initial,
                  rules=[r for r in m.rules if r.name != "Recv-Unhandled"],
                  invariants=[i for i in m.invariants if i.name == "Match"],
                  encode=m.encode, decode=m.decode, dump=m.dump, permute=m.permute,
                  n_procs=m.n_procs, config=dict(m.config, checks="match"))
    m.protocol = cc
    return m


def swmr_witness(procs: int = 2, addrs: int = 2, values: int = 2, net_max: Optional[int] = None):
    """Explore until a state with one cache in M and another in S for one address.

    Returns ``(cc, model, report)``; the final state of the report's
    counterexample is the witness.  Implemented as an invariant whose violation is the goal.
    """
    from .mc import explore
    cc = TsoCC(procs, addrs, values, net_max)
    m = cc.model("tso-cc-swmr")
    m.protocol = cc

    def swmr(s):
        for a in range(cc.A):
            sts = [s[cc.line(c, a)] for c in range(cc.P)]
            if M in sts and S in sts:
                return False
        return True

    m.invariants = list(m.invariants) + [Invariant("SWMR", swmr)]
    rep = explore(m)
    return cc, m, rep
