"""Litmus tests: text format, evaluation under both engines, differential checks.

Format (statements separated by ``;`` or newlines)::

    test fig3
    init x=0 y=0 a=0 b=0
    thread P1 { x <- 1; a <- 1; r1 <- y; r2 <- y; r3 <- b }
    thread P2 { y <- 1; b <- 1; r4 <- x; r5 <- x; r6 <- a }
    observable? r1=0 & r2=1 & r3=0 & r4=0 & r5=1 & r6=0
    expect axiomatic=Observable tsolb=NotObservable

``X <- 3`` writes a constant to address X; ``r <- X`` reads X into register r.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from . import axioms, tsolb

OBSERVABLE = "Observable"
NOT_OBSERVABLE = "NotObservable"
ENGINES = ("axiomatic", "tsolb")

CONSISTENT = "CONSISTENT"
SOUNDNESS_BUG = "SOUNDNESS-BUG"
STRICTNESS_GAP = "STRICTNESS-GAP"

FENCES = {"mfence", "fence", "sfence", "lfence", "sync", "lwsync", "dmb"}


class LitmusSyntaxError(ValueError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {msg}")
        self.line = line
        self.col = col


class UnsupportedFeature(LitmusSyntaxError):
    pass


@dataclass(frozen=True)
class Instr:
    addr: str
    value: Optional[int] = None
    reg: Optional[str] = None

    @property
    def is_write(self) -> bool:
        return self.reg is None

    def __str__(self):
        return f"{self.addr} <- {self.value}" if self.is_write else f"{self.reg} <- {self.addr}"


@dataclass(frozen=True)
class LitmusTest:
    name: str
    init: Dict[str, int]
    threads: Tuple[Tuple[Instr, ...], ...]
    condition: Tuple[Tuple[str, int], ...]
    expectation: Dict[str, str] = field(default_factory=dict)
    thread_names: Tuple[str, ...] = ()

    @property
    def addresses(self) -> List[str]:
        seen = list(self.init)
        for th in self.threads:
            for ins in th:
                if ins.addr not in seen:
                    seen.append(ins.addr)
        return sorted(seen)

    @property
    def registers(self) -> List[str]:
        return [ins.reg for th in self.threads for ins in th if not ins.is_write]

    def holds(self, regs: Dict[str, int]) -> bool:
        return all(regs.get(r) == v for r, v in self.condition)


def instr_write(addr: str, value: int) -> Instr:
    return Instr(addr, value=value)


def instr_read(reg: str, addr: str) -> Instr:
    return Instr(addr, reg=reg)


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(r"\s*(?:(?P<arrow><-)|(?P<int>-?\d+)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*\??)"
                    r"|(?P<punct>[{};=&]|/\\|∧|\n))", re.ASCII)


def _tokens(text: str):
    line, col0, pos = 1, 0, 0
    out = []
    while pos < len(text):
        ch = text[pos]
        if ch == "#":
            while pos < len(text) and text[pos] != "\n":
                pos += 1
            continue
        if ch == "\n":
            out.append(("nl", "\n", line, pos - col0 + 1))
            line += 1
            pos += 1
            col0 = pos
            continue
        if ch in " \t\r":
            pos += 1
            continue
        if text.startswith("∧", pos):
            out.append(("and", "∧", line, pos - col0 + 1))
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise LitmusSyntaxError(f"unexpected character {ch!r}", line, pos - col0 + 1)
        col = m.start(m.lastgroup) - col0 + 1
        kind = m.lastgroup
        val = m.group(kind)
        if kind == "punct" and val in ("&", "/\\"):
            kind = "and"
        out.append((kind, val, line, col))
        pos = m.end()
    out.append(("eof", "", line, pos - col0 + 1))
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokens(text)
        self.i = 0
        # (kind, name) -> token, for locating semantic errors
        self.where: Dict[Tuple[str, str], tuple] = {}
        self.dup_reg: Optional[tuple] = None

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        return LitmusSyntaxError(msg, tok[2], tok[3])

    def expect(self, kind, val=None):
        t = self.next()
        if t[0] != kind or (val is not None and t[1] != val):
            raise self.error(f"expected {val or kind}, found {t[1]!r}", t)
        return t

    def skip_seps(self):
        while self.peek()[0] == "nl" or self.peek()[1] == ";":
            self.next()

    def parse(self) -> LitmusTest:
        name, init, threads, names, cond, expect = "", {}, [], [], [], {}
        self.skip_seps()
        while self.peek()[0] != "eof":
            t = self.next()
            word = t[1]
            if t[0] != "ident":
                raise self.error(f"unexpected {word!r}", t)
            if word in FENCES:
                raise UnsupportedFeature(f"fence instruction {word!r} is not supported", t[2], t[3])
            if word == "test":
                name = self.expect("ident")[1]
            elif word == "init":
                while self.peek()[0] == "ident":
                    a = self.next()
                    self.expect("punct", "=")
                    v = self.expect("int")
                    init[a[1]] = int(v[1])
            elif word == "thread":
                names.append(self.expect("ident")[1])
                threads.append(self.thread_body())
            elif word == "observable?":
                cond = self.condition()
            elif word == "expect":
                while self.peek()[0] == "ident":
                    eng = self.next()
                    self.expect("punct", "=")
                    verdict = self.expect("ident")
                    if eng[1] not in ENGINES or verdict[1] not in (OBSERVABLE, NOT_OBSERVABLE):
                        raise self.error(f"bad expectation {eng[1]}={verdict[1]}", eng)
                    expect[eng[1]] = verdict[1]
            else:
                raise self.error(f"unknown statement {word!r}", t)
            self.skip_seps()
        test = LitmusTest(name or "unnamed", init, tuple(threads), tuple(cond), expect, tuple(names))
        _check(test, self)
        return test

    def thread_body(self) -> Tuple[Instr, ...]:
        self.expect("punct", "{")
        body = []
        while True:
            self.skip_seps()
            t = self.peek()
            if t[1] == "}":
                self.next()
                return tuple(body)
            lhs = self.expect("ident")
            if lhs[1] in FENCES:
                raise UnsupportedFeature(f"fence instruction {lhs[1]!r} is not supported", lhs[2], lhs[3])
            self.expect("arrow")
            rhs = self.next()
            if rhs[0] == "int":
                self.where.setdefault(("addr", lhs[1]), lhs)
                body.append(instr_write(lhs[1], int(rhs[1])))
            elif rhs[0] == "ident":
                self.where.setdefault(("addr", rhs[1]), rhs)
                if ("reg", lhs[1]) in self.where and self.dup_reg is None:
                    self.dup_reg = lhs
                self.where.setdefault(("reg", lhs[1]), lhs)
                body.append(instr_read(lhs[1], rhs[1]))
            else:
                raise self.error(f"expected a value or address, found {rhs[1]!r}", rhs)

    def condition(self) -> List[Tuple[str, int]]:
        cond = []
        while self.peek()[0] == "ident":
            r = self.next()
            self.where.setdefault(("cond", r[1]), r)
            self.expect("punct", "=")
            v = self.expect("int")
            cond.append((r[1], int(v[1])))
            if self.peek()[0] != "and":
                break
            self.next()
        return cond


def _check(t: LitmusTest, p: _Parser) -> None:
    regs = t.registers
    if p.dup_reg is not None:
        raise p.error(f"register {p.dup_reg[1]!r} is written more than once", p.dup_reg)
    if t.init:
        for th in t.threads:
            for ins in th:
                if ins.addr not in t.init:
                    raise p.error(f"address {ins.addr!r} is not declared in init", p.where[("addr", ins.addr)])
    for r, _ in t.condition:
        if r not in regs:
            raise p.error(f"condition names unknown register {r!r}", p.where[("cond", r)])


def parse(text: str) -> LitmusTest:
    return _Parser(text).parse()


def load(path) -> LitmusTest:
    return parse(Path(path).read_text())


def format_test(t: LitmusTest) -> str:
    lines = [f"test {t.name}"]
    if t.init:
        lines.append("init " + " ".join(f"{a}={v}" for a, v in t.init.items()))
    names = t.thread_names or tuple(f"P{i + 1}" for i in range(len(t.threads)))
    for name, th in zip(names, t.threads):
        lines.append(f"thread {name} {{ " + "; ".join(map(str, th)) + " }")
    if t.condition:
        lines.append("observable? " + " & ".join(f"{r}={v}" for r, v in t.condition))
    if t.expectation:
        lines.append("expect " + " ".join(f"{e}={v}" for e, v in t.expectation.items()))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class Verdict:
    engine: str
    verdict: str
    witness: object = None

    @property
    def observable(self) -> bool:
        return self.verdict == OBSERVABLE


def evaluate(t: LitmusTest, engine: str, budget: int = axioms.DEFAULT_CANDIDATE_BUDGET) -> Verdict:
    if engine == "axiomatic":
        for cand in axioms.iter_candidates(t, budget, with_verdict=False):
            if not t.holds(cand.registers):
                continue
            v = axioms.check_axioms(cand.execution, validate=False)
            if v.overall:
                return Verdict(engine, OBSERVABLE, axioms.Candidate(cand.execution, cand.registers, v))
        return Verdict(engine, NOT_OBSERVABLE)
    if engine == "tsolb":
        run = tsolb.run_litmus_exhaustive(t, budget)
        for key, trace in sorted(run.outcomes.items()):
            if t.holds(dict(key)):
                return Verdict(engine, OBSERVABLE, trace)
        return Verdict(engine, NOT_OBSERVABLE)
    raise ValueError(f"unknown engine {engine!r}")


def validate_witness(t: LitmusTest, v: Verdict) -> bool:
    """Re-check an Observable verdict's witness independently of how it was found."""
    if not v.observable:
        return True
    if v.engine == "axiomatic":
        cand = v.witness
        try:
            cand.execution.validate()
        except axioms.ExecutionError:
            return False
        return axioms.check_axioms(cand.execution).overall and t.holds(cand.registers)
    try:
        regs = tsolb.replay_litmus_trace(t, v.witness)
    except tsolb.DisabledLabel:
        return False
    return t.holds(regs)


@dataclass
class Comparison:
    test: str
    axiomatic: Verdict
    tsolb: Verdict

    @property
    def classification(self) -> str:
        if self.tsolb.observable and not self.axiomatic.observable:
            return SOUNDNESS_BUG
        if self.axiomatic.observable and not self.tsolb.observable:
            return STRICTNESS_GAP
        return CONSISTENT


def compare(t: LitmusTest) -> Comparison:
    return Comparison(t.name, evaluate(t, "axiomatic"), evaluate(t, "tsolb"))


def generate_random(seed: int, max_threads: int = 2, max_instrs: int = 4, n_addrs: int = 2,
                    n_values: int = 2) -> LitmusTest:
    """A random straight-line test.

    Half of the conditions are drawn from the TSO-LB outcomes, so that
    comparing engines exercises soundness; the rest assign every register
    uniformly at random.
    """
    if min(max_threads, max_instrs, n_addrs, n_values) < 1:
        raise ValueError("shape limits must be positive")
    rng = random.Random(seed)
    addrs = [chr(ord("x") + i) if i < 3 else f"a{i}" for i in range(n_addrs)]
    threads = []
    reg = 0
    for _ in range(rng.randint(1, max_threads)):
        body = []
        for _ in range(rng.randint(1, max_instrs)):
            a = rng.choice(addrs)
            if rng.random() < 0.5:
                body.append(instr_write(a, rng.randrange(n_values)))
            else:
                reg += 1
                body.append(instr_read(f"r{reg}", a))
        threads.append(tuple(body))
    names = tuple(f"P{i + 1}" for i in range(len(threads)))
    t = LitmusTest(f"rand{seed}", {a: 0 for a in addrs}, tuple(threads), (), {}, names)
    if rng.random() < 0.5:
        outcomes = sorted(tsolb.run_litmus_exhaustive(t).outcomes)
        cond = rng.choice(outcomes) if outcomes else ()
    else:
        cond = tuple((r, rng.randrange(n_values)) for r in t.registers)
    return LitmusTest(t.name, t.init, t.threads, tuple(cond), {}, names)


# ---------------------------------------------------------------------------
# shipped corpus

CORPUS_DIR = Path(__file__).parent / "data" / "litmus"


def builtin(name: str) -> LitmusTest:
    return load(CORPUS_DIR / f"{name}.litmus")


def builtin_names() -> List[str]:
    return sorted(p.stem for p in CORPUS_DIR.glob("*.litmus"))
