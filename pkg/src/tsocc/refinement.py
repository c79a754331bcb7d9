"""Weak-simulation harness: the TSO-LB shadow carried inside a protocol state.

The protocol model steps the shadow forward at each observable action:

* a write calls :func:`tso_store` (one Write step),
* a completed read calls :func:`tso_verify`, which succeeds with a Read step
  or with Propagate followed by Read, and otherwise reports failure,
* writes by the abstract node of the parameterized model call
  :func:`tso_store_abs`, which touches only the global buffer.

Two forms are provided.  The functions over :class:`TsoLbState` build explicit
:class:`Witness` sequences and are the reference.  :class:`ShadowLayout` does
the same updates in place on a flat list, which is what the explorer uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, MutableSequence, Optional, Sequence, Tuple

from .tsolb import LbLabel, Propagate, Read, TsoLbState, Write, apply_label

Shadow = TsoLbState


@dataclass(frozen=True)
class Witness:
    """Alternating states and labels ``q0, l0, q1, ..., qn``."""

    states: Tuple[TsoLbState, ...]
    labels: Tuple[LbLabel, ...]

    @property
    def last(self) -> TsoLbState:
        return self.states[-1]

    def observable(self) -> List[LbLabel]:
        return [l for l in self.labels if not isinstance(l, Propagate)]

    def is_valid(self, label: Optional[LbLabel] = None) -> bool:
        """Each step replays, and exactly ``label`` (or nothing) is observable."""
        if len(self.states) != len(self.labels) + 1:
            return False
        for q, l, q2 in zip(self.states, self.labels, self.states[1:]):
            try:
                if apply_label(q, l) != q2:
                    return False
            except Exception:
                return False
        obs = self.observable()
        return obs == ([] if label is None else [label])


def tso_store(sh: Shadow, p: int, a: int, v: int) -> Shadow:
    return apply_label(sh, Write(p, a, v))


def tso_update(sh: Shadow, p: int) -> Shadow:
    return apply_label(sh, Propagate(p))


def tso_verify(sh: Shadow, p: int, a: int, expected: int) -> Tuple[bool, Shadow]:
    if sh.local[p][a] == expected:
        return True, sh
    sh2 = tso_update(sh, p)
    if sh2.local[p][a] == expected:
        return True, sh2
    return False, sh


def tso_store_abs(sh: Shadow, a: int, v: int) -> Shadow:
    glob = list(sh.glob)
    glob[a] = v
    return TsoLbState(sh.local, tuple(glob))


def write_witness(sh: Shadow, p: int, a: int, v: int) -> Witness:
    return Witness((sh, tso_store(sh, p, a, v)), (Write(p, a, v),))


def read_witness(sh: Shadow, p: int, a: int, expected: int) -> Optional[Witness]:
    """The one- or two-step read witness, or None when no weak Read step exists."""
    if sh.local[p][a] == expected:
        return Witness((sh, sh), (Read(p, a, expected),))
    sh2 = tso_update(sh, p)
    if sh2.local[p][a] == expected:
        return Witness((sh, sh2, sh2), (Propagate(p), Read(p, a, expected)))
    return None


def silent_witness(sh: Shadow) -> Witness:
    return Witness((sh,), ())


class ShadowLayout:
    """The shadow stored at ``offset`` of a flat int sequence.

    ``procs * addrs`` local cells (processor-major) followed by ``addrs`` global
    cells.
    """

    def __init__(self, procs: int, addrs: int, offset: int):
        self.procs = procs
        self.addrs = addrs
        self.local_off = offset
        self.glob_off = offset + procs * addrs
        self.size = procs * addrs + addrs

    def local(self, s: Sequence[int], p: int, a: int) -> int:
        return s[self.local_off + p * self.addrs + a]

    def glob(self, s: Sequence[int], a: int) -> int:
        return s[self.glob_off + a]

    def store(self, l: MutableSequence[int], p: int, a: int, v: int) -> None:
        l[self.local_off + p * self.addrs + a] = v
        l[self.glob_off + a] = v

    def store_abs(self, l: MutableSequence[int], a: int, v: int) -> None:
        l[self.glob_off + a] = v

    def update(self, l: MutableSequence[int], p: int) -> None:
        base = self.local_off + p * self.addrs
        l[base:base + self.addrs] = l[self.glob_off:self.glob_off + self.addrs]

    def verify(self, l: MutableSequence[int], p: int, a: int, expected: int) -> bool:
        """In-place tso_verify; on failure the list is left unchanged."""
        i = self.local_off + p * self.addrs + a
        if l[i] == expected:
            return True
        if l[self.glob_off + a] == expected:
            self.update(l, p)
            return True
        return False

    def to_state(self, s: Sequence[int]) -> TsoLbState:
        A = self.addrs
        local = tuple(tuple(s[self.local_off + p * A:self.local_off + (p + 1) * A]) for p in range(self.procs))
        return TsoLbState(local, tuple(s[self.glob_off:self.glob_off + A]))

    def write_into(self, l: MutableSequence[int], sh: TsoLbState) -> None:
        A = self.addrs
        for p, row in enumerate(sh.local):
            l[self.local_off + p * A:self.local_off + (p + 1) * A] = row
        l[self.glob_off:self.glob_off + A] = sh.glob


def match_invariant(cc, s) -> bool:
    """True iff no read completion on the way to ``s`` failed its tso_verify.

    ``cc`` is a protocol model (see :mod:`tsocc.protocol`); a failing verify marks
    the successor state, so the check is a flag test on the state itself.
    """
    return cc.match_ok(s)
