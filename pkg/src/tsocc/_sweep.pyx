# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Exhaustive TSO-LB trace sweep over bitset relations.

Depth-first enumeration of every label sequence from the all-zero state.
Each appended read or write becomes an event; relations are kept as one
64-bit successor/predecessor mask per event and the three acyclicity
relations keep their transitive closures, updated incrementally because every
new edge touches the newest event.  A trace inherits the failures of its
prefix (relations only grow), so each node only examines pairs involving the
new event.

Category order matches ``tsolb.CATEGORIES``.
"""

from cpython.mem cimport PyMem_Free, PyMem_Malloc
from libc.string cimport memcpy, memset

ctypedef unsigned long long u64

DEF MAXE = 64
DEF MAXP = 8
DEF MAXA = 8
DEF MAXD = 48
DEF NCAT = 9

DEF F_CO = 1
DEF F_RF = 2
DEF F_FR = 4
DEF F_PPO = 8
DEF F_POLOC = 16
DEF F_SC = 32
DEF F_NTA = 64
DEF F_OBS = 128
DEF F_PROP = 256

cdef extern from *:
    int __builtin_ctzll(unsigned long long) nogil


cdef struct Sweep:
    int P, A, V, D, K
    int n
    int ekind[MAXE]
    int eproc[MAXE]
    long long ekey[MAXE]
    u64 procmask[MAXP + 1]
    u64 rproc[MAXP + 1]
    u64 wproc[MAXP + 1]
    u64 writes_at[MAXA]
    u64 reads_at[MAXA]
    u64 addrmask[MAXA]
    u64 readers_of[MAXE]
    u64 C1[MAXE]
    u64 C2[MAXE]
    u64 C3[MAXE]
    # local cells: writer event, anchor position, value; global: writer, value
    int lw[MAXD + 1][MAXP * MAXA]
    int lpos[MAXD + 1][MAXP * MAXA]
    int lv[MAXD + 1][MAXP * MAXA]
    int gw[MAXD + 1][MAXA]
    int gv[MAXD + 1][MAXA]
    u64 count
    u64 fails[NCAT]
    int path[MAXD][4]
    int firstlen[NCAT]
    int first[NCAT][MAXD][4]


cdef struct ReadInfo:
    int flags
    u64 reach1
    u64 canr1
    u64 canr2
    u64 reach3
    u64 canr3
    long long key


cdef inline u64 bit(int i) nogil:
    return (<u64>1) << i


cdef inline u64 reach_from(u64* C, u64 out) nogil:
    cdef u64 r = out, m = out
    cdef int i
    while m:
        i = __builtin_ctzll(m)
        m &= m - 1
        r |= C[i]
    return r


cdef inline u64 can_reach(u64* C, u64 into, int n) nogil:
    cdef u64 r = into
    cdef int x
    for x in range(n):
        if C[x] & into:
            r |= bit(x)
    return r


cdef inline int later_key_fail(Sweep* s, u64 m, long long key) nogil:
    # some event in m is not strictly before key
    cdef int i
    while m:
        i = __builtin_ctzll(m)
        m &= m - 1
        if s.ekey[i] >= key:
            return 1
    return 0


cdef void check_read(Sweep* s, int p, int a, int w0, int anchor, int t, ReadInfo* ri) nogil:
    cdef int e = s.n
    cdef long long key = (anchor + 1) * s.K + 1 + t
    cdef int flags = 0
    cdef u64 frout, rfe_in, I1, I2, I3, T, m, fre_out
    cdef int i, pw

    ri.key = key
    if later_key_fail(s, s.rproc[p], key):
        flags |= F_PPO
    if later_key_fail(s, s.procmask[p] & s.addrmask[a], key):
        flags |= F_POLOC
    if s.ekey[w0] >= key:
        flags |= F_RF
    frout = s.writes_at[a] & ~((bit(w0) << 1) - 1)
    m = frout
    while m:
        i = __builtin_ctzll(m)
        m &= m - 1
        if key >= s.ekey[i]:
            flags |= F_FR
            break

    rfe_in = bit(w0) if s.eproc[w0] != p else 0
    I1 = (s.procmask[p] & s.addrmask[a]) | bit(w0)
    I2 = s.rproc[p] | rfe_in
    I3 = s.rproc[p] | rfe_in
    ri.reach1 = reach_from(s.C1, frout)
    ri.canr1 = can_reach(s.C1, I1, e)
    if ri.reach1 & ri.canr1:
        flags |= F_SC
    ri.canr2 = can_reach(s.C2, I2, e)
    ri.reach3 = reach_from(s.C3, frout)
    ri.canr3 = can_reach(s.C3, I3, e)
    if ri.reach3 & ri.canr3:
        flags |= F_PROP

    # fre ; prop ; hb* back to the new read
    fre_out = frout & ~s.procmask[p]
    T = 0
    m = fre_out
    while m:
        i = __builtin_ctzll(m)
        m &= m - 1
        pw = s.eproc[i]
        T |= (s.wproc[pw] & ~((bit(i) << 1) - 1)) | (s.readers_of[i] & ~s.procmask[pw])
    if T & (ri.canr2 | bit(e)):
        flags |= F_OBS
    ri.flags = flags


cdef inline void close_into(u64* C, u64 canr, u64 reach, int e) nogil:
    cdef u64 add = bit(e) | reach
    cdef int x
    for x in range(e):
        if canr & bit(x):
            C[x] |= add
    C[e] = reach


cdef void push_read(Sweep* s, int p, int a, int w0, ReadInfo* ri) nogil:
    cdef int e = s.n
    s.ekind[e] = 1
    s.eproc[e] = p
    s.ekey[e] = ri.key
    close_into(s.C1, ri.canr1, ri.reach1, e)
    close_into(s.C2, ri.canr2, 0, e)
    close_into(s.C3, ri.canr3, ri.reach3, e)
    s.procmask[p] |= bit(e)
    s.rproc[p] |= bit(e)
    s.reads_at[a] |= bit(e)
    s.addrmask[a] |= bit(e)
    s.readers_of[w0] |= bit(e)
    s.readers_of[e] = 0
    s.n = e + 1


cdef void pop_read(Sweep* s, int p, int a, int w0) nogil:
    cdef int e = s.n - 1
    cdef u64 b = ~bit(e)
    s.procmask[p] &= b
    s.rproc[p] &= b
    s.reads_at[a] &= b
    s.addrmask[a] &= b
    s.readers_of[w0] &= b
    s.n = e


cdef void push_write(Sweep* s, int p, int a, int t) nogil:
    # A write gets the largest key so far and has no outgoing edges yet, so it
    # can neither break a containment nor close a cycle.
    cdef int e = s.n
    cdef u64 I1 = (s.procmask[p] & s.addrmask[a]) | s.writes_at[a] | s.reads_at[a]
    cdef u64 I2 = s.procmask[p]
    cdef u64 I3 = s.writes_at[a] | s.procmask[p] | s.reads_at[a]
    close_into(s.C1, can_reach(s.C1, I1, e), 0, e)
    close_into(s.C2, can_reach(s.C2, I2, e), 0, e)
    close_into(s.C3, can_reach(s.C3, I3, e), 0, e)
    s.ekind[e] = 0
    s.eproc[e] = p
    s.ekey[e] = (t + 1) * s.K
    s.procmask[p] |= bit(e)
    s.wproc[p] |= bit(e)
    s.writes_at[a] |= bit(e)
    s.addrmask[a] |= bit(e)
    s.readers_of[e] = 0
    s.n = e + 1


cdef void pop_write(Sweep* s, int p, int a) nogil:
    cdef int e = s.n - 1
    cdef u64 b = ~bit(e)
    s.procmask[p] &= b
    s.wproc[p] &= b
    s.writes_at[a] &= b
    s.addrmask[a] &= b
    s.n = e


cdef inline void tally(Sweep* s, int flags, int parent, int t, u64 times) nogil:
    cdef int c, k
    s.count += times
    if not flags:
        return
    for c in range(NCAT):
        if flags & (1 << c):
            s.fails[c] += times
            if (s.firstlen[c] < 0 or t + 1 < s.firstlen[c]) and not (parent & (1 << c)):
                s.firstlen[c] = t + 1
                for k in range(t + 1):
                    s.first[c][k][0] = s.path[k][0]
                    s.first[c][k][1] = s.path[k][1]
                    s.first[c][k][2] = s.path[k][2]
                    s.first[c][k][3] = s.path[k][3]


cdef inline void set_path(Sweep* s, int t, int kind, int p, int a, int v) nogil:
    s.path[t][0] = kind
    s.path[t][1] = p
    s.path[t][2] = a
    s.path[t][3] = v


cdef void copy_cells(Sweep* s, int t) nogil:
    cdef int nc = s.P * s.A
    memcpy(s.lw[t + 1], s.lw[t], nc * sizeof(int))
    memcpy(s.lpos[t + 1], s.lpos[t], nc * sizeof(int))
    memcpy(s.lv[t + 1], s.lv[t], nc * sizeof(int))
    memcpy(s.gw[t + 1], s.gw[t], s.A * sizeof(int))
    memcpy(s.gv[t + 1], s.gv[t], s.A * sizeof(int))


cdef void dfs(Sweep* s, int t, int flags) nogil:
    # enumerate children of a node at trace length t (cells at level t)
    cdef int p, a, v, c, w0, n
    cdef int P = s.P, A = s.A
    cdef ReadInfo ri
    cdef u64 save1[MAXE]
    cdef u64 save2[MAXE]
    cdef u64 save3[MAXE]
    cdef int last = (t + 1 == s.D)

    n = s.n
    # reads: exactly one enabled per (p, a)
    for p in range(P):
        for a in range(A):
            c = p * A + a
            w0 = s.lw[t][c]
            check_read(s, p, a, w0, s.lpos[t][c], t, &ri)
            set_path(s, t, 0, p, a, s.lv[t][c])
            tally(s, flags | ri.flags, flags, t, 1)
            if last:
                continue
            memcpy(save1, s.C1, n * sizeof(u64))
            memcpy(save2, s.C2, n * sizeof(u64))
            memcpy(save3, s.C3, n * sizeof(u64))
            push_read(s, p, a, w0, &ri)
            copy_cells(s, t)
            dfs(s, t + 1, flags | ri.flags)
            pop_read(s, p, a, w0)
            memcpy(s.C1, save1, n * sizeof(u64))
            memcpy(s.C2, save2, n * sizeof(u64))
            memcpy(s.C3, save3, n * sizeof(u64))

    # writes
    if last:
        s.count += <u64>(P * A * s.V)
        if flags:
            for c in range(NCAT):
                if flags & (1 << c):
                    s.fails[c] += <u64>(P * A * s.V)
    else:
        for p in range(P):
            for a in range(A):
                for v in range(s.V):
                    set_path(s, t, 1, p, a, v)
                    tally(s, flags, flags, t, 1)
                    memcpy(save1, s.C1, n * sizeof(u64))
                    memcpy(save2, s.C2, n * sizeof(u64))
                    memcpy(save3, s.C3, n * sizeof(u64))
                    push_write(s, p, a, t)
                    copy_cells(s, t)
                    s.lw[t + 1][p * A + a] = n
                    s.lpos[t + 1][p * A + a] = t
                    s.lv[t + 1][p * A + a] = v
                    s.gw[t + 1][a] = n
                    s.gv[t + 1][a] = v
                    dfs(s, t + 1, flags)
                    pop_write(s, p, a)
                    memcpy(s.C1, save1, n * sizeof(u64))
                    memcpy(s.C2, save2, n * sizeof(u64))
                    memcpy(s.C3, save3, n * sizeof(u64))

    # propagates add no event
    if last:
        s.count += <u64>P
        if flags:
            for c in range(NCAT):
                if flags & (1 << c):
                    s.fails[c] += <u64>P
    else:
        for p in range(P):
            set_path(s, t, 2, p, 0, 0)
            tally(s, flags, flags, t, 1)
            copy_cells(s, t)
            for a in range(A):
                c = p * A + a
                s.lw[t + 1][c] = s.gw[t][a]
                s.lv[t + 1][c] = s.gv[t][a]
                s.lpos[t + 1][c] = t
            dfs(s, t + 1, flags)


def sweep(int procs, int addrs, int values, int depth):
    """Check every TSO-LB trace of length <= depth; returns (count, fails, first)."""
    if procs < 1 or addrs < 1 or values < 1 or depth < 0:
        raise ValueError("domains must be nonempty and depth nonnegative")
    if procs > MAXP or addrs > MAXA or depth > MAXD or depth + addrs > MAXE:
        raise ValueError("configuration exceeds the compiled kernel limits")
    cdef Sweep* s = <Sweep*> PyMem_Malloc(sizeof(Sweep))
    if s == NULL:
        raise MemoryError()
    cdef int a, c, k
    try:
        memset(s, 0, sizeof(Sweep))
        s.P, s.A, s.V, s.D, s.K = procs, addrs, values, depth, depth + 2
        for c in range(NCAT):
            s.firstlen[c] = -1
        for a in range(addrs):
            s.ekind[a] = 0
            s.eproc[a] = procs
            s.ekey[a] = 0
            s.procmask[procs] |= bit(a)
            s.wproc[procs] |= bit(a)
            s.writes_at[a] = bit(a)
            s.addrmask[a] = bit(a)
            s.gw[0][a] = a
            s.gv[0][a] = 0
        for c in range(procs * addrs):
            s.lw[0][c] = c % addrs
            s.lpos[0][c] = -1
            s.lv[0][c] = 0
        s.n = addrs
        s.count = 1
        if depth > 0:
            with nogil:
                dfs(s, 0, 0)
        fails = [s.fails[c] for c in range(NCAT)]
        first = []
        for c in range(NCAT):
            if s.firstlen[c] < 0:
                first.append(None)
            else:
                first.append([(s.first[c][k][0], s.first[c][k][1], s.first[c][k][2], s.first[c][k][3])
                              for k in range(s.firstlen[c])])
        return s.count, fails, first
    finally:
        PyMem_Free(s)

