"""Pure-Python decide kernel: lex-first DFS over integer start times.

Fallback twin of the compiled core (kernel_c.pyx).  Both implementations
must explore the same search tree and return identical witnesses; the
cross-check test drives them on the same instances.

Constraint model:
  * difference edges: s[b] >= s[a] + lag for every (a, b, lag),
  * exclusivity: items with intersecting device masks never overlap,
  * memory: per device, init + running sum of deltas (applied at item
    start, in time order) never exceeds `cap` (cap < 0 disables),
  * bounds: lo0[i] <= s[i] <= hi0[i] (horizons are folded into hi0).

Branching follows `order` with ascending values, so the first witness is
the lexicographically smallest feasible start vector in that order.
"""

from __future__ import annotations

import time
from collections import deque

SAT = 1
UNSAT = 0
TIMEOUT = 2

_CLOCK_EVERY = 4096


def decide(
    n: int,
    dur,
    devmask,
    mem,
    edges,
    order,
    lo0,
    hi0,
    ndev: int,
    init_mem,
    cap: int,
    node_budget: int = 0,
    deadline: float = 0.0,
):
    """Return (status, starts or None, nodes explored)."""
    lo = [int(x) for x in lo0]
    hi = [int(x) for x in hi0]
    dur = [int(x) for x in dur]
    mem = [int(x) for x in mem]
    devmask = [int(x) for x in devmask]
    init_mem = [int(x) for x in init_mem]

    out_e: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    in_e: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for a, b, lag in edges:
        out_e[a].append((int(b), int(lag)))
        in_e[b].append((int(a), int(lag)))

    conf: list[list[int]] = [[] for _ in range(n)]
    for x in range(n):
        for y in range(n):
            if x != y and devmask[x] & devmask[y]:
                conf[x].append(y)
    dev_items: list[list[int]] = [
        [i for i in range(n) if devmask[i] >> d & 1] for d in range(ndev)
    ]
    dev_of: list[list[int]] = [
        [d for d in range(ndev) if devmask[i] >> d & 1] for i in range(n)
    ]

    placed = [False] * n
    s = [0] * n
    inq = [False] * n
    nodes = 0

    def _propagate(queue: deque) -> bool:
        while queue:
            a = queue.popleft()
            inq[a] = False
            la = lo[a]
            ha = hi[a]
            for b, lag in out_e[a]:
                nl = la + lag
                if nl > lo[b]:
                    if nl > hi[b]:
                        return False
                    lo[b] = nl
                    if not inq[b]:
                        inq[b] = True
                        queue.append(b)
            for b, lag in in_e[a]:
                nh = ha - lag
                if nh < hi[b]:
                    if nh < lo[b]:
                        return False
                    hi[b] = nh
                    if not inq[b]:
                        inq[b] = True
                        queue.append(b)
        return True

    def _mem_ok(d: int) -> bool:
        run = init_mem[d]
        if run > cap:
            return False
        evs = []
        for i in dev_items[d]:
            if placed[i]:
                evs.append((s[i], mem[i]))
            elif mem[i] < 0:
                # optimistic relief: an unplaced release can start no
                # earlier than its lower bound
                evs.append((lo[i], mem[i]))
        evs.sort()
        k = 0
        m = len(evs)
        while k < m:
            t = evs[k][0]
            while k < m and evs[k][0] == t:
                run += evs[k][1]
                k += 1
            if run > cap:
                return False
        return True

    def _dev_ok(d: int) -> bool:
        items = dev_items[d]
        if not items:
            return True
        triples = []
        for i in items:
            a = s[i] if placed[i] else lo[i]
            e = a + dur[i] if placed[i] else hi[i] + dur[i]
            triples.append((a, dur[i], e))
        triples.sort()
        # staggered serial completion vs the latest admissible end
        lim = max(t[2] for t in triples)
        c = 0
        for a, du, _ in triples:
            c = a if a > c else c
            c += du
        if c > lim:
            return False
        # energetic window bounds: every release-sorted suffix must fit
        # before its latest end, every deadline-sorted prefix after its
        # earliest start
        suf_p = 0
        suf_e = 0
        for a, du, e in reversed(triples):
            suf_p += du
            suf_e = e if e > suf_e else suf_e
            if a + suf_p > suf_e:
                return False
        by_e = sorted((e, du, a) for a, du, e in triples)
        pre_p = 0
        pre_a = by_e[0][2]
        for e, du, a in by_e:
            pre_p += du
            pre_a = a if a < pre_a else pre_a
            if pre_a + pre_p > e:
                return False
        return True

    def _dfs(depth: int) -> int:
        nonlocal nodes
        if depth == n:
            return SAT
        x = order[depth]
        v = lo[x]
        hx = hi[x]
        dx = dur[x]
        while v <= hx:
            moved = True
            while moved:
                moved = False
                for y in conf[x]:
                    if placed[y]:
                        sy = s[y]
                        if sy - dx < v < sy + dur[y]:
                            v = sy + dur[y]
                            moved = True
            if v > hx:
                break
            nodes += 1
            if node_budget and nodes > node_budget:
                return TIMEOUT
            if deadline and nodes % _CLOCK_EVERY == 0 and time.monotonic() > deadline:
                return TIMEOUT
            snap_lo = lo.copy()
            snap_hi = hi.copy()
            s[x] = v
            placed[x] = True
            lo[x] = v
            hi[x] = v
            ok = True
            queue = deque([x])
            inq[x] = True
            for y in conf[x]:
                if not placed[y]:
                    dy = dur[y]
                    if v - dy < lo[y] < v + dx:
                        lo[y] = v + dx
                        if lo[y] > hi[y]:
                            ok = False
                            break
                        if not inq[y]:
                            inq[y] = True
                            queue.append(y)
                    if v - dy < hi[y] < v + dx:
                        hi[y] = v - dy
                        if hi[y] < lo[y]:
                            ok = False
                            break
                        if not inq[y]:
                            inq[y] = True
                            queue.append(y)
            if ok:
                ok = _propagate(queue)
            else:
                for i in queue:
                    inq[i] = False
            if ok and cap >= 0:
                for d in dev_of[x]:
                    if not _mem_ok(d):
                        ok = False
                        break
            if ok:
                for d in dev_of[x]:
                    if not _dev_ok(d):
                        ok = False
                        break
            if ok:
                r = _dfs(depth + 1)
                if r != UNSAT:
                    return r
            lo[:] = snap_lo
            hi[:] = snap_hi
            placed[x] = False
            v += 1
        return UNSAT

    # Root: full fixpoint plus global device/memory feasibility.
    queue = deque(range(n))
    for i in range(n):
        inq[i] = True
    if not _propagate(queue):
        return UNSAT, None, 0
    if cap >= 0:
        for d in range(ndev):
            if not _mem_ok(d):
                return UNSAT, None, 0
    for d in range(ndev):
        if not _dev_ok(d):
            return UNSAT, None, 0

    status = _dfs(0)
    if status == SAT:
        return SAT, list(s), nodes
    return status, None, nodes
