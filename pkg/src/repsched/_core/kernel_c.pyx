# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled decide kernel.

Semantics are defined by the pure twin `kernel_py.decide`; both explore
the same search tree and return identical witnesses.  This version keeps
all state in flat C arrays and runs the DFS iteratively.
"""

import time

import numpy as np

cimport numpy as cnp

SAT = 1
UNSAT = 0
TIMEOUT = 2

cdef int CLOCK_EVERY = 4096


def decide(
    int n,
    object dur_in,
    object devmask_in,
    object mem_in,
    object edges_in,
    object order_in,
    object lo_in,
    object hi_in,
    int ndev,
    object init_in,
    long long cap,
    long long node_budget=0,
    double deadline=0.0,
):
    """Return (status, starts or None, nodes explored)."""
    cdef cnp.int64_t[::1] dur = np.ascontiguousarray(dur_in, dtype=np.int64)
    cdef cnp.uint64_t[::1] devmask = np.ascontiguousarray(devmask_in, dtype=np.uint64)
    cdef cnp.int64_t[::1] mem = np.ascontiguousarray(mem_in, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] edges = np.ascontiguousarray(
        np.asarray(edges_in, dtype=np.int64).reshape(-1, 3)
    )
    cdef cnp.int64_t[::1] order = np.ascontiguousarray(order_in, dtype=np.int64)
    cdef cnp.int64_t[::1] lo = np.array(lo_in, dtype=np.int64)
    cdef cnp.int64_t[::1] hi = np.array(hi_in, dtype=np.int64)
    cdef cnp.int64_t[::1] init_mem = np.ascontiguousarray(init_in, dtype=np.int64)

    cdef int m = edges.shape[0]
    cdef int i, j, k, a, b, d, x, y
    cdef long long lag, nl, nh, la, ha

    # CSR for outgoing and incoming edges.
    out_ptr_a = np.zeros(n + 1, dtype=np.int64)
    in_ptr_a = np.zeros(n + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] out_ptr = out_ptr_a
    cdef cnp.int64_t[::1] in_ptr = in_ptr_a
    for i in range(m):
        out_ptr[edges[i, 0] + 1] += 1
        in_ptr[edges[i, 1] + 1] += 1
    for i in range(n):
        out_ptr[i + 1] += out_ptr[i]
        in_ptr[i + 1] += in_ptr[i]
    cdef cnp.int64_t[::1] out_dst = np.empty(m, dtype=np.int64)
    cdef cnp.int64_t[::1] out_lag = np.empty(m, dtype=np.int64)
    cdef cnp.int64_t[::1] in_src = np.empty(m, dtype=np.int64)
    cdef cnp.int64_t[::1] in_lag = np.empty(m, dtype=np.int64)
    fill_out = np.zeros(n, dtype=np.int64)
    fill_in = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] fo = fill_out
    cdef cnp.int64_t[::1] fi = fill_in
    for i in range(m):
        a = <int> edges[i, 0]
        b = <int> edges[i, 1]
        lag = edges[i, 2]
        out_dst[out_ptr[a] + fo[a]] = b
        out_lag[out_ptr[a] + fo[a]] = lag
        fo[a] += 1
        in_src[in_ptr[b] + fi[b]] = a
        in_lag[in_ptr[b] + fi[b]] = lag
        fi[b] += 1

    # Conflict CSR (intersecting device masks).
    cdef int nconf = 0
    for i in range(n):
        for j in range(n):
            if i != j and (devmask[i] & devmask[j]) != 0:
                nconf += 1
    cdef cnp.int64_t[::1] conf_ptr = np.zeros(n + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] conf_dst = np.empty(max(nconf, 1), dtype=np.int64)
    k = 0
    for i in range(n):
        for j in range(n):
            if i != j and (devmask[i] & devmask[j]) != 0:
                conf_dst[k] = j
                k += 1
        conf_ptr[i + 1] = k

    # Device -> items CSR and item -> devices CSR.
    cdef cnp.int64_t[::1] dev_ptr = np.zeros(ndev + 1, dtype=np.int64)
    cdef int nmemb = 0
    for d in range(ndev):
        for i in range(n):
            if (devmask[i] >> d) & 1:
                nmemb += 1
        dev_ptr[d + 1] = nmemb
    cdef cnp.int64_t[::1] dev_items = np.empty(max(nmemb, 1), dtype=np.int64)
    k = 0
    for d in range(ndev):
        for i in range(n):
            if (devmask[i] >> d) & 1:
                dev_items[k] = i
                k += 1
    cdef cnp.int64_t[::1] devof_ptr = np.zeros(n + 1, dtype=np.int64)
    k = 0
    for i in range(n):
        for d in range(ndev):
            if (devmask[i] >> d) & 1:
                k += 1
        devof_ptr[i + 1] = k
    cdef cnp.int64_t[::1] devof = np.empty(max(k, 1), dtype=np.int64)
    k = 0
    for i in range(n):
        for d in range(ndev):
            if (devmask[i] >> d) & 1:
                devof[k] = d
                k += 1

    cdef cnp.uint8_t[::1] placed = np.zeros(n, dtype=np.uint8)
    cdef cnp.int64_t[::1] s = np.zeros(n, dtype=np.int64)
    cdef cnp.uint8_t[::1] inq = np.zeros(n, dtype=np.uint8)
    cdef cnp.int64_t[::1] queue = np.empty(max(n, 1), dtype=np.int64)
    cdef int qhead, qtail

    # Scratch buffers for memory / serial-bound checks.
    cdef int max_dev_items = 0
    for d in range(ndev):
        if dev_ptr[d + 1] - dev_ptr[d] > max_dev_items:
            max_dev_items = <int> (dev_ptr[d + 1] - dev_ptr[d])
    cdef cnp.int64_t[::1] evt_t = np.empty(max(max_dev_items, 1), dtype=np.int64)
    cdef cnp.int64_t[::1] evt_m = np.empty(max(max_dev_items, 1), dtype=np.int64)
    cdef cnp.int64_t[::1] evt_e = np.empty(max(max_dev_items, 1), dtype=np.int64)

    # Per-depth bound snapshots.
    cdef cnp.int64_t[:, ::1] snap_lo = np.empty((n + 1, max(n, 1)), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] snap_hi = np.empty((n + 1, max(n, 1)), dtype=np.int64)
    cdef cnp.int64_t[::1] vstack = np.zeros(n + 1, dtype=np.int64)

    cdef long long nodes = 0
    cdef long long v, run, t, c, lim, sy, dx, dy
    cdef int depth, moved, ok, ne, status
    cdef long long tmp_t, tmp_m
    cdef int p, q2

    # --- helpers inlined below (Cython closures are costly) ---

    # Root propagation.
    qhead = 0
    qtail = 0
    for i in range(n):
        queue[qtail] = i
        qtail = (qtail + 1) % n if n > 0 else 0
        inq[i] = 1
    # ring buffer full at start: treat specially with count
    cdef int qcount = n
    ok = 1
    while qcount > 0:
        a = <int> queue[qhead]
        qhead = (qhead + 1) % n
        qcount -= 1
        inq[a] = 0
        la = lo[a]
        ha = hi[a]
        for p in range(<int> out_ptr[a], <int> out_ptr[a + 1]):
            b = <int> out_dst[p]
            nl = la + out_lag[p]
            if nl > lo[b]:
                if nl > hi[b]:
                    ok = 0
                    break
                lo[b] = nl
                if not inq[b]:
                    inq[b] = 1
                    queue[qtail] = b
                    qtail = (qtail + 1) % n
                    qcount += 1
        if not ok:
            break
        for p in range(<int> in_ptr[a], <int> in_ptr[a + 1]):
            b = <int> in_src[p]
            nh = ha - in_lag[p]
            if nh < hi[b]:
                if nh < lo[b]:
                    ok = 0
                    break
                hi[b] = nh
                if not inq[b]:
                    inq[b] = 1
                    queue[qtail] = b
                    qtail = (qtail + 1) % n
                    qcount += 1
        if not ok:
            break
    if not ok:
        return UNSAT, None, 0

    # Root memory / device checks.
    if cap >= 0:
        for d in range(ndev):
            if not _mem_ok(d, cap, dev_ptr, dev_items, placed, s, lo, mem, init_mem, evt_t, evt_m):
                return UNSAT, None, 0
    for d in range(ndev):
        if not _dev_ok(d, dev_ptr, dev_items, placed, s, lo, hi, dur, evt_t, evt_m, evt_e):
            return UNSAT, None, 0

    if n == 0:
        return SAT, [], 0

    # Iterative lex-first DFS.
    status = UNSAT
    depth = 0
    v = lo[order[0]]
    cdef int backtracking = 0
    while True:
        if depth == n:
            status = SAT
            break
        x = <int> order[depth]
        dx = dur[x]
        # scan for the next admissible value
        if v > hi[x]:
            # exhausted: backtrack
            depth -= 1
            if depth < 0:
                status = UNSAT
                break
            x = <int> order[depth]
            for i in range(n):
                lo[i] = snap_lo[depth, i]
                hi[i] = snap_hi[depth, i]
            placed[x] = 0
            v = vstack[depth] + 1
            continue
        moved = 1
        while moved:
            moved = 0
            for p in range(<int> conf_ptr[x], <int> conf_ptr[x + 1]):
                y = <int> conf_dst[p]
                if placed[y]:
                    sy = s[y]
                    if sy - dx < v and v < sy + dur[y]:
                        v = sy + dur[y]
                        moved = 1
        if v > hi[x]:
            continue
        nodes += 1
        if node_budget and nodes > node_budget:
            status = TIMEOUT
            break
        if deadline != 0.0 and nodes % CLOCK_EVERY == 0 and time.monotonic() > deadline:
            status = TIMEOUT
            break
        for i in range(n):
            snap_lo[depth, i] = lo[i]
            snap_hi[depth, i] = hi[i]
        s[x] = v
        placed[x] = 1
        lo[x] = v
        hi[x] = v
        ok = 1
        qhead = 0
        qtail = 0
        qcount = 0
        queue[qtail] = x
        qtail = (qtail + 1) % n
        qcount += 1
        inq[x] = 1
        for p in range(<int> conf_ptr[x], <int> conf_ptr[x + 1]):
            y = <int> conf_dst[p]
            if not placed[y]:
                dy = dur[y]
                if v - dy < lo[y] and lo[y] < v + dx:
                    lo[y] = v + dx
                    if lo[y] > hi[y]:
                        ok = 0
                        break
                    if not inq[y]:
                        inq[y] = 1
                        queue[qtail] = y
                        qtail = (qtail + 1) % n
                        qcount += 1
                if v - dy < hi[y] and hi[y] < v + dx:
                    hi[y] = v - dy
                    if hi[y] < lo[y]:
                        ok = 0
                        break
                    if not inq[y]:
                        inq[y] = 1
                        queue[qtail] = y
                        qtail = (qtail + 1) % n
                        qcount += 1
        if ok:
            while qcount > 0:
                a = <int> queue[qhead]
                qhead = (qhead + 1) % n
                qcount -= 1
                inq[a] = 0
                la = lo[a]
                ha = hi[a]
                for p in range(<int> out_ptr[a], <int> out_ptr[a + 1]):
                    b = <int> out_dst[p]
                    nl = la + out_lag[p]
                    if nl > lo[b]:
                        if nl > hi[b]:
                            ok = 0
                            break
                        lo[b] = nl
                        if not inq[b]:
                            inq[b] = 1
                            queue[qtail] = b
                            qtail = (qtail + 1) % n
                            qcount += 1
                if not ok:
                    break
                for p in range(<int> in_ptr[a], <int> in_ptr[a + 1]):
                    b = <int> in_src[p]
                    nh = ha - in_lag[p]
                    if nh < hi[b]:
                        if nh < lo[b]:
                            ok = 0
                            break
                        hi[b] = nh
                        if not inq[b]:
                            inq[b] = 1
                            queue[qtail] = b
                            qtail = (qtail + 1) % n
                            qcount += 1
                if not ok:
                    break
        else:
            # clear queue flags left over from the aborted bound pass
            while qcount > 0:
                a = <int> queue[qhead]
                qhead = (qhead + 1) % n
                qcount -= 1
                inq[a] = 0
        if ok and cap >= 0:
            for p in range(<int> devof_ptr[x], <int> devof_ptr[x + 1]):
                d = <int> devof[p]
                if not _mem_ok(d, cap, dev_ptr, dev_items, placed, s, lo, mem, init_mem, evt_t, evt_m):
                    ok = 0
                    break
        if ok:
            for p in range(<int> devof_ptr[x], <int> devof_ptr[x + 1]):
                d = <int> devof[p]
                if not _dev_ok(d, dev_ptr, dev_items, placed, s, lo, hi, dur, evt_t, evt_m, evt_e):
                    ok = 0
                    break
        if ok:
            vstack[depth] = v
            depth += 1
            if depth < n:
                v = lo[order[depth]]
            continue
        # failed try: restore and advance
        for i in range(n):
            lo[i] = snap_lo[depth, i]
            hi[i] = snap_hi[depth, i]
        placed[x] = 0
        v += 1

    if status == SAT:
        return SAT, [int(s[i]) for i in range(n)], int(nodes)
    return status, None, int(nodes)


cdef inline int _mem_ok(
    int d,
    long long cap,
    cnp.int64_t[::1] dev_ptr,
    cnp.int64_t[::1] dev_items,
    cnp.uint8_t[::1] placed,
    cnp.int64_t[::1] s,
    cnp.int64_t[::1] lo,
    cnp.int64_t[::1] mem,
    cnp.int64_t[::1] init_mem,
    cnp.int64_t[::1] evt_t,
    cnp.int64_t[::1] evt_m,
):
    cdef long long run = init_mem[d]
    if run > cap:
        return 0
    cdef int ne = 0
    cdef int p, i, j
    cdef long long tt, tm
    for p in range(<int> dev_ptr[d], <int> dev_ptr[d + 1]):
        i = <int> dev_items[p]
        if placed[i]:
            tt = s[i]
            tm = mem[i]
        elif mem[i] < 0:
            tt = lo[i]
            tm = mem[i]
        else:
            continue
        # insertion sort by time
        j = ne
        while j > 0 and evt_t[j - 1] > tt:
            evt_t[j] = evt_t[j - 1]
            evt_m[j] = evt_m[j - 1]
            j -= 1
        evt_t[j] = tt
        evt_m[j] = tm
        ne += 1
    cdef int k = 0
    cdef long long t
    while k < ne:
        t = evt_t[k]
        while k < ne and evt_t[k] == t:
            run += evt_m[k]
            k += 1
        if run > cap:
            return 0
    return 1


cdef inline int _dev_ok(
    int d,
    cnp.int64_t[::1] dev_ptr,
    cnp.int64_t[::1] dev_items,
    cnp.uint8_t[::1] placed,
    cnp.int64_t[::1] s,
    cnp.int64_t[::1] lo,
    cnp.int64_t[::1] hi,
    cnp.int64_t[::1] dur,
    cnp.int64_t[::1] evt_t,
    cnp.int64_t[::1] evt_m,
    cnp.int64_t[::1] evt_e,
):
    cdef int lo_p = <int> dev_ptr[d]
    cdef int hi_p = <int> dev_ptr[d + 1]
    if hi_p == lo_p:
        return 1
    cdef long long lim = -(1 << 62)
    cdef int ne = 0
    cdef int p, i, j
    cdef long long tt, ee
    # insertion sort by release (a), keep (a, dur, e) aligned
    for p in range(lo_p, hi_p):
        i = <int> dev_items[p]
        if placed[i]:
            tt = s[i]
            ee = s[i] + dur[i]
        else:
            tt = lo[i]
            ee = hi[i] + dur[i]
        if ee > lim:
            lim = ee
        j = ne
        while j > 0 and evt_t[j - 1] > tt:
            evt_t[j] = evt_t[j - 1]
            evt_m[j] = evt_m[j - 1]
            evt_e[j] = evt_e[j - 1]
            j -= 1
        evt_t[j] = tt
        evt_m[j] = dur[i]
        evt_e[j] = ee
        ne += 1
    cdef long long c = 0
    for p in range(ne):
        if evt_t[p] > c:
            c = evt_t[p]
        c += evt_m[p]
    if c > lim:
        return 0
    # release-sorted suffix energetic bound
    cdef long long suf_p = 0
    cdef long long suf_e = -(1 << 62)
    for p in range(ne - 1, -1, -1):
        suf_p += evt_m[p]
        if evt_e[p] > suf_e:
            suf_e = evt_e[p]
        if evt_t[p] + suf_p > suf_e:
            return 0
    # deadline-sorted prefix energetic bound: re-sort by end
    for p in range(ne):
        tt = evt_e[p]
        ee = evt_t[p]
        c = evt_m[p]
        j = p
        while j > 0 and evt_e[j - 1] > tt:
            evt_e[j] = evt_e[j - 1]
            evt_t[j] = evt_t[j - 1]
            evt_m[j] = evt_m[j - 1]
            j -= 1
        evt_e[j] = tt
        evt_t[j] = ee
        evt_m[j] = c
    cdef long long pre_p = 0
    cdef long long pre_a = evt_t[0]
    for p in range(ne):
        pre_p += evt_m[p]
        if evt_t[p] < pre_a:
            pre_a = evt_t[p]
        if pre_a + pre_p > evt_e[p]:
            return 0
    return 1
