"""Independent oracles for freezing expected values.

These deliberately use a different algorithm family from the package
solver: an explicit timeline DFS that starts blocks only at event times
(complete for min-makespan because valid schedules can always be
left-shifted onto event times; memory releases happen at block starts,
which are themselves events).
"""

from __future__ import annotations

import random
from itertools import product

from repsched.placement import BlockInstance, PlacementSpec


def instance_deps(p: PlacementSpec, instances):
    present = set(instances)
    out = []
    for i, j in sorted(p.deps):
        for inst in instances:
            if inst.stage == i and BlockInstance(j, inst.mb) in present:
                out.append((inst, BlockInstance(j, inst.mb)))
    return out


def brute_exists(p, instances, horizon, cap=None, init_mem=None):
    """Is there a schedule of `instances` with makespan <= horizon?"""
    instances = sorted(instances)
    deps = instance_deps(p, instances)
    preds = {b: [] for b in instances}
    for a, b in deps:
        preds[b].append(a)
    dur = {b: p.block(b.stage).time_cost for b in instances}
    dmem = {b: p.block(b.stage).mem_delta for b in instances}
    devs = {b: p.block(b.stage).devices for b in instances}
    init = list(init_mem) if init_mem else [0] * p.num_devices
    if cap is not None and any(v > cap for v in init):
        return None

    seen_fail = set()

    def rec(tau, running, done_at, memstate, remaining):
        # running: tuple of (end, inst) sorted; done_at: dict inst -> end
        if not remaining:
            return {}
        key = (tau, running, frozenset(remaining))
        if key in seen_fail:
            return None
        # try starting each eligible block at tau
        busy = set()
        for end, inst in running:
            busy |= devs[inst]
        for b in sorted(remaining):
            if devs[b] & busy:
                continue
            if any(a in remaining or done_at[a] > tau for a in preds[b]):
                continue
            if tau + dur[b] > horizon:
                continue
            if cap is not None:
                if any(memstate[d] + dmem[b] > cap for d in devs[b]):
                    continue
            mem2 = list(memstate)
            for d in devs[b]:
                mem2[d] += dmem[b]
            running2 = tuple(sorted(running + ((tau + dur[b], b),)))
            done2 = dict(done_at)
            done2[b] = tau + dur[b]
            rem2 = remaining - {b}
            sub = rec(tau, running2, done2, tuple(mem2), rem2)
            if sub is not None:
                sub = dict(sub)
                sub[b] = tau
                return sub
        if running:
            nxt = running[0][0]
            rest = tuple(r for r in running if r[0] > nxt)
            sub = rec(nxt, rest, done_at, memstate, remaining)
            if sub is not None:
                return sub
        seen_fail.add(key)
        return None

    done0 = {b: 0 for b in instances}
    return rec(0, (), done0, tuple(init), frozenset(instances))


def brute_min_makespan(p, instances, cap=None, init_mem=None):
    """Minimal makespan by iterative deepening; returns (makespan, starts)."""
    instances = sorted(instances)
    if not instances:
        return 0, {}
    lb = 0
    for d in range(p.num_devices):
        lb = max(
            lb,
            sum(p.block(b.stage).time_cost for b in instances if d in p.block(b.stage).devices),
        )
    ub = sum(p.block(b.stage).time_cost for b in instances)
    for h in range(lb, ub + 1):
        res = brute_exists(p, instances, h, cap=cap, init_mem=init_mem)
        if res is not None:
            mk = max(t + p.block(b.stage).time_cost for b, t in res.items())
            return mk, res
    return None, None


def brute_timeline_valid(p, n_mb, entries, cap=None, init_mem=None):
    """Materialized-timeline validity check (for schedules with small makespan)."""
    mk = max(t + p.block(b.stage).time_cost for b, t in entries.items())
    occupancy = [[0] * mk for _ in range(p.num_devices)]
    for b, t in entries.items():
        if t < 0:
            return False
        blk = p.block(b.stage)
        for d in blk.devices:
            for tau in range(t, t + blk.time_cost):
                occupancy[d][tau] += 1
                if occupancy[d][tau] > 1:
                    return False
    for i, j in p.deps:
        ti = p.block(i).time_cost
        for n in range(n_mb):
            if entries[BlockInstance(i, n)] + ti > entries[BlockInstance(j, n)]:
                return False
    capacity = cap if cap is not None else p.mem_capacity
    for d in range(p.num_devices):
        run = init_mem[d] if init_mem else 0
        deltas = [0] * (mk + 1)
        for b, t in entries.items():
            blk = p.block(b.stage)
            if d in blk.devices:
                deltas[t] += blk.mem_delta
        for tau in range(mk + 1):
            run += deltas[tau]
            if run > capacity:
                return False
    return True


def random_placement(rng: random.Random, max_k=6, max_d=3):
    from repsched.placement import BlockSpec

    k = rng.randint(2, max_k)
    d = rng.randint(2, max_d)
    blocks = []
    for st in range(k):
        ndev = 1 if rng.random() < 0.8 else rng.randint(1, d)
        devs = frozenset(rng.sample(range(d), ndev))
        blocks.append(
            BlockSpec(
                st,
                f"s{st}",
                rng.choice(("forward", "backward", "other")),
                devs,
                rng.randint(1, 3),
                rng.choice((-1, 0, 1)),
            )
        )
    deps = set()
    for i in range(k):
        for j in range(i + 1, k):
            if rng.random() < 0.35:
                deps.add((i, j))
    return PlacementSpec(d, rng.randint(3, 8), tuple(blocks), frozenset(deps))


def random_valid_schedule(rng: random.Random, p: PlacementSpec, n_mb: int):
    """Randomized list scheduling; valid by construction (unbounded memory
    variants pass cap=None)."""
    from repsched.schedule import Schedule

    instances = [
        BlockInstance(st, n) for st in range(p.num_stages) for n in range(n_mb)
    ]
    deps = instance_deps(p, instances)
    preds = {b: [] for b in instances}
    for a, b in deps:
        preds[b].append(a)
    entries = {}
    running = []  # (end, inst)
    tau = 0
    remaining = set(instances)
    mem = [0] * p.num_devices
    while remaining:
        busy = set()
        for end, inst in running:
            busy |= p.block(inst.stage).devices
        elig = [
            b
            for b in sorted(remaining)
            if not (p.block(b.stage).devices & busy)
            and all(a not in remaining and entries[a] + p.block(a.stage).time_cost <= tau for a in preds[b])
            and all(mem[d] + p.block(b.stage).mem_delta <= p.mem_capacity for d in p.block(b.stage).devices)
        ]
        if elig and (not running or rng.random() < 0.7):
            b = rng.choice(elig)
            entries[b] = tau
            for d in p.block(b.stage).devices:
                mem[d] += p.block(b.stage).mem_delta
            running.append((tau + p.block(b.stage).time_cost, b))
            running.sort()
            remaining.discard(b)
        elif running:
            tau = running[0][0]
            running = [r for r in running if r[0] > tau]
        else:
            tau += 1  # memory-starved with nothing running: wait (cannot resolve)
            if tau > 10_000:
                return None
    return Schedule(p, n_mb, entries)
