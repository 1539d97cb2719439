"""Repetend construction: pruned index enumeration, candidate solving, compaction.

A repetend holds exactly one instance of every stage with micro-batch
indices assigned per stage; consecutive copies shift every index by one
and start `period` time units apart.  Copies may overlap globally but
never on a single device (W_R >= 0), so the period must cover every
device's execution span E_R plus its wait W_R.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterator, Optional

from . import _core
from .placement import BlockInstance, PlacementSpec
from .solver import SolveStats

# Node cap for period probes above the load bound (see solve_repetend).
PROBE_NODES = 400_000


@dataclass(frozen=True)
class Repetend:
    placement: PlacementSpec
    assignment: tuple[int, ...]  # micro-batch index per stage
    n_r: int
    internal: tuple[int, ...]  # start time per stage, min = 0
    period: int
    exec_spans: tuple[int, ...]  # E_R per device
    waits: tuple[int, ...]  # W_R per device
    entry_mem: tuple[int, ...]

    @property
    def t_r(self) -> int:
        return self.period

    def instances(self) -> list[tuple[BlockInstance, int]]:
        return [
            (BlockInstance(st, self.assignment[st]), self.internal[st])
            for st in range(len(self.assignment))
        ]

    def tile_entries(self, copies: int, offset: int = 0) -> dict[BlockInstance, int]:
        """Materialize `copies` consecutive copies (indices +k, starts +k*P)."""
        out = {}
        for k in range(copies):
            for st, n in enumerate(self.assignment):
                out[BlockInstance(st, n + k)] = offset + self.internal[st] + k * self.period
        return out


@dataclass
class RepetendOutcome:
    repetend: Optional[Repetend]
    status: str  # "ok" | "infeasible" | "bound" | "timeout"


def lower_bound(p: PlacementSpec) -> int:
    """Max per-device execution load of one micro-batch (Alg. 1 GetLowerBound)."""
    return max(p.device_load(d) for d in range(p.num_devices))


def iter_repetend_assignments(p: PlacementSpec, n_r: int) -> Iterator[tuple[int, ...]]:
    """Yield every per-stage index vector in [0, n_r)^K with n_i >= n_j on
    each edge i->j and min index 0, in lexicographic order."""
    k = p.num_stages
    succ = [p.successors(st) for st in range(k)]
    pred = [p.predecessors(st) for st in range(k)]
    vec = [0] * k

    def rec(st: int, cur_min: int):
        if st == k:
            if cur_min == 0:
                yield tuple(vec)
            return
        lo = 0
        hi = n_r - 1
        for j in succ[st]:
            if j < st:
                lo = max(lo, vec[j])
        for i in pred[st]:
            if i < st:
                hi = min(hi, vec[i])
        for v in range(lo, hi + 1):
            vec[st] = v
            yield from rec(st + 1, min(cur_min, v))

    yield from rec(0, n_r)


def entry_memory(p: PlacementSpec, assignment) -> tuple[int, ...]:
    """Per-device memory consumed by the warmup blocks {B_i^n | n < n_i}."""
    out = [0] * p.num_devices
    for st, n in enumerate(assignment):
        blk = p.block(st)
        for d in blk.devices:
            out[d] += n * blk.mem_delta
    return tuple(out)


def steady_memory_ok(p: PlacementSpec) -> bool:
    """Repetition is memory-safe only if no device accumulates per copy."""
    return all(v <= 0 for v in p.net_mem_per_device())


class _CandidateModel:
    """Per-placement arrays reused across candidates and periods.

    Every edge lag has the form base - coef * period: dependency edges use
    (time_cost, index delta), device window pairs use (time_cost, 1).
    """

    def __init__(self, p: PlacementSpec):
        import numpy as np

        self.p = p
        k = p.num_stages
        self.k = k
        self.dur = np.array([p.block(st).time_cost for st in range(k)], dtype=np.int64)
        self.mask = np.array(
            [sum(1 << d for d in p.block(st).devices) for st in range(k)],
            dtype=np.uint64,
        )
        self.mem = np.array([p.block(st).mem_delta for st in range(k)], dtype=np.int64)
        # Branch on the widest blocks first: multi-device blocks frame the
        # period layout, single-device blocks then slot into forced gaps.
        self.order = np.array(
            sorted(range(k), key=lambda st: (-len(p.block(st).devices), st)),
            dtype=np.int64,
        )
        dep_rows = sorted(p.deps)
        win_rows = []
        for d in range(p.num_devices):
            stages = p.device_stages(d)
            for x in stages:
                for y in stages:
                    if x != y:
                        win_rows.append((x, y))
        rows = dep_rows + win_rows
        self.src = np.array([a for a, _ in rows], dtype=np.int64)
        self.dst = np.array([b for _, b in rows], dtype=np.int64)
        self.base = self.dur[self.src]
        self.n_dep = len(dep_rows)
        self.coef = np.ones(len(rows), dtype=np.int64)
        self.edges = np.empty((len(rows), 3), dtype=np.int64)
        self.edges[:, 0] = self.src
        self.edges[:, 1] = self.dst
        self.max_dur = int(self.dur.max()) if k else 1

    def set_assignment(self, assignment):
        import numpy as np

        deltas = np.asarray(assignment, dtype=np.int64)
        self.coef[: self.n_dep] = (
            deltas[self.src[: self.n_dep]] - deltas[self.dst[: self.n_dep]]
        )

    def decide(self, period, cap, entry, deadline, stats=None, node_budget=0):
        k = self.k
        self.edges[:, 2] = self.base - self.coef * period
        # The constraint system is translation-invariant, so stage 0 can be
        # anchored: any solution shifts to one where every other start lies
        # within the active-constraint diameter of stage 0.
        anchor = (k - 1) * (period + self.max_dur)
        lo = [0] * k
        hi = [2 * anchor] * k
        lo[0] = hi[0] = anchor
        t0 = time.monotonic()
        status, starts, nodes = _core.decide(
            k,
            self.dur,
            self.mask,
            self.mem,
            self.edges,
            self.order,
            lo,
            hi,
            self.p.num_devices,
            list(entry),
            -1 if cap is None else cap,
            node_budget,
            deadline,
        )
        if stats is not None:
            stats.decides += 1
            stats.nodes += nodes
            stats.wall_secs += time.monotonic() - t0
        return status, starts


_MODEL_CACHE: dict[int, _CandidateModel] = {}


def _model_for(p: PlacementSpec) -> _CandidateModel:
    key = id(p)
    model = _MODEL_CACHE.get(key)
    if model is None or model.p is not p:
        _MODEL_CACHE.clear()
        model = _CandidateModel(p)
        _MODEL_CACHE[key] = model
    return model


def _decide_period(
    p: PlacementSpec,
    assignment,
    period: int,
    cap: Optional[int],
    entry,
    deadline: float,
    stats: Optional[SolveStats] = None,
):
    model = _model_for(p)
    model.set_assignment(assignment)
    return model.decide(period, cap, entry, deadline, stats)


def compact_period(
    p: PlacementSpec, internal_schedule, assignment
) -> tuple[int, tuple[int, ...], tuple[int, ...]]:
    """Smallest period at which copies of this internal schedule tile
    validly, with the per-device execution/wait decomposition.

    With copies barred from interleaving on a device and per-copy net
    memory <= 0, the scan collapses to: P must cover every device span and
    every cross-copy dependency lag.
    """
    starts = dict(internal_schedule)
    spans = []
    for d in range(p.num_devices):
        stages = p.device_stages(d)
        if not stages:
            spans.append(0)
            continue
        lo = min(starts[st] for st in stages)
        hi = max(starts[st] + p.block(st).time_cost for st in stages)
        spans.append(hi - lo)
    period = max(1, max(spans))
    for i, j in p.deps:
        delta = assignment[i] - assignment[j]
        if delta < 0:
            raise ValueError("assignment violates the descending-index property")
        if delta > 0:
            need = starts[i] + p.block(i).time_cost - starts[j]
            if need > 0:
                period = max(period, -(-need // delta))
    waits = tuple(period - e for e in spans)
    return period, tuple(spans), waits


def solve_repetend(
    p: PlacementSpec,
    assignment,
    mem_capacity: Optional[int],
    upper: Optional[int] = None,
    budget: Optional[float] = None,
    stats: Optional[SolveStats] = None,
) -> RepetendOutcome:
    """Minimize the candidate's period subject to exclusivity, memory with
    entry offsets, and dependency constraints; scan periods upward from the
    device-load lower bound so the first feasible period is minimal."""
    n_r = max(assignment) + 1
    entry = entry_memory(p, assignment)
    if mem_capacity is not None:
        if any(e > mem_capacity for e in entry):
            return RepetendOutcome(None, "infeasible")
        if not steady_memory_ok(p):
            return RepetendOutcome(None, "infeasible")
    lb = lower_bound(p)
    ub = sum(b.time_cost for b in p.blocks)
    if upper is not None:
        ub = min(ub, upper - 1)
    if ub < lb:
        return RepetendOutcome(None, "bound")
    deadline = time.monotonic() + budget if budget is not None else 0.0
    model = _model_for(p)
    model.set_assignment(assignment)

    def probe(period, node_budget=0):
        return model.decide(period, mem_capacity, entry, deadline, stats, node_budget)

    monotone = all(assignment[i] >= assignment[j] for i, j in p.deps)
    # Scan periods upward from the load bound.  Probes at the bound run
    # exhaustively (exact zero-idle detection); wider periods get a node
    # cap, because loose windows can make individual probes explode and a
    # capped-out probe merely skips a candidate that cannot win anyway.
    witness = None
    period = None
    for cand in range(lb, ub + 1):
        capped = 0 if cand == lb else PROBE_NODES
        status, starts = probe(cand, capped)
        if status == _core.TIMEOUT:
            if time.monotonic() > deadline and budget is not None:
                return RepetendOutcome(None, "timeout")
            if not monotone:
                return RepetendOutcome(None, "timeout")
            continue  # node cap: cannot conclude; keep scanning upward
        if status == _core.SAT:
            period, witness = cand, starts
            break
    if period is None:
        return RepetendOutcome(None, "bound" if upper is not None else "infeasible")

    base = min(witness)
    internal = tuple(s - base for s in witness)
    if monotone:
        # Exact for this witness; can undercut the scanned period when a
        # capped-out probe was skipped on the way up.
        period, spans, waits = compact_period(p, dict(enumerate(internal)), tuple(assignment))
    else:
        spans = []
        for d in range(p.num_devices):
            stages = p.device_stages(d)
            if stages:
                spans.append(
                    max(internal[st] + p.block(st).time_cost for st in stages)
                    - min(internal[st] for st in stages)
                )
            else:
                spans.append(0)
        spans = tuple(spans)
    waits = tuple(period - e for e in spans)
    return RepetendOutcome(
        Repetend(p, tuple(assignment), n_r, internal, period, spans, waits, entry),
        "ok",
    )
