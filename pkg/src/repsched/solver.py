"""Min-makespan decision/optimization engine over block instances.

Lowers instance sets to the decide kernel: dependency edges are derived
per micro-batch from the placement DAG, per-stage micro-batch symmetry is
broken with ordering edges (instances of a stage are interchangeable, so
some optimum always has starts increasing in the index), and equal-cost
tie-breaking is the lexicographically smallest start vector in
(stage, micro-batch) order, which the kernel's lex-first DFS returns.

Backends: "bb" is the self-contained branch-and-bound kernel (default),
"smt" encodes the same model for z3 when that optional extra is installed.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from . import _core
from .placement import BlockInstance, PlacementSpec

DEFAULT_BUDGET_SECS = 300.0
BUDGET_ENV_VAR = "TESSEL_BUDGET_SECS"
# Per-probe node cap inside optimization loops: keeps hard refutations from
# absorbing the whole wall budget and makes probe outcomes deterministic.
DEFAULT_PROBE_NODES = 8_000_000


def default_budget() -> float:
    raw = os.environ.get(BUDGET_ENV_VAR)
    if raw is None:
        return DEFAULT_BUDGET_SECS
    try:
        return float(raw)
    except ValueError:
        return DEFAULT_BUDGET_SECS


class Status(Enum):
    OPTIMAL = "optimal"
    SATISFIABLE = "satisfiable"
    INFEASIBLE = "infeasible"
    TIMEOUT = "timeout"


@dataclass
class SolveStats:
    decides: int = 0
    nodes: int = 0
    wall_secs: float = 0.0

    def merge(self, other: "SolveStats") -> None:
        self.decides += other.decides
        self.nodes += other.nodes
        self.wall_secs += other.wall_secs


@dataclass(frozen=True)
class SolveRequest:
    placement: PlacementSpec
    instances: tuple[BlockInstance, ...]
    initial_memory: tuple[int, ...]
    mem_capacity: Optional[int] = None  # None: unconstrained
    horizon: Optional[int] = None
    mode: str = "optimize"  # "optimize" | "decide"
    # Already-scheduled context blocks: they take part in exclusivity,
    # memory and dependency constraints at their fixed start times.
    fixed: tuple[tuple[BlockInstance, int], ...] = ()
    # Extra per-instance earliest starts (e.g. phase fencing).
    min_starts: tuple[tuple[BlockInstance, int], ...] = ()

    def __post_init__(self):
        cap = self.mem_capacity
        if cap is not None:
            for v in self.initial_memory:
                if not 0 <= v <= cap:
                    raise ValueError(f"initial_memory {v} outside [0, {cap}]")
        if self.mode not in ("optimize", "decide"):
            raise ValueError(f"bad mode {self.mode!r}")
        present = set(self.instances) | {b for b, _ in self.fixed}
        if len(present) != len(self.instances) + len(self.fixed):
            raise ValueError("instances and fixed blocks overlap")


@dataclass
class SolveResult:
    status: Status
    assignment: Optional[dict[BlockInstance, int]]
    objective: Optional[int]
    stats: SolveStats = field(default_factory=SolveStats)


class _Lowered:
    """Flat arrays for the kernel plus the instance ordering."""

    def __init__(self, req: SolveRequest):
        p = req.placement
        if p.num_devices > 64:
            raise ValueError("kernel supports at most 64 devices")
        fixed_map = dict(req.fixed)
        free = sorted(req.instances)
        self.items: list[BlockInstance] = sorted(fixed_map) + free
        self.n_fixed = len(fixed_map)
        index = {inst: k for k, inst in enumerate(self.items)}
        n = len(self.items)
        self.n = n
        self.dur = [p.block(b.stage).time_cost for b in self.items]
        self.mem = [p.block(b.stage).mem_delta for b in self.items]
        self.devmask = [
            sum(1 << d for d in p.block(b.stage).devices) for b in self.items
        ]
        min_starts = dict(req.min_starts)
        self.lo = [0] * n
        for k, inst in enumerate(self.items):
            if inst in fixed_map:
                self.lo[k] = fixed_map[inst]
            else:
                self.lo[k] = max(0, min_starts.get(inst, 0))

        edges: list[tuple[int, int, int]] = []
        present = set(self.items)
        for i, j in sorted(p.deps):
            ti = p.block(i).time_cost
            for inst in self.items:
                if inst.stage != i:
                    continue
                other = BlockInstance(j, inst.mb)
                if other in present:
                    edges.append((index[inst], index[other], ti))
        # Symmetry-breaking ordering between same-stage free instances with
        # consecutive micro-batch indices.
        by_stage: dict[int, list[BlockInstance]] = {}
        for inst in free:
            by_stage.setdefault(inst.stage, []).append(inst)
        for stage, insts in by_stage.items():
            t = p.block(stage).time_cost
            insts.sort()
            for a, b in zip(insts, insts[1:]):
                if b.mb == a.mb + 1:
                    edges.append((index[a], index[b], t))
        self.edges = edges
        self.order = list(range(n))  # fixed first, then free in (stage, mb)
        self.cap = -1 if req.mem_capacity is None else req.mem_capacity
        self.init = list(req.initial_memory)
        self.ndev = p.num_devices

    def fixed_max_end(self) -> int:
        out = 0
        for k in range(self.n_fixed):
            out = max(out, self.lo[k] + self.dur[k])
        return out

    def sum_free_dur(self) -> int:
        return sum(self.dur[self.n_fixed :])

    def makespan_of(self, starts: list[int]) -> int:
        return max(s + d for s, d in zip(starts, self.dur))

    def to_assignment(self, starts: list[int]) -> dict[BlockInstance, int]:
        return {
            inst: starts[k]
            for k, inst in enumerate(self.items)
            if k >= self.n_fixed
        }


def _run_decide(
    low: _Lowered,
    horizon: Optional[int],
    deadline: float,
    stats: SolveStats,
    probe_nodes: int = 0,
):
    lo = list(low.lo)
    big = sum(low.dur) + max(lo, default=0) + 1
    hi = list(lo[: low.n_fixed]) + [big] * (low.n - low.n_fixed)
    if horizon is not None:
        for k in range(low.n):
            cap_hi = horizon - low.dur[k]
            if k < low.n_fixed:
                if lo[k] > cap_hi:
                    return _core.UNSAT, None
            else:
                hi[k] = cap_hi
                if hi[k] < lo[k]:
                    return _core.UNSAT, None
    t0 = time.monotonic()
    status, starts, nodes = _core.decide(
        low.n,
        low.dur,
        low.devmask,
        low.mem,
        [e for tup in low.edges for e in tup],
        low.order,
        lo,
        hi,
        low.ndev,
        low.init,
        low.cap,
        probe_nodes,
        deadline,
    )
    stats.decides += 1
    stats.nodes += nodes
    stats.wall_secs += time.monotonic() - t0
    return status, starts


def _lower_bound(low: _Lowered) -> int:
    """Critical-path / device-load lower bound on the makespan."""
    n = low.n
    lo = list(low.lo)
    # Bellman fixpoint on lower bounds only (no positive cycles in a DAG
    # plus ordering edges).
    changed = True
    passes = 0
    while changed and passes <= n + 1:
        changed = False
        passes += 1
        for a, b, lag in low.edges:
            nl = lo[a] + lag
            if nl > lo[b]:
                lo[b] = nl
                changed = True
    bound = max((lo[k] + low.dur[k] for k in range(n)), default=0)
    for d in range(low.ndev):
        seq = sorted(
            (lo[k], low.dur[k]) for k in range(n) if low.devmask[k] >> d & 1
        )
        c = 0
        for t0, du in seq:
            c = max(c, t0) + du
        bound = max(bound, c)
    return bound


def solve_decide(
    req: SolveRequest,
    budget: Optional[float] = None,
    backend: str = "bb",
    probe_nodes: int = 0,
) -> SolveResult:
    """Satisfiability of the request within its horizon."""
    if req.horizon is None:
        raise ValueError("decide mode needs a horizon")
    if backend == "smt":
        from . import smt

        return smt.solve_decide(req, budget)
    stats = SolveStats()
    low = _Lowered(req)
    deadline = time.monotonic() + (budget if budget is not None else default_budget())
    status, starts = _run_decide(low, req.horizon, deadline, stats, probe_nodes)
    if status == _core.SAT:
        return SolveResult(Status.SATISFIABLE, low.to_assignment(starts), low.makespan_of(starts), stats)
    if status == _core.UNSAT:
        return SolveResult(Status.INFEASIBLE, None, None, stats)
    return SolveResult(Status.TIMEOUT, None, None, stats)


def solve_min_makespan(
    req: SolveRequest,
    budget: Optional[float] = None,
    backend: str = "bb",
    probe_nodes: Optional[int] = None,
) -> SolveResult:
    """Binary search on the makespan objective over satisfiability checks.

    Each probe is capped at `probe_nodes` search nodes; a probe that blows
    the cap ends the search with status TIMEOUT and the best witness found
    so far (optimality unproven).
    """
    if backend == "smt":
        from . import smt

        return smt.solve_min_makespan(req, budget)
    pn = DEFAULT_PROBE_NODES if probe_nodes is None else probe_nodes
    stats = SolveStats()
    low = _Lowered(req)
    deadline = time.monotonic() + (budget if budget is not None else default_budget())

    lb = max(_lower_bound(low), low.fixed_max_end())
    ub = low.fixed_max_end() + low.sum_free_dur()
    for k in range(low.n):
        ub = max(ub, low.lo[k] + low.dur[k])
    if req.horizon is not None:
        ub = min(ub, req.horizon)
        if ub < lb:
            return SolveResult(Status.INFEASIBLE, None, None, stats)

    status, starts = _run_decide(low, ub, deadline, stats, pn)
    if status == _core.UNSAT:
        return SolveResult(Status.INFEASIBLE, None, None, stats)
    if status == _core.TIMEOUT:
        return SolveResult(Status.TIMEOUT, None, None, stats)
    best = starts
    hi = low.makespan_of(starts)
    best_h = hi
    lo_h = lb
    while lo_h < hi:
        mid = (lo_h + hi) // 2
        status, starts = _run_decide(low, mid, deadline, stats, pn)
        if status == _core.SAT:
            hi = low.makespan_of(starts)
            best = starts
            best_h = mid
        elif status == _core.UNSAT:
            lo_h = mid + 1
        else:
            return SolveResult(
                Status.TIMEOUT, low.to_assignment(best), low.makespan_of(best), stats
            )
    # Canonical witness: lex-min under the optimal horizon itself.
    if best_h != hi:
        status, starts = _run_decide(low, hi, deadline, stats, pn)
        if status == _core.SAT:
            best = starts
        elif status == _core.TIMEOUT:
            return SolveResult(
                Status.TIMEOUT, low.to_assignment(best), low.makespan_of(best), stats
            )
    return SolveResult(Status.OPTIMAL, low.to_assignment(best), low.makespan_of(best), stats)


def full_request(
    p: PlacementSpec,
    n_microbatches: int,
    mem_capacity: Optional[int] = None,
    horizon: Optional[int] = None,
    mode: str = "optimize",
) -> SolveRequest:
    instances = tuple(
        BlockInstance(st, n)
        for st in range(p.num_stages)
        for n in range(n_microbatches)
    )
    return SolveRequest(
        placement=p,
        instances=instances,
        initial_memory=(0,) * p.num_devices,
        mem_capacity=mem_capacity,
        horizon=horizon,
        mode=mode,
    )
