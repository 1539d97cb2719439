"""Warmup/cooldown construction and the full two-phase schedule search.

The search enumerates pruned repetend candidates by increasing micro-batch
count, solves each candidate's period, keeps the best, and finally
completes the schedule: the warmup is solved time-optimally on its own,
repetend copy 0 is placed at the earliest admissible offset, and the
cooldown is solved time-optimally against the already-placed blocks (so
the drain may interleave into the repetend's trailing idle).  In lazy mode
(default) per-improvement completion is a satisfiability check only and
the time-optimal completion runs once at the end; eager mode completes on
every improvement and yields the same final schedule.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .placement import BlockInstance, PlacementSpec
from .repetend import (
    Repetend,
    RepetendOutcome,
    entry_memory,
    iter_repetend_assignments,
    lower_bound,
    solve_repetend,
    steady_memory_ok,
)
from .schedule import RepetendInfo, Schedule
from .solver import (
    SolveRequest,
    SolveStats,
    Status,
    default_budget,
    solve_decide,
    solve_min_makespan,
)

DEFAULT_MAX_NR = 8


class NoFeasibleSchedule(Exception):
    pass


class CompletionTimeout(Exception):
    """Time-optimal completion exceeded its budget (fatal, with diagnostic)."""


@dataclass
class CandidateRecord:
    n_r: int
    assignment: tuple[int, ...]
    t_r: Optional[int]
    status: str


@dataclass
class SearchReport:
    lower_bound: int
    max_nr: int
    inflights: int
    lazy: bool
    candidates: list[CandidateRecord] = field(default_factory=list)
    improvements: list[tuple[tuple[int, ...], int]] = field(default_factory=list)
    phase_secs: dict = field(default_factory=lambda: {"repetend": 0.0, "warmup": 0.0, "cooldown": 0.0})
    stats: SolveStats = field(default_factory=SolveStats)
    timed_out: bool = False
    best_t_r: Optional[int] = None
    diagnostics: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "lower_bound": self.lower_bound,
            "max_nr": self.max_nr,
            "inflights": self.inflights,
            "lazy": self.lazy,
            "timed_out": self.timed_out,
            "diagnostics": self.diagnostics,
            "best_t_r": self.best_t_r,
            "phase_secs": self.phase_secs,
            "solver": {
                "decides": self.stats.decides,
                "nodes": self.stats.nodes,
                "wall_secs": self.stats.wall_secs,
            },
            "candidates": [
                {
                    "nr": c.n_r,
                    "assignment": list(c.assignment),
                    "t_r": c.t_r,
                    "status": c.status,
                }
                for c in self.candidates
            ],
        }


@dataclass
class SearchResult:
    schedule: Optional[Schedule]
    report: SearchReport


def warmup_blocks(rep: Repetend) -> set[BlockInstance]:
    return {
        BlockInstance(st, n)
        for st, r in enumerate(rep.assignment)
        for n in range(r)
    }


def cooldown_blocks(rep: Repetend, n_r: Optional[int] = None) -> set[BlockInstance]:
    n_r = rep.n_r if n_r is None else n_r
    return {
        BlockInstance(st, n)
        for st, r in enumerate(rep.assignment)
        for n in range(r + 1, n_r)
    }


def cooldown_entry_memory(p: PlacementSpec, rep: Repetend, n: int) -> tuple[int, ...]:
    """Memory state when the cooldown begins, with the repetend repeated
    (n - N_R + 1) times; net-zero placements make this independent of n."""
    reps = n - rep.n_r + 1
    net = p.net_mem_per_device()
    return tuple(e + reps * net[d] for d, e in enumerate(rep.entry_mem))


def cal_max_inflight(p: PlacementSpec, mem_capacity: Optional[int]) -> Optional[int]:
    """Largest number of concurrent per-micro-batch allocations that fit in
    memory: per device, the max-demand prefix of one micro-batch bounds how
    many warmup copies can coexist; the min over devices is returned
    (None = unbounded)."""
    if mem_capacity is None:
        return None
    out: Optional[int] = None
    for d in range(p.num_devices):
        run = 0
        peak = 0
        for st in p.device_stages(d):
            run += p.block(st).mem_delta
            peak = max(peak, run)
        if peak > 0:
            c = mem_capacity // peak
            out = c if out is None else min(out, c)
    return out


def _budget_left(deadline: float) -> float:
    return max(0.0, deadline - time.monotonic())


def _completion_feasible(
    p: PlacementSpec, rep: Repetend, cap: Optional[int], deadline: float, report: SearchReport
) -> bool:
    for phase, instances, init in (
        ("warmup", warmup_blocks(rep), (0,) * p.num_devices),
        (
            "cooldown",
            cooldown_blocks(rep),
            tuple(max(0, v) for v in cooldown_entry_memory(p, rep, rep.n_r)),
        ),
    ):
        if not instances:
            continue
        horizon = sum(p.block(b.stage).time_cost for b in instances)
        req = SolveRequest(
            placement=p,
            instances=tuple(sorted(instances)),
            initial_memory=init,
            mem_capacity=cap,
            horizon=horizon,
            mode="decide",
        )
        res = solve_decide(req, budget=_budget_left(deadline), probe_nodes=2_000_000)
        report.stats.merge(res.stats)
        if res.status != Status.SATISFIABLE:
            return False
    return True


def complete_schedule(
    p: PlacementSpec,
    rep: Repetend,
    cap: Optional[int],
    deadline: float,
    report: Optional[SearchReport] = None,
) -> Schedule:
    """Assemble warmup || copy 0 || cooldown at N = N_R."""
    report = report if report is not None else SearchReport(0, 0, 0, True)
    wu = tuple(sorted(warmup_blocks(rep)))
    entries: dict[BlockInstance, int] = {}
    t0 = time.monotonic()
    if wu:
        res = solve_min_makespan(
            SolveRequest(
                placement=p,
                instances=wu,
                initial_memory=(0,) * p.num_devices,
                mem_capacity=cap,
            ),
            budget=_budget_left(deadline),
        )
        report.stats.merge(res.stats)
        if res.status == Status.TIMEOUT and res.assignment is None:
            raise CompletionTimeout(f"warmup completion timed out ({len(wu)} blocks)")
        if res.status == Status.INFEASIBLE:
            raise NoFeasibleSchedule(f"warmup infeasible for assignment {rep.assignment}")
        if res.status == Status.TIMEOUT:
            report.diagnostics.append(
                f"warmup completed at {res.objective} but optimality is unproven"
            )
        entries.update(res.assignment)
        w_end = res.objective
    else:
        w_end = 0
    report.phase_secs["warmup"] += time.monotonic() - t0

    # Repetend copy 0 at the earliest admissible offset >= warmup end: every
    # warmup block ends by w_end and internal starts are >= 0, so w_end
    # itself is admissible (dependencies, exclusivity and the memory state
    # all align there).
    offset = w_end
    span = max(
        rep.internal[st] + p.block(st).time_cost for st in range(p.num_stages)
    )
    for st, n in enumerate(rep.assignment):
        entries[BlockInstance(st, n)] = offset + rep.internal[st]

    cd = tuple(sorted(cooldown_blocks(rep)))
    t0 = time.monotonic()
    if cd:
        # Fence each cooldown block behind its devices' copy-0 window start;
        # keeps structural extension valid (shifted cooldown can never
        # collide with inserted copies).
        dev_window_start = {}
        for d in range(p.num_devices):
            stages = p.device_stages(d)
            if stages:
                dev_window_start[d] = offset + min(rep.internal[st] for st in stages)
        min_starts = []
        for b in cd:
            fence = max(
                (dev_window_start[d] for d in p.block(b.stage).devices), default=0
            )
            min_starts.append((b, fence))
        res = solve_min_makespan(
            SolveRequest(
                placement=p,
                instances=cd,
                initial_memory=(0,) * p.num_devices,
                mem_capacity=cap,
                fixed=tuple(sorted(entries.items())),
                min_starts=tuple(min_starts),
            ),
            budget=_budget_left(deadline),
        )
        report.stats.merge(res.stats)
        if res.status == Status.TIMEOUT and res.assignment is None:
            raise CompletionTimeout(f"cooldown completion timed out ({len(cd)} blocks)")
        if res.status == Status.INFEASIBLE:
            raise NoFeasibleSchedule(f"cooldown infeasible for assignment {rep.assignment}")
        if res.status == Status.TIMEOUT:
            report.diagnostics.append(
                f"cooldown completed at {res.objective} but optimality is unproven"
            )
        entries.update(res.assignment)
    report.phase_secs["cooldown"] += time.monotonic() - t0

    info = RepetendInfo(start=offset, end=offset + span, period=rep.period, nr=rep.n_r)
    return Schedule(p, rep.n_r, entries, info)


def _eval_candidate(args):
    p, asg, cap, upper, budget = args
    stats = SolveStats()
    out = solve_repetend(p, asg, cap, upper=upper, budget=budget, stats=stats)
    return out, stats


def search(
    p: PlacementSpec,
    mem_capacity: Optional[int] = None,
    max_nr: Optional[int] = None,
    lazy: bool = True,
    budget: Optional[float] = None,
    jobs: int = 1,
) -> SearchResult:
    """Two-phase schedule search: repetend construction then completion."""
    cap = mem_capacity
    lb = lower_bound(p)
    total = sum(b.time_cost for b in p.blocks)
    inflights = cal_max_inflight(p, cap)
    limit = max_nr if max_nr is not None else DEFAULT_MAX_NR
    if inflights is not None:
        limit = min(limit, inflights)
    report = SearchReport(
        lower_bound=lb,
        max_nr=limit,
        inflights=inflights if inflights is not None else -1,
        lazy=lazy,
    )
    if cap is not None and not steady_memory_ok(p):
        raise NoFeasibleSchedule(
            "per-device net memory of one micro-batch must be <= 0 to repeat"
        )
    deadline = time.monotonic() + (budget if budget is not None else default_budget())

    best: Optional[Repetend] = None
    best_completed: Optional[Schedule] = None
    optimal = total + 1  # upper bound: serial execution of one micro-batch set
    done = False
    pool = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        for n_r in range(1, max(limit, 1) + 1):
            if done:
                break
            gen = iter_repetend_assignments(p, n_r)
            while True:
                chunk = []
                for asg in gen:
                    chunk.append(asg)
                    if len(chunk) >= (64 * jobs if pool else 1):
                        break
                if not chunk:
                    break
                if time.monotonic() > deadline:
                    report.timed_out = True
                    done = True
                    break
                t0 = time.monotonic()
                if pool is None:
                    outcomes = [
                        _eval_candidate((p, asg, cap, optimal, _budget_left(deadline)))
                        for asg in chunk
                    ]
                else:
                    outcomes = list(
                        pool.map(
                            _eval_candidate,
                            [
                                (p, asg, cap, optimal, _budget_left(deadline))
                                for asg in chunk
                            ],
                        )
                    )
                report.phase_secs["repetend"] += time.monotonic() - t0
                for asg, (out, st) in zip(chunk, outcomes):
                    report.stats.merge(st)
                    rec_status = out.status
                    t_r = out.repetend.period if out.repetend else None
                    if out.status == "timeout":
                        report.timed_out = True
                    if out.repetend is not None and out.repetend.period < optimal:
                        if lazy:
                            ok = _completion_feasible(p, out.repetend, cap, deadline, report)
                            if not ok:
                                rec_status = "completion-infeasible"
                        else:
                            try:
                                best_completed = complete_schedule(
                                    p, out.repetend, cap, deadline, report
                                )
                                ok = True
                            except NoFeasibleSchedule:
                                ok = False
                                rec_status = "completion-infeasible"
                        if ok:
                            best = out.repetend
                            optimal = out.repetend.period
                            report.improvements.append((asg, optimal))
                            rec_status = "improved"
                            if optimal == lb:
                                done = True
                    report.candidates.append(
                        CandidateRecord(n_r, tuple(asg), t_r, rec_status)
                    )
                    if done:
                        break
                if done:
                    break
    finally:
        if pool is not None:
            pool.shutdown()

    report.best_t_r = best.period if best else None
    if best is None:
        if report.timed_out:
            return SearchResult(None, report)
        raise NoFeasibleSchedule("no repetend candidate is schedulable under memory")
    if lazy or best_completed is None:
        best_completed = complete_schedule(p, best, cap, deadline, report)
    return SearchResult(best_completed, report)
