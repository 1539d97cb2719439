"""Monolithic time-optimal search over all micro-batches (the "TO" baseline).

Exact but exponentially expensive in the micro-batch count; used for
oracle comparison and search-cost studies.  Shares the exact-solver
backend, so cost comparisons with the two-phase search are
apples-to-apples.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

from .placement import PlacementSpec
from .schedule import Schedule
from .solver import SolveResult, SolveStats, Status, full_request, solve_min_makespan


@dataclass
class TOResult:
    schedule: Optional[Schedule]
    status: Status
    wall_secs: float
    stats: SolveStats


def search_time_optimal(
    p: PlacementSpec,
    n_microbatches: int,
    mem_capacity: Optional[int] = None,
    budget: Optional[float] = None,
    probe_nodes: Optional[int] = None,
) -> TOResult:
    """Globally minimal-makespan schedule for all N*K instances.

    On budget exhaustion the best-known schedule is returned with status
    TIMEOUT.
    """
    if n_microbatches < 1:
        raise ValueError("need at least one micro-batch")
    t0 = time.monotonic()
    res: SolveResult = solve_min_makespan(
        full_request(p, n_microbatches, mem_capacity=mem_capacity),
        budget=budget,
        probe_nodes=probe_nodes,
    )
    wall = time.monotonic() - t0
    sched = None
    if res.assignment is not None:
        sched = Schedule(p, n_microbatches, dict(res.assignment))
    return TOResult(sched, res.status, wall, res.stats)
