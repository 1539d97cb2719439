"""Schedule representation, validity checking and efficiency metrics.

A schedule assigns an integer start time to every block instance
(stage, micro-batch).  Validity means: blocks with intersecting device
sets never overlap in time, the running per-device memory sum (deltas
applied at block start) never exceeds capacity, and every dependency
edge is respected within each micro-batch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .placement import (
    BlockInstance,
    ParseError,
    PlacementSpec,
    placement_from_dict,
    placement_to_dict,
    load_placement,
)


class MissingAnnotation(ValueError):
    """Steady-state metric requested but the schedule has no repetend info."""


@dataclass(frozen=True)
class RepetendInfo:
    start: int
    end: int
    period: int
    nr: int


@dataclass(frozen=True)
class Schedule:
    placement: PlacementSpec
    num_microbatches: int
    entries: dict[BlockInstance, int]
    repetend: Optional[RepetendInfo] = None

    def start(self, stage: int, mb: int) -> int:
        return self.entries[BlockInstance(stage, mb)]

    def end(self, stage: int, mb: int) -> int:
        return self.start(stage, mb) + self.placement.block(stage).time_cost

    def makespan(self) -> int:
        p = self.placement
        return max(s + p.block(b.stage).time_cost for b, s in self.entries.items())


@dataclass(frozen=True)
class Violation:
    kind: str  # "structure" | "overlap" | "memory" | "dependency"
    message: str
    instances: tuple[BlockInstance, ...] = ()

    def __str__(self) -> str:
        return f"{self.kind}: {self.message}"


@dataclass(frozen=True)
class ScheduleMetrics:
    makespan: int
    per_device_busy: list[int]
    peak_memory: list[int]
    bubble_rate_total: Fraction
    bubble_rate_steady: Optional[Fraction]


def validate_schedule(
    s: Schedule, initial_memory: Optional[list[int]] = None
) -> list[Violation]:
    """Return all violations (empty list means the schedule is valid).

    `initial_memory` lets callers validate fragments that begin in a
    non-empty memory state (defaults to all zeros).
    """
    p = s.placement
    out: list[Violation] = []

    expected = {
        BlockInstance(st, n)
        for st in range(p.num_stages)
        for n in range(s.num_microbatches)
    }
    got = set(s.entries)
    if got != expected:
        missing = sorted(expected - got)[:4]
        extra = sorted(got - expected)[:4]
        out.append(
            Violation(
                "structure",
                f"instance set mismatch (missing {missing}, extra {extra})",
            )
        )
        return out
    for inst, t in s.entries.items():
        if t < 0:
            out.append(Violation("structure", f"{inst} has negative start {t}", (inst,)))

    # Exclusivity whenever device sets intersect: per device, sort by start
    # and require end <= next start.
    for d in range(p.num_devices):
        stages = p.device_stages(d)
        ivals = sorted(
            (s.entries[BlockInstance(st, n)], st, n)
            for st in stages
            for n in range(s.num_microbatches)
        )
        for (t0, st0, n0), (t1, st1, n1) in zip(ivals, ivals[1:]):
            if t0 + p.block(st0).time_cost > t1:
                out.append(
                    Violation(
                        "overlap",
                        f"device {d}: ({st0},{n0})@{t0} overlaps ({st1},{n1})@{t1}",
                        (BlockInstance(st0, n0), BlockInstance(st1, n1)),
                    )
                )

    # Memory: deltas at block start, running sum capped by capacity.
    for d in range(p.num_devices):
        events = sorted(
            (s.entries[BlockInstance(st, n)], st, n)
            for st in p.device_stages(d)
            for n in range(s.num_microbatches)
        )
        total = initial_memory[d] if initial_memory else 0
        if total > p.mem_capacity:
            out.append(Violation("memory", f"device {d}: initial memory {total} > M"))
        i = 0
        while i < len(events):
            j = i
            t = events[i][0]
            while j < len(events) and events[j][0] == t:
                total += p.block(events[j][1]).mem_delta
                j += 1
            if total > p.mem_capacity:
                insts = tuple(BlockInstance(st, n) for _, st, n in events[i:j])
                out.append(
                    Violation(
                        "memory",
                        f"device {d}: running memory {total} > {p.mem_capacity} at t={t}",
                        insts,
                    )
                )
            i = j

    for i, j in sorted(p.deps):
        ti = p.block(i).time_cost
        for n in range(s.num_microbatches):
            si = s.entries[BlockInstance(i, n)]
            sj = s.entries[BlockInstance(j, n)]
            if si + ti > sj:
                out.append(
                    Violation(
                        "dependency",
                        f"({i},{n}) ends at {si + ti} after ({j},{n}) starts at {sj}",
                        (BlockInstance(i, n), BlockInstance(j, n)),
                    )
                )
    return out


def per_device_busy(s: Schedule) -> list[int]:
    p = s.placement
    return [p.device_load(d) * s.num_microbatches for d in range(p.num_devices)]


def peak_memory(s: Schedule, initial_memory: Optional[list[int]] = None) -> list[int]:
    p = s.placement
    peaks = []
    for d in range(p.num_devices):
        events = sorted(
            (s.entries[BlockInstance(st, n)], p.block(st).mem_delta)
            for st in p.device_stages(d)
            for n in range(s.num_microbatches)
        )
        total = initial_memory[d] if initial_memory else 0
        peak = total
        i = 0
        while i < len(events):
            j = i
            t = events[i][0]
            while j < len(events) and events[j][0] == t:
                total += events[j][1]
                j += 1
            peak = max(peak, total)
            i = j
        peaks.append(peak)
    return peaks


def steady_bubble_rate(s: Schedule) -> Fraction:
    """Idle fraction of one repetend period; needs the repetend annotation.

    One period executes exactly one instance of every stage, so the busy
    time per period is the static per-device load.
    """
    if s.repetend is None:
        raise MissingAnnotation("schedule carries no repetend annotation")
    p = s.placement
    period = s.repetend.period
    busy = sum(p.device_load(d) for d in range(p.num_devices))
    return 1 - Fraction(busy, p.num_devices * period)


def compute_metrics(s: Schedule) -> ScheduleMetrics:
    p = s.placement
    mk = s.makespan()
    busy = per_device_busy(s)
    steady = steady_bubble_rate(s) if s.repetend is not None else None
    return ScheduleMetrics(
        makespan=mk,
        per_device_busy=busy,
        peak_memory=peak_memory(s),
        bubble_rate_total=1 - Fraction(sum(busy), p.num_devices * mk),
        bubble_rate_steady=steady,
    )


def canonicalize_microbatch_order(s: Schedule) -> Schedule:
    """Relabel micro-batch indices so starts increase with the index per stage.

    Identical-cost instances of a stage are interchangeable, so sorting each
    stage's start list is validity- and makespan-preserving.
    """
    entries: dict[BlockInstance, int] = {}
    for st in range(s.placement.num_stages):
        starts = sorted(s.entries[BlockInstance(st, n)] for n in range(s.num_microbatches))
        for n, t in enumerate(starts):
            entries[BlockInstance(st, n)] = t
    return replace(s, entries=entries)


# ---------------------------------------------------------------------------
# Plan JSON: {"placement": <inline dict or path>, "N": int,
#             "entries": [{"stage", "mb", "start"}],
#             "repetend": {"start", "end", "period", "nr"}?}
# ---------------------------------------------------------------------------


def plan_to_dict(s: Schedule, placement_inline: bool = True, placement_path: str = "") -> dict:
    doc = {
        "placement": placement_to_dict(s.placement) if placement_inline else placement_path,
        "N": s.num_microbatches,
        "entries": [
            {"stage": b.stage, "mb": b.mb, "start": t}
            for b, t in sorted(s.entries.items())
        ],
    }
    if s.repetend is not None:
        r = s.repetend
        doc["repetend"] = {"start": r.start, "end": r.end, "period": r.period, "nr": r.nr}
    return doc


def plan_from_dict(doc: dict, base_dir: Optional[Path] = None) -> Schedule:
    try:
        pl = doc["placement"]
        if isinstance(pl, str):
            path = Path(pl)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            placement = load_placement(path)
        else:
            placement = placement_from_dict(pl)
        entries = {
            BlockInstance(int(e["stage"]), int(e["mb"])): int(e["start"])
            for e in doc["entries"]
        }
        rep = None
        if doc.get("repetend"):
            r = doc["repetend"]
            rep = RepetendInfo(int(r["start"]), int(r["end"]), int(r["period"]), int(r["nr"]))
        return Schedule(placement, int(doc["N"]), entries, rep)
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed plan document: {exc}") from exc


def save_plan(s: Schedule, path: str | Path) -> None:
    Path(path).write_text(json.dumps(plan_to_dict(s)) + "\n")


def load_plan(path: str | Path) -> Schedule:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read plan {path}: {exc}") from exc
    return plan_from_dict(doc, base_dir=Path(path).parent)
