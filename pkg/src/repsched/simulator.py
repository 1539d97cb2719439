"""Deterministic execution model for device programs.

Each device owns a compute lane (blocks, blocking transfers) and a
transfer lane (non-blocking transfers).  Blocking send/receive pairs
rendezvous: both devices are held from the moment both sides arrive until
`comm_cost` later.  Non-blocking pairs return immediately and occupy the
two transfer lanes in FIFO order; a WaitTensor fence holds the consumer
until the tagged transfer completes.  The run is a pure function of the
programs, advanced by chaotic iteration until quiescence; a stuck,
unfinished state is a deadlock.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .emitter import DevicePrograms


class MalformedProgram(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    comm_cost: int = 0
    trace: bool = False

    def __post_init__(self):
        if self.comm_cost < 0:
            raise ValueError("comm_cost must be >= 0")


@dataclass
class SimReport:
    makespan: int
    busy: list[int]
    idle: list[int]
    wait_comm: list[int]
    peak_memory: list[int]
    deadlock: bool
    blocked: list[str] = field(default_factory=list)
    trace: Optional[list[dict]] = None


def simulate(progs: DevicePrograms, cfg: SimConfig = SimConfig()) -> SimReport:
    p = progs.placement
    d = p.num_devices
    programs = progs.programs
    cost = cfg.comm_cost

    # Pair up send/recv instructions by (src, dst, tag); order mismatches
    # surface as deadlock, dangling tags as MalformedProgram.
    send_seen: dict[str, int] = {}
    recv_seen: dict[str, int] = {}
    for dev in range(d):
        for ins in programs[dev]:
            if ins.op == "send":
                if ins.tag in send_seen:
                    raise MalformedProgram(f"duplicate send tag {ins.tag}")
                send_seen[ins.tag] = dev
            elif ins.op == "recv":
                if ins.tag in recv_seen:
                    raise MalformedProgram(f"duplicate recv tag {ins.tag}")
                recv_seen[ins.tag] = dev
    for tag, dev in send_seen.items():
        if tag not in recv_seen:
            raise MalformedProgram(f"send {tag} on device {dev} has no matching recv")
    for tag, dev in recv_seen.items():
        if tag not in send_seen:
            raise MalformedProgram(f"recv {tag} on device {dev} has no matching send")

    pc = [0] * d
    clock = [0] * d  # compute-lane ready time
    lane_free = [0] * d  # transfer-lane ready time
    lane_q: list[list[str]] = [[] for _ in range(d)]  # issued, unstarted transfers
    issued_at: dict[tuple[str, str], int] = {}  # (role, tag) -> issue time
    done_at: dict[str, int] = {}  # tag -> transfer completion time
    send_arrive: dict[str, int] = {}  # blocking rendezvous arrivals
    recv_arrive: dict[str, int] = {}
    busy = [0] * d
    wait_comm = [0] * d
    mem_events: list[list[tuple[int, int]]] = [[] for _ in range(d)]
    trace: Optional[list[dict]] = [] if cfg.trace else None

    def note(t, dev, event, **kw):
        if trace is not None:
            trace.append({"t": t, "device": dev, "event": event, **kw})

    def resolve_lanes() -> bool:
        """Start every non-blocking transfer at the head of both lanes."""
        moved = False
        while True:
            started = None
            for dev in range(d):
                if not lane_q[dev]:
                    continue
                tag = lane_q[dev][0]
                src = send_seen[tag]
                dst = recv_seen[tag]
                other = dst if dev == src else src
                if not lane_q[other] or lane_q[other][0] != tag:
                    continue
                if ("send", tag) not in issued_at or ("recv", tag) not in issued_at:
                    continue
                t0 = max(
                    issued_at[("send", tag)],
                    issued_at[("recv", tag)],
                    lane_free[src],
                    lane_free[dst],
                )
                done_at[tag] = t0 + cost
                lane_free[src] = t0 + cost
                lane_free[dst] = t0 + cost
                lane_q[src].pop(0)
                lane_q[dst].pop(0)
                note(t0, src, "transfer_start", tag=tag, peer=dst)
                note(t0 + cost, src, "transfer_done", tag=tag, peer=dst)
                started = tag
                break
            if started is None:
                return moved
            moved = True

    progress = True
    while progress:
        progress = False
        for dev in range(d):
            while pc[dev] < len(programs[dev]):
                ins = programs[dev][pc[dev]]
                if ins.op == "exec":
                    blk = p.block(ins.stage)
                    t0 = clock[dev]
                    clock[dev] = t0 + blk.time_cost
                    busy[dev] += blk.time_cost
                    mem_events[dev].append((t0, blk.mem_delta))
                    note(t0, dev, "exec_start", stage=ins.stage, mb=ins.mb)
                    note(clock[dev], dev, "exec_end", stage=ins.stage, mb=ins.mb)
                elif ins.op == "wait":
                    if ins.tag not in done_at:
                        break
                    t = done_at[ins.tag]
                    if t > clock[dev]:
                        wait_comm[dev] += t - clock[dev]
                        clock[dev] = t
                    note(clock[dev], dev, "wait_done", tag=ins.tag)
                elif ins.blocking:
                    arrive = send_arrive if ins.op == "send" else recv_arrive
                    other = recv_arrive if ins.op == "send" else send_arrive
                    if ins.tag not in arrive:
                        arrive[ins.tag] = clock[dev]
                        note(clock[dev], dev, f"{ins.op}_post", tag=ins.tag, peer=ins.peer)
                    if ins.tag not in other:
                        break  # rendezvous incomplete; retry next round
                    t1 = max(send_arrive[ins.tag], recv_arrive[ins.tag]) + cost
                    wait_comm[dev] += t1 - clock[dev]
                    clock[dev] = t1
                    done_at[ins.tag] = t1
                    note(t1, dev, f"{ins.op}_done", tag=ins.tag, peer=ins.peer)
                else:
                    issued_at[(ins.op, ins.tag)] = clock[dev]
                    lane_q[dev].append(ins.tag)
                    note(clock[dev], dev, f"{ins.op}_issue", tag=ins.tag, peer=ins.peer)
                pc[dev] += 1
                progress = True
            if resolve_lanes():
                progress = True

    finished = all(pc[dev] == len(programs[dev]) for dev in range(d))
    blocked = []
    if not finished:
        for dev in range(d):
            if pc[dev] < len(programs[dev]):
                ins = programs[dev][pc[dev]]
                blocked.append(
                    f"device {dev} blocked at #{pc[dev]} {ins.to_dict()} (t={clock[dev]})"
                )

    makespan = max(max(clock), max(lane_free)) if d else 0
    peaks = []
    for dev in range(d):
        run = peak = 0
        evs = sorted(mem_events[dev])
        i = 0
        while i < len(evs):
            t = evs[i][0]
            while i < len(evs) and evs[i][0] == t:
                run += evs[i][1]
                i += 1
            peak = max(peak, run)
        peaks.append(peak)
    return SimReport(
        makespan=makespan,
        busy=busy,
        idle=[makespan - busy[dev] for dev in range(d)],
        wait_comm=wait_comm,
        peak_memory=peaks,
        deadlock=not finished,
        blocked=blocked,
        trace=trace,
    )
