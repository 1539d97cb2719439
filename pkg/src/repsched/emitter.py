"""Lowering of validated schedules into per-device instruction programs.

A topological sort of the schedule (start time, then device, then stage)
gives one global sequence; the send/receive pair of every cross-device
tensor is placed right after the time slot that produced it and projected
onto both endpoint programs in that global order, which makes the
per-peer send/receive sequences FIFO-consistent (the anti-deadlock
condition).  Blocks whose device sets intersect exchange nothing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .placement import BlockInstance, ParseError, PlacementSpec, placement_from_dict, placement_to_dict
from .schedule import Schedule


@dataclass(frozen=True)
class Instruction:
    op: str  # "exec" | "send" | "recv" | "wait"
    stage: Optional[int] = None
    mb: Optional[int] = None
    tag: Optional[str] = None
    peer: Optional[int] = None
    blocking: Optional[bool] = None

    def to_dict(self) -> dict:
        out = {"op": self.op}
        if self.op == "exec":
            out["stage"] = self.stage
            out["mb"] = self.mb
        elif self.op in ("send", "recv"):
            out["tag"] = self.tag
            out["peer"] = self.peer
            out["blocking"] = self.blocking
        else:
            out["tag"] = self.tag
        return out

    @staticmethod
    def from_dict(doc: dict) -> "Instruction":
        op = doc["op"]
        if op == "exec":
            return Instruction("exec", stage=int(doc["stage"]), mb=int(doc["mb"]))
        if op in ("send", "recv"):
            return Instruction(op, tag=doc["tag"], peer=int(doc["peer"]), blocking=bool(doc["blocking"]))
        if op == "wait":
            return Instruction("wait", tag=doc["tag"])
        raise ParseError(f"unknown instruction op {op!r}")


@dataclass
class DevicePrograms:
    placement: PlacementSpec
    num_microbatches: int
    programs: list[list[Instruction]]

    def exec_order(self, device: int) -> list[BlockInstance]:
        return [
            BlockInstance(ins.stage, ins.mb)
            for ins in self.programs[device]
            if ins.op == "exec"
        ]


def transfer_tag(producer: int, consumer: int, mb: int, rank: int) -> str:
    return f"{producer}>{consumer}@{mb}#{rank}"


def _transfers_for(p: PlacementSpec, i: int, j: int, mb: int) -> list[tuple[str, int, int]]:
    """(tag, src_device, dst_device) pairs for dependency edge i->j of one
    micro-batch; empty when the blocks share a device.  Consumers lacking
    the tensor are served by rank-matched producers."""
    src = sorted(p.block(i).devices)
    dst = sorted(p.block(j).devices)
    if set(src) & set(dst):
        return []
    return [
        (transfer_tag(i, j, mb, r), src[r % len(src)], c)
        for r, c in enumerate(dst)
    ]


def emit(s: Schedule, comm_mode: str = "nonblocking") -> DevicePrograms:
    """Lower a valid schedule into per-device programs.

    `comm_mode`: "blocking" rendezvous pairs, or "nonblocking" pairs with a
    WaitTensor fence right before each consuming block.
    """
    if comm_mode not in ("blocking", "nonblocking"):
        raise ValueError(f"bad comm_mode {comm_mode!r}")
    blocking = comm_mode == "blocking"
    p = s.placement

    ordered = sorted(
        s.entries.items(),
        key=lambda kv: (kv[1], min(p.block(kv[0].stage).devices), kv[0].stage, kv[0].mb),
    )
    # wait fences keyed by consuming instance and device
    waits: dict[tuple[BlockInstance, int], list[str]] = {}
    transfers_after: dict[BlockInstance, list[tuple[str, int, int]]] = {}
    for i, jj in sorted(p.deps):
        ti = p.block(i).time_cost
        for n in range(s.num_microbatches):
            pairs = _transfers_for(p, i, jj, n)
            if not pairs:
                continue
            transfers_after.setdefault(BlockInstance(i, n), []).extend(pairs)
            if not blocking:
                for tag, _, c in pairs:
                    waits.setdefault((BlockInstance(jj, n), c), []).append(tag)

    programs: list[list[Instruction]] = [[] for _ in range(p.num_devices)]
    slot_start = None
    slot_transfers: list[tuple[str, int, int]] = []

    def flush_slot():
        for tag, src, dst in slot_transfers:
            programs[src].append(
                Instruction("send", tag=tag, peer=dst, blocking=blocking)
            )
            programs[dst].append(
                Instruction("recv", tag=tag, peer=src, blocking=blocking)
            )
        slot_transfers.clear()

    for inst, t in ordered:
        if slot_start is not None and t != slot_start:
            flush_slot()
        slot_start = t
        for d in sorted(p.block(inst.stage).devices):
            for tag in waits.get((inst, d), ()):
                programs[d].append(Instruction("wait", tag=tag))
            programs[d].append(Instruction("exec", stage=inst.stage, mb=inst.mb))
        slot_transfers.extend(transfers_after.get(inst, ()))
    flush_slot()
    return DevicePrograms(p, s.num_microbatches, programs)


def drop_backward(progs: DevicePrograms) -> DevicePrograms:
    """Inference lowering: remove backward blocks and their transfers."""
    p = progs.placement
    bwd = {st for st in range(p.num_stages) if p.block(st).kind == "backward"}

    def tag_touches_bwd(tag: str) -> bool:
        prod, rest = tag.split(">", 1)
        cons = rest.split("@", 1)[0]
        return int(prod) in bwd or int(cons) in bwd

    out = []
    for prog in progs.programs:
        kept = []
        for ins in prog:
            if ins.op == "exec" and ins.stage in bwd:
                continue
            if ins.op in ("send", "recv", "wait") and tag_touches_bwd(ins.tag):
                continue
            kept.append(ins)
        out.append(kept)
    return DevicePrograms(p, progs.num_microbatches, out)


def fifo_consistent(progs: DevicePrograms) -> bool:
    """For every device pair, sends from A to B must name the same tag
    sequence as B's receives from A."""
    d = len(progs.programs)
    for a in range(d):
        for b in range(d):
            if a == b:
                continue
            sends = [i.tag for i in progs.programs[a] if i.op == "send" and i.peer == b]
            recvs = [i.tag for i in progs.programs[b] if i.op == "recv" and i.peer == a]
            if sends != recvs:
                return False
    return True


def programs_to_dict(progs: DevicePrograms, placement_inline: bool = True) -> dict:
    return {
        "placement": placement_to_dict(progs.placement) if placement_inline else None,
        "N": progs.num_microbatches,
        "devices": [[ins.to_dict() for ins in prog] for prog in progs.programs],
    }


def programs_from_dict(doc: dict) -> DevicePrograms:
    try:
        placement = placement_from_dict(doc["placement"])
        programs = [
            [Instruction.from_dict(x) for x in prog] for prog in doc["devices"]
        ]
        return DevicePrograms(placement, int(doc["N"]), programs)
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed program document: {exc}") from exc


def save_programs(progs: DevicePrograms, path: str | Path) -> None:
    Path(path).write_text(json.dumps(programs_to_dict(progs)) + "\n")


def load_programs(path: str | Path) -> DevicePrograms:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read programs {path}: {exc}") from exc
    return programs_from_dict(doc)
