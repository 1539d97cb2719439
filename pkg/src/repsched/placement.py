"""Operator-placement input model: block specs, canonical shapes, JSON ingestion.

A placement describes one micro-batch of work as a DAG of execution blocks.
Each block carries a device set, an integer time cost and an integer memory
delta (applied on every device the block occupies, at block start).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence


class ParseError(ValueError):
    """Raised when a placement/plan/program file cannot be parsed."""


class ValidationError(ValueError):
    """Raised when a structurally parsed object violates an invariant."""


class UnsupportedShape(ValueError):
    """Raised for shape/parameter combinations that have no defined topology."""


KINDS = ("forward", "backward", "other")


@dataclass(frozen=True)
class BlockSpec:
    stage_id: int
    label: str
    kind: str
    devices: frozenset[int]
    time_cost: int
    mem_delta: int


class BlockInstance(NamedTuple):
    stage: int
    mb: int


@dataclass(frozen=True)
class CostModel:
    forward_time: int = 1
    backward_time: int = 3
    forward_mem: int = 1
    backward_mem: int = -1


# forward=1 / backward=3 is the training-with-recompute regime; the 1:2
# preset matches the small demonstration schedules.
COST_PRESETS = {
    "recompute": CostModel(1, 3, 1, -1),
    "demo": CostModel(1, 2, 1, -1),
}

SHAPES = ("vshape", "xshape", "mshape", "nnshape", "kshape")


@dataclass(frozen=True)
class PlacementSpec:
    num_devices: int
    mem_capacity: int
    blocks: tuple[BlockSpec, ...]
    deps: frozenset[tuple[int, int]]

    def __post_init__(self):
        _validate(self)

    @property
    def num_stages(self) -> int:
        return len(self.blocks)

    def block(self, stage: int) -> BlockSpec:
        return self.blocks[stage]

    def successors(self, stage: int) -> list[int]:
        return sorted(j for i, j in self.deps if i == stage)

    def predecessors(self, stage: int) -> list[int]:
        return sorted(i for i, j in self.deps if j == stage)

    def device_stages(self, device: int) -> list[int]:
        return [b.stage_id for b in self.blocks if device in b.devices]

    def device_load(self, device: int) -> int:
        return sum(b.time_cost for b in self.blocks if device in b.devices)

    def net_mem_per_device(self) -> list[int]:
        return [
            sum(b.mem_delta for b in self.blocks if d in b.devices)
            for d in range(self.num_devices)
        ]


def _validate(p: PlacementSpec) -> None:
    if p.num_devices < 1:
        raise ValidationError("num_devices must be positive")
    if p.mem_capacity < 1:
        raise ValidationError("mem_capacity must be positive")
    ids = [b.stage_id for b in p.blocks]
    if ids != list(range(len(p.blocks))):
        raise ValidationError("stage ids must be exactly 0..K-1 in order, no duplicates")
    for b in p.blocks:
        if b.kind not in KINDS:
            raise ValidationError(f"unknown block kind {b.kind!r}")
        if b.time_cost < 1:
            raise ValidationError(f"stage {b.stage_id}: time_cost must be >= 1")
        if not b.devices:
            raise ValidationError(f"stage {b.stage_id}: devices must be non-empty")
        for d in b.devices:
            if not 0 <= d < p.num_devices:
                raise ValidationError(f"stage {b.stage_id}: device id {d} out of range")
    k = len(p.blocks)
    for i, j in p.deps:
        if not (0 <= i < k and 0 <= j < k):
            raise ValidationError(f"dep ({i},{j}) references a missing stage")
    # Kahn peel to reject cycles (a self-loop is the smallest one).
    indeg = {s: 0 for s in range(k)}
    for _, j in p.deps:
        indeg[j] += 1
    ready = [s for s in range(k) if indeg[s] == 0]
    seen = 0
    while ready:
        s = ready.pop()
        seen += 1
        for i, j in p.deps:
            if i == s:
                indeg[j] -= 1
                if indeg[j] == 0:
                    ready.append(j)
    if seen != k:
        raise ValidationError("deps contain a cycle")


def topological_stages(p: PlacementSpec) -> list[int]:
    """Stage ids in a deterministic topological order (smallest id first)."""
    indeg = {s: 0 for s in range(p.num_stages)}
    for _, j in p.deps:
        indeg[j] += 1
    import heapq

    heap = [s for s in range(p.num_stages) if indeg[s] == 0]
    heapq.heapify(heap)
    out = []
    while heap:
        s = heapq.heappop(heap)
        out.append(s)
        for j in p.successors(s):
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(heap, j)
    return out


# ---------------------------------------------------------------------------
# JSON interchange.  Field names are part of the external contract:
# {"devices": int, "memory": int, "blocks": [{"id", "label", "kind",
#  "devices", "time", "memory"}], "deps": [[int, int]]}
# ---------------------------------------------------------------------------


def placement_to_dict(p: PlacementSpec) -> dict:
    return {
        "devices": p.num_devices,
        "memory": p.mem_capacity,
        "blocks": [
            {
                "id": b.stage_id,
                "label": b.label,
                "kind": b.kind,
                "devices": sorted(b.devices),
                "time": b.time_cost,
                "memory": b.mem_delta,
            }
            for b in p.blocks
        ],
        "deps": sorted([i, j] for i, j in p.deps),
    }


def placement_from_dict(doc: dict) -> PlacementSpec:
    try:
        blocks = tuple(
            BlockSpec(
                stage_id=int(b["id"]),
                label=str(b["label"]),
                kind=str(b["kind"]),
                devices=frozenset(int(d) for d in b["devices"]),
                time_cost=int(b["time"]),
                mem_delta=int(b["memory"]),
            )
            for b in sorted(doc["blocks"], key=lambda x: int(x["id"]))
        )
        deps = frozenset((int(i), int(j)) for i, j in doc["deps"])
        return PlacementSpec(
            num_devices=int(doc["devices"]),
            mem_capacity=int(doc["memory"]),
            blocks=blocks,
            deps=deps,
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed placement document: {exc}") from exc


def load_placement(path: str | Path) -> PlacementSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read placement {path}: {exc}") from exc
    return placement_from_dict(doc)


def save_placement(p: PlacementSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(placement_to_dict(p), indent=2) + "\n")


# ---------------------------------------------------------------------------
# Canonical shapes.  Topologies are documented in README.md; memory capacity
# defaults to one unit per stage, which is unconstraining for every shape.
# ---------------------------------------------------------------------------


def _chain_deps(order: Sequence[int]) -> set[tuple[int, int]]:
    return {(a, b) for a, b in zip(order, order[1:])}


def _fwd(stage: int, label: str, devices: Iterable[int], c: CostModel) -> BlockSpec:
    return BlockSpec(stage, label, "forward", frozenset(devices), c.forward_time, c.forward_mem)


def _bwd(stage: int, label: str, devices: Iterable[int], c: CostModel) -> BlockSpec:
    return BlockSpec(stage, label, "backward", frozenset(devices), c.backward_time, c.backward_mem)


def make_shape(
    shape: str,
    num_devices: int,
    costs: CostModel | None = None,
    mem_capacity: int | None = None,
) -> PlacementSpec:
    c = costs or COST_PRESETS["recompute"]
    d = num_devices
    if shape not in SHAPES:
        raise UnsupportedShape(f"unknown shape {shape!r}")
    if d < 2:
        raise UnsupportedShape("shapes need at least 2 devices")
    if shape in ("kshape", "xshape") and d % 2 != 0:
        raise UnsupportedShape(f"{shape} needs an even device count, got {d}")

    blocks: list[BlockSpec] = []
    deps: set[tuple[int, int]] = set()
    alldev = range(d)

    if shape == "vshape":
        for i in range(d):
            blocks.append(_fwd(i, f"f{i}", [i], c))
        for j in range(d):
            dev = d - 1 - j
            blocks.append(_bwd(d + j, f"b{dev}", [dev], c))
        deps = _chain_deps(range(2 * d))

    elif shape == "mshape":
        blocks.append(_fwd(0, "E", alldev, c))
        for i in range(d):
            blocks.append(_fwd(1 + i, f"f{i}", [i], c))
        blocks.append(_fwd(d + 1, "H", alldev, c))
        blocks.append(_bwd(d + 2, "Hb", alldev, c))
        for j in range(d):
            dev = d - 1 - j
            blocks.append(_bwd(d + 3 + j, f"b{dev}", [dev], c))
        blocks.append(_bwd(2 * d + 3, "Eb", alldev, c))
        deps = _chain_deps(range(2 * d + 4))

    elif shape == "nnshape":
        blocks.append(_fwd(0, "E", alldev, c))
        for i in range(d):  # encoder, descending device order
            blocks.append(_fwd(1 + i, f"e{i}", [d - 1 - i], c))
        for i in range(d):  # decoder, descending device order
            blocks.append(_fwd(1 + d + i, f"g{i}", [d - 1 - i], c))
        for j in range(d):  # decoder backward, mirrored
            i = d - 1 - j
            blocks.append(_bwd(1 + 2 * d + j, f"gb{i}", [d - 1 - i], c))
        for j in range(d):  # encoder backward, mirrored
            i = d - 1 - j
            blocks.append(_bwd(1 + 3 * d + j, f"eb{i}", [d - 1 - i], c))
        blocks.append(_bwd(4 * d + 1, "Eb", alldev, c))
        deps = _chain_deps(range(4 * d + 2))

    elif shape == "kshape":
        h = d // 2
        for i in range(h):  # branch A on the lower device half
            blocks.append(_fwd(i, f"a{i}", [i], c))
        for i in range(h):  # branch C on the upper device half
            blocks.append(_fwd(h + i, f"c{i}", [h + i], c))
        xf, xb = d, d + 1
        blocks.append(_fwd(xf, "X", alldev, c))
        blocks.append(_bwd(xb, "Xb", alldev, c))
        for j in range(h):
            i = h - 1 - j
            blocks.append(_bwd(d + 2 + j, f"ab{i}", [i], c))
        for j in range(h):
            i = h - 1 - j
            blocks.append(_bwd(d + 2 + h + j, f"cb{i}", [h + i], c))
        deps |= _chain_deps(range(h))
        deps |= _chain_deps(range(h, d))
        deps |= {(h - 1, xf), (d - 1, xf), (xf, xb)}
        deps |= {(xb, d + 2)} | _chain_deps(range(d + 2, d + 2 + h))
        deps |= {(xb, d + 2 + h)} | _chain_deps(range(d + 2 + h, d + 2 + 2 * h))

    elif shape == "xshape":
        # Two opposite-direction vshape chains bundled into one unit
        # micro-batch (the framework fixes one block structure per batch).
        for i in range(d):
            blocks.append(_fwd(i, f"uf{i}", [i], c))
        for j in range(d):
            dev = d - 1 - j
            blocks.append(_bwd(d + j, f"ub{dev}", [dev], c))
        for i in range(d):
            blocks.append(_fwd(2 * d + i, f"vf{i}", [d - 1 - i], c))
        for j in range(d):
            blocks.append(_bwd(3 * d + j, f"vb{d - 1 - j}", [j], c))
        deps = _chain_deps(range(2 * d)) | _chain_deps(range(2 * d, 4 * d))

    if mem_capacity is None:
        # Unconstraining default: with at most 8 micro-batches in flight
        # (the search default), per-device usage never exceeds 8x the
        # positive per-micro-batch demand.
        cap = max(1, 8 * sum(max(0, b.mem_delta) for b in blocks))
    else:
        cap = mem_capacity
    return PlacementSpec(d, cap, tuple(blocks), frozenset(deps))


def resolve_placement_arg(arg: str) -> PlacementSpec:
    """Resolve a CLI placement argument: a JSON path or shape:NAME:D[:preset]."""
    if arg.startswith("shape:"):
        parts = arg.split(":")
        if len(parts) not in (3, 4):
            raise ParseError(f"bad shape spec {arg!r}, expected shape:NAME:D[:preset]")
        _, name, dev = parts[:3]
        preset = COST_PRESETS[parts[3]] if len(parts) == 4 else None
        try:
            d = int(dev)
        except ValueError as exc:
            raise ParseError(f"bad device count in {arg!r}") from exc
        return make_shape(name, d, preset)
    return load_placement(arg)
