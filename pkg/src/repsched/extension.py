"""Structural generalization of a searched schedule to more micro-batches.

Extension is pure index arithmetic: extra repetend copies are inserted at
period offsets with micro-batch indices incremented, and the cooldown
shifts right by the same amount.  No re-solving happens.
"""

from __future__ import annotations

from .placement import BlockInstance
from .schedule import RepetendInfo, Schedule


class AnnotationMissing(ValueError):
    pass


class InvalidN(ValueError):
    pass


def split_phases(s: Schedule):
    """Partition entries into warmup / repetend copies / cooldown.

    Warmup blocks start before the annotated window.  Within the window,
    stage st's copies occupy micro-batches n_st .. n_st + (N - nr); larger
    indices are cooldown.
    """
    if s.repetend is None:
        raise AnnotationMissing("schedule has no repetend annotation")
    r = s.repetend
    copies = s.num_microbatches - r.nr
    warmup, reps, cooldown = {}, {}, {}
    base_index: dict[int, int] = {}
    for b, t in s.entries.items():
        if t < r.start:
            warmup[b] = t
        else:
            base_index.setdefault(b.stage, b.mb)
            base_index[b.stage] = min(base_index[b.stage], b.mb)
    for b, t in s.entries.items():
        if b in warmup:
            continue
        n0 = base_index[b.stage]
        if b.mb <= n0 + copies:
            reps[b] = t
        else:
            cooldown[b] = t
    return warmup, reps, cooldown, base_index


def extend(s: Schedule, n: int) -> Schedule:
    """Extend an annotated schedule to n >= N_R micro-batches."""
    if s.repetend is None:
        raise AnnotationMissing("schedule has no repetend annotation")
    r = s.repetend
    if n < s.num_microbatches:
        raise InvalidN(f"cannot shrink below the searched micro-batch count ({s.num_microbatches})")
    if n == s.num_microbatches:
        return s
    warmup, reps, cooldown, base_index = split_phases(s)
    shift = n - s.num_microbatches
    period = r.period
    entries: dict[BlockInstance, int] = dict(warmup)
    existing_copies = s.num_microbatches - r.nr  # beyond copy 0
    for b, t in reps.items():
        entries[b] = t
        # replicate the LAST existing copy of this stage shift more times
        if b.mb == base_index[b.stage] + existing_copies:
            for k in range(1, shift + 1):
                entries[BlockInstance(b.stage, b.mb + k)] = t + k * period
    for b, t in cooldown.items():
        entries[BlockInstance(b.stage, b.mb + shift)] = t + shift * period
    info = RepetendInfo(r.start, r.end + shift * period, period, r.nr)
    return Schedule(s.placement, n, entries, info)
