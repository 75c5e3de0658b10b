"""Per-loop access strides and the fixed-length observation vector."""

import math
from typing import Mapping, Sequence

import numpy as np

from .exceptions import OverCapacityError
from .models import COMPUTE_ROLES, ROLES, WRITEBACK_ROLES, HistogramWeighting, LoopDesc, LoopIR, StrideProfile

MAX_LOOPS = 16
HISTOGRAM_BINS = 16
FEATURES_PER_LOOP = 4 + HISTOGRAM_BINS
OBSERVATION_SIZE = MAX_LOOPS * FEATURES_PER_LOOP

# Column offsets inside one loop slot.
CURSOR_COL, SIZE_COL, TAIL_COL, COMPUTE_COL, HIST_COL = 0, 1, 2, 3, 4


def _nest_strides(ir: LoopIR, loops: Sequence[LoopDesc], roles: Sequence[str]) -> list:
    profile = []
    for j, loop in enumerate(loops):
        below = math.prod(other.size for other in loops[j + 1 :] if other.var == loop.var)
        strides = {role: 0 for role in ROLES}
        for role in roles:
            base = ir.layouts[role].base_strides.get(loop.var)
            if base is not None:
                strides[role] = base * below
        profile.append(strides)
    return profile


def loop_strides(ir: LoopIR) -> StrideProfile:
    """Strides in elements for A, B, T and the output C, per loop in nest order."""
    compute = _nest_strides(ir, ir.compute_loops, COMPUTE_ROLES)
    writeback = _nest_strides(ir, ir.writeback_loops, WRITEBACK_ROLES)
    return StrideProfile(per_loop=tuple(compute + writeback))


def stride_bin(stride: int) -> int:
    """Histogram bin of a positive stride: floor(log2), clamped to the last bin."""
    return min(stride.bit_length() - 1, HISTOGRAM_BINS - 1)


def stride_histogram(strides: Mapping[str, int], weight: int = 1) -> np.ndarray:
    """Count nonzero strides into power-of-two bins."""
    histogram = np.zeros(HISTOGRAM_BINS, dtype=np.int64)
    for stride in strides.values():
        if stride >= 1:
            histogram[stride_bin(stride)] += weight
    return histogram


def encode(ir: LoopIR, weighting: HistogramWeighting = HistogramWeighting.REFERENCES) -> np.ndarray:
    """Encode the schedule as MAX_LOOPS slots of 20 integers."""
    if len(ir.loops) > MAX_LOOPS:
        raise OverCapacityError(f"{len(ir.loops)} loops exceed the observation capacity of {MAX_LOOPS}")
    profile = loop_strides(ir)
    slots = np.zeros((MAX_LOOPS, FEATURES_PER_LOOP), dtype=np.int64)
    for i, (loop, strides) in enumerate(zip(ir.loops, profile)):
        weight = loop.size + loop.tail if weighting == HistogramWeighting.TRIP_COUNT else 1
        slots[i, CURSOR_COL] = 1 if i == ir.cursor else 0
        slots[i, SIZE_COL] = loop.size
        slots[i, TAIL_COL] = loop.tail
        slots[i, COMPUTE_COL] = 1 if loop.is_compute else 0
        slots[i, HIST_COL:] = stride_histogram(strides, weight)
    return slots.reshape(-1)


def observation_slots(observation: np.ndarray) -> np.ndarray:
    """View a flat observation as (MAX_LOOPS, 20)."""
    return np.asarray(observation).reshape(MAX_LOOPS, FEATURES_PER_LOOP)
