"""Deterministic cache cost model.

Runtime in cycles is the compute time (flops at ``flops_per_cycle``) plus, for
every loop, the number of times its body runs multiplied by the cost of the
strided accesses it makes. An access of stride ``s`` touches
``min(2**bin(s) * element_bytes, line_bytes) / line_bytes`` of a cache line per
iteration and pays the miss penalty of the smallest cache level that holds the
working set of the sub-nest rooted at that loop.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .config import CostModelConfig
from .contraction import flop_count, loop_coverages
from .features import loop_strides, stride_bin
from .models import BackendKind, EvalResult, LoopDesc, LoopIR, PeakEstimate, TensorLayout


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LoopCost:
    """Cost contribution of one loop."""

    index: int
    visits: float
    working_set_bytes: int
    penalty: float
    access_cost: float

    @property
    def cycles(self) -> float:
        return self.visits * self.access_cost


@dataclass(frozen=True)
class CostBreakdown:
    """Compute and memory cycles of a schedule."""

    compute_cycles: float
    loops: Tuple[LoopCost, ...]

    @property
    def memory_cycles(self) -> float:
        return sum(loop.cycles for loop in self.loops)

    @property
    def total_cycles(self) -> float:
        return self.compute_cycles + self.memory_cycles


def miss_penalty(working_set_bytes: int, config: CostModelConfig) -> float:
    """Penalty in cycles of the smallest cache level holding the working set."""
    l1, l2, l3, memory = config.penalties
    if working_set_bytes <= config.l1_bytes:
        return l1
    if working_set_bytes <= config.l2_bytes:
        return l2
    if working_set_bytes <= config.l3_bytes:
        return l3
    return memory


def line_fraction(stride: int, config: CostModelConfig) -> float:
    """Share of a cache line consumed per access at this stride; 0 for stride 0."""
    if stride <= 0:
        return 0.0
    touched = (2 ** stride_bin(stride)) * config.element_bytes
    return min(touched, config.line_bytes) / config.line_bytes


def access_cost(stride: int, working_set_bytes: int, config: CostModelConfig) -> float:
    """Cycles per iteration for one tensor access."""
    return line_fraction(stride, config) * miss_penalty(working_set_bytes, config)


def _tensor_lines(layout: TensorLayout, spans: Dict[str, int], config: CostModelConfig) -> int:
    if not layout.dims:
        return 1
    per_line = config.line_bytes // config.element_bytes
    extents = [spans.get(var, 1) for var in layout.dims]
    if extents[-1] >= layout.shape[-1]:
        return math.ceil(math.prod(extents) / per_line)
    return math.prod(extents[:-1]) * math.ceil(extents[-1] / per_line)


def working_set_bytes(
    loops: Sequence[LoopDesc], index: int, layouts: Sequence[TensorLayout], config: CostModelConfig
) -> int:
    """Line-granular footprint of the sub-nest rooted at loops[index]."""
    _, coverage = loop_coverages(loops)
    spans: Dict[str, int] = {}
    for j in range(index, len(loops)):
        spans.setdefault(loops[j].var, coverage[j])
    lines = sum(_tensor_lines(layout, spans, config) for layout in layouts)
    return lines * config.line_bytes


def _nest_costs(
    ir: LoopIR, loops: Sequence[LoopDesc], offset: int, roles: Sequence[str], config: CostModelConfig, strides
) -> List[LoopCost]:
    steps, coverage = loop_coverages(loops)
    layouts = [ir.layouts[role] for role in roles]
    costs: List[LoopCost] = []
    visits = 1.0
    for j in range(len(loops)):
        visits *= coverage[j] / steps[j]
        footprint = working_set_bytes(loops, j, layouts, config)
        penalty = miss_penalty(footprint, config)
        per_iteration = sum(line_fraction(strides[offset + j][role], config) for role in roles) * penalty
        costs.append(LoopCost(index=offset + j, visits=visits, working_set_bytes=footprint, penalty=penalty, access_cost=per_iteration))
    return costs


def cost_breakdown(ir: LoopIR, config: Optional[CostModelConfig] = None) -> CostBreakdown:
    """Per-loop cost of a schedule; the cursor plays no part."""
    config = config or CostModelConfig()
    strides = loop_strides(ir)
    compute = _nest_costs(ir, ir.compute_loops, 0, ("A", "B", "T"), config, strides)
    writeback = _nest_costs(ir, ir.writeback_loops, ir.n_compute, ("T", "C"), config, strides)
    return CostBreakdown(
        compute_cycles=flop_count(ir.spec) / config.flops_per_cycle,
        loops=tuple(compute + writeback),
    )


def cost_model_execute(ir: LoopIR, config: Optional[CostModelConfig] = None) -> EvalResult:
    """Simulated runtime at the nominal clock, as an EvalResult."""
    config = config or CostModelConfig()
    breakdown = cost_breakdown(ir, config)
    runtime_ns = math.ceil(breakdown.total_cycles / config.frequency_ghz)
    return EvalResult.from_runtime(flop_count(ir.spec), runtime_ns, BackendKind.COSTMODEL)


def analytic_peak(config: Optional[CostModelConfig] = None) -> PeakEstimate:
    """Zero-penalty bound: every cycle retires flops_per_cycle flops."""
    config = config or CostModelConfig()
    return PeakEstimate(
        gflops_peak=config.flops_per_cycle * config.frequency_ghz,
        method="analytic: compute-bound at zero miss penalty",
        backend=BackendKind.COSTMODEL,
    )
