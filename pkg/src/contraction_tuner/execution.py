"""Schedule execution.

Iteration order follows the loop list. A loop over ``v`` with size ``s`` and
tail ``t`` runs ``s`` main iterations advancing ``v`` by the coverage of the
next ``v`` loop below it, then ``t`` remainder iterations advancing ``v`` by one
with every ``v`` loop below it removed. A loop with no ``v`` loop below simply
runs ``s + t`` iterations.
"""

import logging
import math
import string
import time
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .config import BackendConfig
from .contraction import flop_count, loop_coverages
from .exceptions import ShapeMismatchError
from .models import BackendKind, ContractionSpec, EvalResult, LoopDesc, LoopIR, PeakEstimate, PostOp, TensorLayout


logger = logging.getLogger(__name__)

PointSet = Tuple[int, Dict[str, np.ndarray]]

_MAX_REPETITIONS = 1 << 20


def make_inputs(spec: ContractionSpec, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Deterministic operand tensors with values in [-1, 1)."""
    rng = np.random.default_rng(seed)
    arrays = []
    for ref in spec.operands:
        shape = spec.shape_of(ref)
        values = rng.uniform(-1.0, 1.0, size=math.prod(shape))
        arrays.append(np.asarray(values, dtype=np.float32).reshape(shape))
    return arrays[0], arrays[1]


def iteration_points(loops: Sequence[LoopDesc], variables: Sequence[str]) -> PointSet:
    """All iteration points of a nest in execution order, as one array per variable."""
    steps, _ = loop_coverages(loops)
    memo: Dict[Tuple[int, FrozenSet[str]], PointSet] = {}

    def tiled(inner: PointSet, var: str, offsets: np.ndarray) -> PointSet:
        count, arrays = inner
        out = {v: np.tile(arr, len(offsets)) for v, arr in arrays.items()}
        out[var] = out[var] + np.repeat(offsets, count)
        return count * len(offsets), out

    def suffix(j: int, collapsed: FrozenSet[str]) -> PointSet:
        key = (j, collapsed)
        if key in memo:
            return memo[key]
        while j < len(loops) and loops[j].var in collapsed:
            j += 1
        if j == len(loops):
            result: PointSet = (1, {v: np.zeros(1, dtype=np.int64) for v in variables})
        else:
            loop, step = loops[j], steps[j]
            main = loop.size + loop.tail if step == 1 else loop.size
            parts = [tiled(suffix(j + 1, collapsed), loop.var, np.arange(main, dtype=np.int64) * step)]
            if step > 1 and loop.tail:
                remainder = loop.size * step + np.arange(loop.tail, dtype=np.int64)
                parts.append(tiled(suffix(j + 1, collapsed | {loop.var}), loop.var, remainder))
            result = (
                sum(count for count, _ in parts),
                {v: np.concatenate([arrays[v] for _, arrays in parts]) for v in variables},
            )
        memo[key] = result
        return result

    return suffix(0, frozenset())


def _offsets(points: PointSet, layout: TensorLayout) -> np.ndarray:
    count, arrays = points
    offsets = np.zeros(count, dtype=np.int64)
    for var in layout.dims:
        offsets += arrays[var] * layout.base_strides[var]
    return offsets


def _checked_inputs(spec: ContractionSpec, inputs: Sequence[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    if len(inputs) != 2:
        raise ShapeMismatchError(f"expected two operand tensors, got {len(inputs)}")
    checked = []
    for ref, array in zip(spec.operands, inputs):
        array = np.asarray(array, dtype=np.float32)
        expected = spec.shape_of(ref)
        if array.shape != expected:
            raise ShapeMismatchError(f"{ref.name} has shape {array.shape}, expected {expected}")
        checked.append(np.ascontiguousarray(array))
    return checked[0], checked[1]


def reference_execute(ir: LoopIR, inputs: Sequence[np.ndarray]) -> np.ndarray:
    """Interpret the schedule point by point; accumulation order is the loop order."""
    spec = ir.spec
    a, b = _checked_inputs(spec, inputs)

    points = iteration_points(ir.compute_loops, spec.variables)
    products = a.ravel().astype(np.float64)[_offsets(points, ir.layouts["A"])]
    products *= b.ravel().astype(np.float64)[_offsets(points, ir.layouts["B"])]
    accumulator = np.zeros(ir.layouts["T"].size, dtype=np.float64)
    np.add.at(accumulator, _offsets(points, ir.layouts["T"]), products)

    written = iteration_points(ir.writeback_loops, spec.output_indices)
    values = accumulator[_offsets(written, ir.layouts["T"])]
    if spec.post_op == PostOp.RELU:
        values = np.maximum(values, 0.0)
    output = np.zeros(ir.layouts["C"].size, dtype=np.float32)
    output[_offsets(written, ir.layouts["C"])] = values.astype(np.float32)
    return output.reshape(spec.shape_of(spec.output))


@dataclass(frozen=True)
class IterationBlock:
    """A rectangular run of iteration points: base values plus (var, count, step) dims."""

    base: Dict[str, int]
    dims: Tuple[Tuple[str, int, int], ...]

    @property
    def points(self) -> int:
        return math.prod(count for _, count, _ in self.dims)


def iteration_blocks(loops: Sequence[LoopDesc], max_points: Optional[int] = None) -> List[IterationBlock]:
    """Split a nest into blocks whose inner loops are regular and small enough to vectorise."""
    steps, _ = loop_coverages(loops)
    blocks: List[IterationBlock] = []

    def dims_of(active: List[int]) -> Tuple[Tuple[str, int, int], ...]:
        return tuple(
            (loops[k].var, loops[k].size + loops[k].tail if steps[k] == 1 else loops[k].size, steps[k]) for k in active
        )

    def walk(j: int, base: Dict[str, int], collapsed: FrozenSet[str]) -> None:
        active = [k for k in range(j, len(loops)) if loops[k].var not in collapsed]
        if not active:
            blocks.append(IterationBlock(base=base, dims=()))
            return
        if all(loops[k].tail == 0 or steps[k] == 1 for k in active):
            dims = dims_of(active)
            if len(active) == 1 or max_points is None or math.prod(d[1] for d in dims) <= max_points:
                blocks.append(IterationBlock(base=base, dims=dims))
                return
        k = active[0]
        loop, step = loops[k], steps[k]
        if step == 1:
            for i in range(loop.size + loop.tail):
                walk(k + 1, {**base, loop.var: base[loop.var] + i}, collapsed)
            return
        for i in range(loop.size):
            walk(k + 1, {**base, loop.var: base[loop.var] + i * step}, collapsed)
        for r in range(loop.tail):
            walk(k + 1, {**base, loop.var: base[loop.var] + loop.size * step + r}, collapsed | {loop.var})

    walk(0, {loop.var: 0 for loop in loops}, frozenset())
    return blocks


def _view(flat: np.ndarray, layout: TensorLayout, block: IterationBlock, dims: Sequence[int]) -> np.ndarray:
    offset = sum(value * layout.base_strides.get(var, 0) for var, value in block.base.items())
    shape = tuple(block.dims[d][1] for d in dims)
    strides = tuple(block.dims[d][2] * layout.base_strides.get(block.dims[d][0], 0) * flat.itemsize for d in dims)
    return as_strided(flat[offset:], shape=shape, strides=strides)


def _element_stride(layout: TensorLayout, dim: Tuple[str, int, int]) -> int:
    var, _, step = dim
    return step * layout.base_strides.get(var, 0)


# Kernel kinds of a compiled schedule.
_AXPY, _DOT, _EINSUM, _EINSUM_SCALAR, _COPY, _RELU = range(6)


class CompiledSchedule:
    """A schedule turned into a flat list of vectorised kernels over fixed buffers."""

    def __init__(self, ir: LoopIR, inputs: Tuple[np.ndarray, np.ndarray], kernel_points: int):
        self.ir = ir
        a, b = (np.ascontiguousarray(x, dtype=np.float32).ravel() for x in inputs)
        self.accumulator = np.zeros(ir.layouts["T"].size, dtype=np.float32)
        self.output = np.zeros(ir.layouts["C"].size, dtype=np.float32)
        layouts = ir.layouts
        self.compute_ops: List[tuple] = []
        self.writeback_ops: List[tuple] = []

        for block in iteration_blocks(ir.compute_loops, kernel_points):
            every = list(range(len(block.dims)))
            av = _view(a, layouts["A"], block, every)
            bv = _view(b, layouts["B"], block, every)
            kept = [d for d in every if _element_stride(layouts["T"], block.dims[d]) != 0]
            if len(every) == 1 and kept:
                self.compute_ops.append((_AXPY, av, bv, _view(self.accumulator, layouts["T"], block, kept)))
            elif len(every) == 1:
                self.compute_ops.append((_DOT, av, bv, _view(self.accumulator, layouts["T"], block, [])))
            else:
                letters = string.ascii_letters[: len(every)]
                subscripts = f"{letters},{letters}->{''.join(letters[d] for d in kept)}"
                target = _view(self.accumulator, layouts["T"], block, kept)
                kind = _EINSUM if kept else _EINSUM_SCALAR
                self.compute_ops.append((kind, av, bv, target, subscripts))

        kind = _RELU if ir.spec.post_op == PostOp.RELU else _COPY
        for block in iteration_blocks(ir.writeback_loops, kernel_points):
            every = list(range(len(block.dims)))
            tv = _view(self.accumulator, layouts["T"], block, every)
            cv = _view(self.output, layouts["C"], block, every)
            self.writeback_ops.append((kind, tv, cv))

    @property
    def kernel_count(self) -> int:
        return len(self.compute_ops) + len(self.writeback_ops)

    def run(self) -> np.ndarray:
        self.accumulator.fill(0.0)
        for op in self.compute_ops:
            kind = op[0]
            if kind == _AXPY:
                np.add(op[3], op[1] * op[2], out=op[3])
            elif kind == _DOT:
                op[3][...] += np.dot(op[1], op[2])
            elif kind == _EINSUM:
                np.add(op[3], np.einsum(op[4], op[1], op[2]), out=op[3])
            else:
                op[3][...] += np.einsum(op[4], op[1], op[2])
        for kind, tv, cv in self.writeback_ops:
            if kind == _RELU:
                np.maximum(tv, 0.0, out=cv)
            else:
                np.copyto(cv, tv)
        return self.output


class TimedExecutor:
    """Measures schedules on this machine: warm-up runs, then the fastest of several samples."""

    def __init__(self, config: Optional[BackendConfig] = None):
        self.config = config or BackendConfig()
        self._inputs: Dict[str, Tuple[np.ndarray, np.ndarray]] = {}

    def inputs_for(self, spec: ContractionSpec) -> Tuple[np.ndarray, np.ndarray]:
        key = spec.digest()
        if key not in self._inputs:
            self._inputs[key] = make_inputs(spec, self.config.seed)
        return self._inputs[key]

    def compile(self, ir: LoopIR) -> CompiledSchedule:
        return CompiledSchedule(ir, self.inputs_for(ir.spec), self.config.kernel_points)

    def _repetitions(self, compiled: CompiledSchedule) -> int:
        target_ns = self.config.min_sample_ms * 1e6
        repetitions = 1
        while True:
            start = time.perf_counter_ns()
            for _ in range(repetitions):
                compiled.run()
            elapsed = time.perf_counter_ns() - start
            if elapsed >= target_ns or repetitions >= _MAX_REPETITIONS:
                return repetitions
            grown = int(repetitions * target_ns / max(elapsed, 1)) + 1
            repetitions = min(_MAX_REPETITIONS, max(repetitions * 2, grown))
            logger.debug(f"Sample below {self.config.min_sample_ms}ms, using {repetitions} repetitions")

    def measure(self, ir: LoopIR) -> int:
        """Minimum runtime of one execution in nanoseconds."""
        compiled = self.compile(ir)
        for _ in range(self.config.warmup_iters):
            compiled.run()
        repetitions = self._repetitions(compiled)
        best = math.inf
        for _ in range(self.config.timed_iters):
            start = time.perf_counter_ns()
            for _ in range(repetitions):
                compiled.run()
            best = min(best, (time.perf_counter_ns() - start) / repetitions)
        return max(1, int(round(best)))


def timed_execute(ir: LoopIR, executor: Optional[TimedExecutor] = None) -> EvalResult:
    """Measured GFLOPS of a schedule."""
    executor = executor or TimedExecutor()
    runtime_ns = executor.measure(ir)
    return EvalResult.from_runtime(flop_count(ir.spec), runtime_ns, BackendKind.TIMED)


def _best_rate(kernel, flops: int, trials: int, repetitions: int) -> float:
    best = 0.0
    for _ in range(trials):
        start = time.perf_counter_ns()
        for _ in range(repetitions):
            kernel()
        elapsed = max(1, time.perf_counter_ns() - start)
        best = max(best, flops * repetitions / elapsed)
    return best


def measure_fma_peak(trials: int = 10, length: int = 2048, repetitions: int = 2000) -> PeakEstimate:
    """Best GFLOPS of an L1-resident multiply-accumulate ufunc kernel.

    The kernel runs on the same substrate as ``CompiledSchedule`` (numpy ufuncs
    over float32 vectors), so the estimate bounds what the timed executor can
    reach.
    """
    x = np.full(length, 1.0001, dtype=np.float32)
    y = np.full(length, 0.9999, dtype=np.float32)
    product = np.empty_like(x)
    acc = np.zeros_like(x)

    def fma() -> None:
        np.multiply(x, y, out=product)
        np.add(acc, product, out=acc)

    peak = _best_rate(fma, 2 * length, trials, repetitions)
    logger.info(f"Measured peak {peak:.3f} GFLOPS over {length}-element vectors")
    return PeakEstimate(gflops_peak=peak, method=f"best of {trials} trials of a multiply-add kernel", backend=BackendKind.TIMED)
