"""Tests for the execution module."""

import numpy as np
import pytest

from contraction_tuner.config import BackendConfig
from contraction_tuner.contraction import flop_count, lower, parse_spec
from contraction_tuner.exceptions import ShapeMismatchError
from contraction_tuner.execution import (
    CompiledSchedule,
    TimedExecutor,
    iteration_blocks,
    iteration_points,
    make_inputs,
    measure_fma_peak,
    reference_execute,
    timed_execute,
)
from contraction_tuner.models import Action, BackendKind, LoopDesc
from contraction_tuner.transforms import apply_sequence


SCHEDULES = [
    [],
    [Action.SPLIT_4],
    [Action.SPLIT_4, Action.DOWN, Action.DOWN, Action.SPLIT_2, Action.SWAP_UP],
    [Action.DOWN, Action.SWAP_DOWN, Action.SPLIT_4, Action.UP, Action.SWAP_UP],
    [Action.DOWN, Action.DOWN, Action.SPLIT_4, Action.SWAP_UP, Action.SWAP_UP],
]


def test_make_inputs_deterministic(small_spec):
    """Test operand tensors depend only on the seed."""
    a1, b1 = make_inputs(small_spec, seed=4)
    a2, b2 = make_inputs(small_spec, seed=4)
    assert a1.shape == (6, 7) and b1.shape == (7, 5)
    assert a1.dtype == np.float32
    np.testing.assert_array_equal(a1, a2)
    np.testing.assert_array_equal(b1, b2)
    assert np.all(a1 >= -1.0) and np.all(a1 < 1.0)


def test_reference_matches_einsum(small_spec):
    """Test the untiled schedule computes the matmul."""
    a, b = make_inputs(small_spec)
    np.testing.assert_allclose(reference_execute(lower(small_spec), (a, b)), a @ b, rtol=1e-5, atol=1e-5)


def test_reference_applies_relu():
    """Test the post op is applied on write-back."""
    spec = parse_spec("C[i,j] += A[i,r] * B[j,r] | i=4 j=3 r=5 post=relu")
    a, b = make_inputs(spec)
    expected = np.maximum(np.einsum("ir,jr->ij", a, b), 0)
    np.testing.assert_allclose(reference_execute(lower(spec), (a, b)), expected, rtol=1e-5, atol=1e-5)


def test_reference_rejects_wrong_shapes(small_spec):
    """Test mismatched operand shapes raise."""
    a, b = make_inputs(small_spec)
    with pytest.raises(ShapeMismatchError):
        reference_execute(lower(small_spec), (a.T, b))
    with pytest.raises(ShapeMismatchError):
        reference_execute(lower(small_spec), (a,))


def test_iteration_points_cover_space_once():
    """Test a tiled nest with tails visits every point exactly once."""
    loops = [LoopDesc("m", 2, 3), LoopDesc("n", 3), LoopDesc("m", 4)]
    count, arrays = iteration_points(loops, ("m", "n"))
    assert count == 11 * 3
    pairs = set(zip(arrays["m"].tolist(), arrays["n"].tolist()))
    assert pairs == {(m, n) for m in range(11) for n in range(3)}


def test_iteration_blocks_match_points():
    """Test vectorised blocks enumerate the same points as the interpreter."""
    loops = [LoopDesc("m", 2, 3), LoopDesc("n", 3), LoopDesc("m", 4)]
    points = set()
    for block in iteration_blocks(loops, max_points=4):
        grids = np.meshgrid(*[np.arange(count) * step for _, count, step in block.dims], indexing="ij")
        values = {var: np.full(block.points, block.base[var]) for var in ("m", "n")}
        for (var, _, _), grid in zip(block.dims, grids):
            values[var] = values[var] + grid.ravel()
        points.update(zip(values["m"].tolist(), values["n"].tolist()))
    assert points == {(m, n) for m in range(11) for n in range(3)}


@pytest.mark.parametrize("actions", SCHEDULES)
@pytest.mark.parametrize("kernel_points", [1, 16, 4096])
def test_compiled_matches_reference(small_spec, actions, kernel_points):
    """Test compiled kernels agree with the point-by-point interpreter."""
    inputs = make_inputs(small_spec, seed=2)
    ir = apply_sequence(lower(small_spec), actions)
    compiled = CompiledSchedule(ir, inputs, kernel_points)
    result = compiled.run().reshape(6, 5)
    np.testing.assert_allclose(result, reference_execute(ir, inputs), rtol=1e-4, atol=1e-5)


def test_compiled_rerun_is_idempotent(small_spec):
    """Test running a compiled schedule twice gives the same output."""
    compiled = CompiledSchedule(lower(small_spec), make_inputs(small_spec), 64)
    first = compiled.run().copy()
    np.testing.assert_array_equal(compiled.run(), first)
    assert compiled.kernel_count >= 2


def test_compiled_scalar_reduction():
    """Test a full reduction to a scalar output."""
    spec = parse_spec("dot: s[] += x[i] * y[i] | i=37")
    x, y = make_inputs(spec)
    ir = apply_sequence(lower(spec), [Action.SPLIT_8])
    result = CompiledSchedule(ir, (x, y), 16).run()
    np.testing.assert_allclose(result[0], np.dot(x, y), rtol=1e-4)


@pytest.mark.hardware
def test_timed_execute_reports_positive_gflops(small_spec):
    """Test the timed backend measures a schedule."""
    executor = TimedExecutor(BackendConfig(warmup_iters=1, timed_iters=2, min_sample_ms=0.1))
    result = timed_execute(lower(small_spec), executor)
    assert result.backend == BackendKind.TIMED
    assert result.flops == flop_count(small_spec)
    assert result.gflops > 0


@pytest.mark.hardware
def test_measure_fma_peak():
    """Test the peak kernels report a positive rate."""
    peak = measure_fma_peak(trials=2, length=256, repetitions=20)
    assert peak.gflops_peak > 0
    assert peak.backend == BackendKind.TIMED


@pytest.mark.hardware
def test_timed_execute_is_repeatable(matmul64):
    """Test two timings of one schedule agree within ten percent."""
    executor = TimedExecutor(BackendConfig())
    ir = apply_sequence(lower(matmul64), [Action.SPLIT_16, Action.DOWN, Action.DOWN, Action.SWAP_DOWN])
    first = timed_execute(ir, executor).gflops
    second = timed_execute(ir, executor).gflops
    assert abs(first - second) / max(first, second) <= 0.10


@pytest.mark.hardware
def test_measure_fma_peak_is_repeatable():
    """Test two consecutive peak measurements agree within ten percent."""
    first = measure_fma_peak().gflops_peak
    second = measure_fma_peak().gflops_peak
    assert abs(first - second) / max(first, second) <= 0.10
