"""Tests for the contraction module."""

import pytest

from contraction_tuner.contraction import (
    canonical_key,
    describe,
    flop_count,
    loop_coverages,
    lower,
    parse_spec,
    parse_spec_lines,
)
from contraction_tuner.exceptions import SpecSemanticError, SpecSyntaxError
from contraction_tuner.models import LoopDesc, Nest, PostOp


def test_parse_named_matmul():
    """Test parsing a named benchmark line."""
    spec = parse_spec("mm: C[m,n] += A[m,k] * B[k,n] | m=64 n=32 k=16")
    assert spec.name == "mm"
    assert spec.output.name == "C"
    assert [ref.name for ref in spec.operands] == ["A", "B"]
    assert spec.extents == {"m": 64, "n": 32, "k": 16}
    assert spec.post_op == PostOp.IDENTITY


def test_default_name_from_shape():
    """Test unnamed benchmarks are named after the output and extents."""
    spec = parse_spec("C[m,n] += A[m,k] * B[k,n] | k=16 m=64 n=32")
    assert spec.name == "C_m64_n32_k16"


def test_whitespace_comments_and_post_op():
    """Test whitespace is insignificant, # starts a comment and post ops parse."""
    spec = parse_spec("  Y [ i , j ]+=X[i,r]*W[r,j]|i=3 j=4 r=5 post=relu  # batched")
    assert spec.post_op == PostOp.RELU
    assert spec.variables == ("i", "j", "r")


def test_dsl_round_trip():
    """Test to_dsl output parses back to the same contraction."""
    spec = parse_spec("t: O[a,b] += L[a,c,d] * R[d,c,b] | a=2 b=3 c=4 d=5 post=relu")
    assert parse_spec(spec.to_dsl()) == spec


def test_scalar_output():
    """Test a full reduction to a scalar."""
    spec = parse_spec("dot: s[] += x[i] * y[i] | i=8")
    assert spec.output_indices == ()
    assert spec.contraction_indices == ("i",)
    assert flop_count(spec) == 16


@pytest.mark.parametrize(
    "text, position",
    [
        ("C[m,n] = A[m,k] * B[k,n] | m=1 n=1 k=1", 7),
        ("C[m,n] += A[m,k] * B[k,n] m=1", 26),
        ("C[m,n] += A[m,k] * B[k,n] | m=1 n=1 k=1 $", 40),
        ("C[m,n += A[m,k] * B[k,n] | m=1", 6),
    ],
)
def test_syntax_errors_carry_position(text, position):
    """Test syntax errors report where parsing stopped."""
    with pytest.raises(SpecSyntaxError) as exc_info:
        parse_spec(text)
    assert exc_info.value.position == position


@pytest.mark.parametrize(
    "text",
    [
        "C[m,n] += A[m,k] | m=2 n=2 k=2",
        "C[m,n] += A[m,k] * B[k,n] * D[n] | m=2 n=2 k=2",
        "C[m,n] += A[m,k] * B[k,m] | m=2 n=2 k=2",
        "C[m,n] += A[m,k] * B[k,n] | m=2 n=2",
        "C[m,n] += A[m,k] * B[k,n] | m=2 n=2 k=0",
        "C[m,n] += A[m,k] * B[k,n] | m=2 n=2 k=2 k=3",
        "C[m,n] += A[m,k] * B[k,n] | m=2 n=2 k=2 z=4",
        "C[m,m] += A[m,k] * B[k,m] | m=2 k=2",
        "C[m,n] += C[m,k] * B[k,n] | m=2 n=2 k=2",
        "C[m,n] += A[m,k] * B[k,n] | m=2 n=2 k=2 post=tanh",
    ],
)
def test_semantic_errors(text):
    """Test well-formed lines that break a contraction rule."""
    with pytest.raises(SpecSemanticError):
        parse_spec(text)


def test_parse_spec_lines_reports_line_numbers():
    """Test multi-line parsing skips comments and numbers errors by line."""
    text = "# header\n\na: C[m] += A[m,k] * B[k] | m=2 k=3\n  \nb: C[m] += A[m k] * B[k] | m=2 k=3\n"
    with pytest.raises(SpecSyntaxError) as exc_info:
        parse_spec_lines(text)
    assert exc_info.value.line == 5
    assert len(parse_spec_lines(text.rsplit("\n", 2)[0])) == 1


def test_lower_untiled(matmul64):
    """Test lowering gives the compute nest then the write-back nest."""
    ir = lower(matmul64)
    assert ir.cursor == 0
    assert [(loop.var, loop.size, loop.tail, loop.nest) for loop in ir.loops] == [
        ("m", 64, 0, Nest.COMPUTE),
        ("n", 64, 0, Nest.COMPUTE),
        ("k", 64, 0, Nest.COMPUTE),
        ("m", 64, 0, Nest.WRITEBACK),
        ("n", 64, 0, Nest.WRITEBACK),
    ]
    assert ir.n_compute == 3
    assert ir.layouts["A"].base_strides == {"m": 64, "k": 1}
    assert ir.layouts["B"].base_strides == {"k": 64, "n": 1}
    assert ir.layouts["T"].dims == ir.layouts["C"].dims == ("m", "n")


def test_flop_count(matmul64):
    """Test flops count two per multiply-add plus one per output for post ops."""
    assert flop_count(matmul64) == 2 * 64**3
    relu = parse_spec("C[m,n] += A[m,k] * B[k,n] | m=4 n=5 k=6 post=relu")
    assert flop_count(relu) == 2 * 4 * 5 * 6 + 20


def test_loop_coverages():
    """Test steps and coverage of tiled loops."""
    loops = [LoopDesc("m", 3, 4), LoopDesc("n", 5), LoopDesc("m", 8)]
    steps, coverage = loop_coverages(loops)
    assert steps == [8, 1, 1]
    assert coverage == [28, 5, 8]


def test_canonical_key_ignores_cursor(matmul64):
    """Test the key changes with structure but not with the cursor."""
    ir = lower(matmul64)
    assert canonical_key(ir) == canonical_key(ir.with_cursor(3))
    swapped = ir.with_loops((ir.loops[1], ir.loops[0]) + ir.loops[2:], 0)
    assert canonical_key(swapped) != canonical_key(ir)
    assert canonical_key(ir).startswith(matmul64.digest() + "|")


def test_describe_marks_cursor(small_spec):
    """Test the rendered nest marks the cursor line."""
    lines = describe(lower(small_spec).with_cursor(1))
    assert len(lines) == 5
    assert lines[1].endswith("<- cursor")
    assert lines[3] == "for m in 6"
