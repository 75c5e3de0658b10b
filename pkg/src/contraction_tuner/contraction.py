"""Contraction specifications, the benchmark DSL and lowering to loop nests.

DSL, one benchmark per line::

    [name:] OUT[i,...] += IN1[i,...] * IN2[i,...] | var=int var=int ... [post=relu]

Whitespace is insignificant and ``#`` starts a comment.
"""

import logging
import math
import re
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import ValidationError

from .exceptions import SpecSemanticError, SpecSyntaxError
from .models import ContractionSpec, LoopDesc, LoopIR, Nest, PostOp, TensorLayout, TensorRef


logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<int>-?\d+)|(?P<op>\+=|[\[\],*|=:])")


class _Token:
    __slots__ = ("kind", "text", "pos")

    def __init__(self, kind: str, text: str, pos: int):
        self.kind = kind
        self.text = text
        self.pos = pos


def _tokenize(text: str, line: Optional[int]) -> List[_Token]:
    tokens: List[_Token] = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        if text[pos] == "#":
            break
        match = _TOKEN_RE.match(text, pos)
        if not match:
            raise SpecSyntaxError(f"unexpected character {text[pos]!r}", pos, line)
        kind = match.lastgroup or "op"
        tokens.append(_Token(kind, match.group(), pos))
        pos = match.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, line: Optional[int]):
        self.tokens = _tokenize(text, line)
        self.index = 0
        self.line = line

    @property
    def peek(self) -> _Token:
        return self.tokens[self.index]

    def error(self, message: str, token: Optional[_Token] = None) -> SpecSyntaxError:
        token = token or self.peek
        found = token.text or "end of input"
        return SpecSyntaxError(f"{message}, found {found!r}", token.pos, self.line)

    def expect(self, kind: str, text: Optional[str] = None) -> _Token:
        token = self.peek
        if token.kind != kind or (text is not None and token.text != text):
            raise self.error(f"expected {text or kind}")
        self.index += 1
        return token

    def accept(self, text: str) -> bool:
        if self.peek.kind == "op" and self.peek.text == text:
            self.index += 1
            return True
        return False

    def tensor_ref(self) -> Tuple[str, List[str], int]:
        name = self.expect("ident")
        self.expect("op", "[")
        indices: List[str] = []
        if not self.accept("]"):
            indices.append(self.expect("ident").text)
            while self.accept(","):
                indices.append(self.expect("ident").text)
            self.expect("op", "]")
        return name.text, indices, name.pos

    def parse(self) -> Tuple[Optional[str], Tuple[str, List[str], int], List[Tuple[str, List[str], int]], List[Tuple[str, str, int]]]:
        name = None
        if self.peek.kind == "ident" and self.tokens[self.index + 1].text == ":":
            name = self.expect("ident").text
            self.expect("op", ":")
        output = self.tensor_ref()
        self.expect("op", "+=")
        operands = [self.tensor_ref()]
        while self.accept("*"):
            operands.append(self.tensor_ref())
        self.expect("op", "|")
        bindings: List[Tuple[str, str, int]] = []
        while self.peek.kind == "ident":
            key = self.expect("ident")
            self.expect("op", "=")
            value = self.peek
            if value.kind not in ("int", "ident"):
                raise self.error("expected a value")
            self.index += 1
            bindings.append((key.text, value.text, key.pos))
        if self.peek.kind != "end":
            raise self.error("expected var=int binding or end of line")
        return name, output, operands, bindings


def parse_spec(text: str, line: Optional[int] = None) -> ContractionSpec:
    """Parse one benchmark DSL line into a validated ContractionSpec."""
    name, (out_name, out_idx, _), operands, bindings = _Parser(text, line).parse()

    if len(operands) != 2:
        raise SpecSemanticError(f"expected exactly two operands, got {len(operands)}")

    tensors = [out_name] + [op[0] for op in operands]
    if len(set(tensors)) != len(tensors):
        raise SpecSemanticError(f"tensor names must be distinct: {tensors}")

    for tensor_name, indices, _ in [(out_name, out_idx, 0)] + operands:
        if len(set(indices)) != len(indices):
            raise SpecSemanticError(f"index variables repeat in {tensor_name}[{','.join(indices)}]")

    extents: Dict[str, int] = {}
    post_op = PostOp.IDENTITY
    for key, value, _ in bindings:
        if key == "post":
            try:
                post_op = PostOp(value)
            except ValueError:
                raise SpecSemanticError(f"unknown post op: {value}") from None
            continue
        if key in extents:
            raise SpecSemanticError(f"extent of {key} declared twice")
        if not re.fullmatch(r"-?\d+", value):
            raise SpecSemanticError(f"extent of {key} must be an integer, got {value}")
        extents[key] = int(value)

    operand_vars = [v for _, indices, _ in operands for v in indices]
    used = set(out_idx) | set(operand_vars)
    for var in out_idx:
        if var not in operand_vars:
            raise SpecSemanticError(f"output index {var} appears in no operand")
    for var in sorted(used):
        if var not in extents:
            raise SpecSemanticError(f"undeclared index variable: {var}")
    for var, extent in extents.items():
        if var not in used:
            raise SpecSemanticError(f"extent declared for unused variable: {var}")
        if extent <= 0:
            raise SpecSemanticError(f"extent of {var} must be positive, got {extent}")
    if not used:
        raise SpecSemanticError("contraction has no index variables")

    output = TensorRef(name=out_name, indices=tuple(out_idx))
    refs = tuple(TensorRef(name=op_name, indices=tuple(indices)) for op_name, indices, _ in operands)
    if name is None:
        ordered = list(out_idx) + [v for v in dict.fromkeys(operand_vars) if v not in out_idx]
        name = f"{out_name}_" + "_".join(f"{v}{extents[v]}" for v in ordered)
    try:
        return ContractionSpec(name=name, output=output, operands=refs, extents=extents, post_op=post_op)
    except ValidationError as e:
        raise SpecSemanticError(str(e)) from e


def parse_spec_lines(text: str) -> List[ContractionSpec]:
    """Parse a multi-line benchmark file, skipping blank and comment lines."""
    specs: List[ContractionSpec] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        specs.append(parse_spec(raw, line=number))
    return specs


def lower(spec: ContractionSpec) -> LoopIR:
    """Lower a contraction to its untiled loop nest, cursor on the first loop."""
    compute = [LoopDesc(var=v, size=spec.extents[v], tail=0, nest=Nest.COMPUTE) for v in spec.variables]
    writeback = [LoopDesc(var=v, size=spec.extents[v], tail=0, nest=Nest.WRITEBACK) for v in spec.output_indices]
    a, b = spec.operands
    layouts = {
        "A": TensorLayout.row_major(a.indices, spec.extents),
        "B": TensorLayout.row_major(b.indices, spec.extents),
        "T": TensorLayout.row_major(spec.output_indices, spec.extents),
        "C": TensorLayout.row_major(spec.output_indices, spec.extents),
    }
    return LoopIR(loops=tuple(compute + writeback), cursor=0, spec=spec, layouts=layouts)


def flop_count(spec: ContractionSpec) -> int:
    """Multiply-add count over the iteration space, plus one op per output for a post op."""
    flops = 2 * math.prod(spec.extents[v] for v in spec.variables)
    if spec.post_op != PostOp.IDENTITY:
        flops += math.prod(spec.extents[v] for v in spec.output_indices)
    return flops


def canonical_key(ir: LoopIR) -> str:
    """Cursor-independent key of a schedule."""
    body = ";".join(
        f"{'c' if loop.is_compute else 'w'}:{loop.var}:{loop.size}:{loop.tail}" for loop in ir.loops
    )
    return f"{ir.spec.digest()}|{body}"


def loop_coverages(loops: Sequence[LoopDesc]) -> Tuple[List[int], List[int]]:
    """Per loop: the step of its iterator (coverage of the next same-variable loop
    below, 1 if none) and the number of iterator values it covers."""
    steps = [1] * len(loops)
    coverage = [0] * len(loops)
    nearest: Dict[str, int] = {}
    for j in range(len(loops) - 1, -1, -1):
        loop = loops[j]
        steps[j] = coverage[nearest[loop.var]] if loop.var in nearest else 1
        coverage[j] = loop.size * steps[j] + loop.tail
        nearest[loop.var] = j
    return steps, coverage


def describe(ir: LoopIR, strides: Optional[Sequence[Dict[str, int]]] = None) -> List[str]:
    """Render the nest one loop per line, marking the cursor."""
    lines: List[str] = []
    depth = 0
    for index, loop in enumerate(ir.loops):
        if index == ir.n_compute:
            depth = 0
        marker = "<- cursor" if index == ir.cursor else ""
        tail = f" r {loop.tail}" if loop.tail else ""
        access = ""
        if strides is not None:
            touched = {role: s for role, s in strides[index].items() if s}
            access = "  " + " ".join(f"{role}:{s}" for role, s in touched.items())
        lines.append(f"{'  ' * depth}for {loop.var} in {loop.size}{tail}{access}  {marker}".rstrip())
        depth += 1
    return lines
