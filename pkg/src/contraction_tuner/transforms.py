"""Cursor-based schedule actions: moves, adjacent swaps and splits with tails."""

from typing import FrozenSet, Optional, Sequence, Tuple

from .contraction import loop_coverages
from .models import Action, ActionOutcome, LoopDesc, LoopIR

ALL_ACTIONS: Tuple[Action, ...] = tuple(Action)
HISTORY_WINDOW = 4


def _noop(ir: LoopIR) -> ActionOutcome:
    return ActionOutcome(next=ir, changed=False, applied=False)


def _move(ir: LoopIR, delta: int) -> ActionOutcome:
    target = ir.cursor + delta
    if not 0 <= target < len(ir.loops):
        return _noop(ir)
    return ActionOutcome(next=ir.with_cursor(target), changed=False, applied=True)


def _swap(ir: LoopIR, delta: int) -> ActionOutcome:
    here = ir.cursor
    there = here + delta
    if not 0 <= there < len(ir.loops):
        return _noop(ir)
    a, b = ir.loops[here], ir.loops[there]
    if a.nest != b.nest:
        return _noop(ir)
    # Reordering tiles of one variable keeps coverage only when neither has a tail.
    if a.var == b.var and (a.tail or b.tail):
        return _noop(ir)
    loops = list(ir.loops)
    loops[here], loops[there] = b, a
    return ActionOutcome(next=ir.with_loops(tuple(loops), there), changed=tuple(loops) != ir.loops, applied=True)


def _split(ir: LoopIR, factor: int) -> ActionOutcome:
    loop = ir.current
    if not loop.is_compute or loop.size <= factor:
        return _noop(ir)
    steps, _ = loop_coverages(ir.compute_loops)
    step = steps[ir.cursor]
    outer = LoopDesc(var=loop.var, size=loop.size // factor, tail=(loop.size % factor) * step + loop.tail, nest=loop.nest)
    inner = LoopDesc(var=loop.var, size=factor, tail=0, nest=loop.nest)
    loops = ir.loops[: ir.cursor] + (outer, inner) + ir.loops[ir.cursor + 1 :]
    return ActionOutcome(next=ir.with_loops(loops, ir.cursor), changed=True, applied=True)


def apply(ir: LoopIR, action: Action) -> ActionOutcome:
    """Apply one action; illegal actions come back as no-ops with applied=False."""
    action = Action(action)
    if action == Action.UP:
        return _move(ir, -1)
    if action == Action.DOWN:
        return _move(ir, 1)
    if action == Action.SWAP_UP:
        return _swap(ir, -1)
    if action == Action.SWAP_DOWN:
        return _swap(ir, 1)
    factor = action.split_factor
    assert factor is not None
    return _split(ir, factor)


def apply_sequence(ir: LoopIR, actions: Sequence[Action]) -> LoopIR:
    """Apply actions in order, absorbing illegal ones."""
    for action in actions:
        ir = apply(ir, action).next
    return ir


def legal_actions(ir: LoopIR, max_loops: Optional[int] = None) -> FrozenSet[Action]:
    """Actions whose application is not a no-op; splits are dropped at max_loops."""
    legal = set()
    for action in ALL_ACTIONS:
        if max_loops is not None and action.split_factor and len(ir.loops) >= max_loops:
            continue
        if apply(ir, action).applied:
            legal.add(action)
    return frozenset(legal)


def oscillation_detected(history: Sequence[Tuple[str, int]]) -> bool:
    """True when the last four (key, cursor) entries alternate between two
    cursor positions of one structure."""
    if len(history) < HISTORY_WINDOW:
        return False
    first, second, third, fourth = list(history)[-HISTORY_WINDOW:]
    return first == third and second == fourth and first != second and first[0] == second[0]
