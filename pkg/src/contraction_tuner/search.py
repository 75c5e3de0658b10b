"""Schedule search: greedy with lookahead, beam DFS/BFS, random and exhaustive.

Every search evaluates states through the shared memoization cache and checks
the wall-clock budget between evaluations, returning the best state seen so far.
"""

import logging
import math
import time
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .backend_manager import BackendManager
from .contraction import canonical_key, lower
from .exceptions import UnknownMethodError
from .models import Action, ContractionSpec, LoopIR, SearchConfig, SearchMethod, SearchResult, TraceEntry
from .transforms import apply, legal_actions


logger = logging.getLogger(__name__)

# Named presets used by the CLI.
METHOD_PRESETS: Dict[str, Dict[str, object]] = {
    "greedy1": {"method": SearchMethod.GREEDY, "lookahead": 1},
    "greedy2": {"method": SearchMethod.GREEDY, "lookahead": 2},
    "beam2dfs": {"method": SearchMethod.BEAM_DFS, "width": 2},
    "beam2bfs": {"method": SearchMethod.BEAM_BFS, "width": 2},
    "beam4dfs": {"method": SearchMethod.BEAM_DFS, "width": 4},
    "beam4bfs": {"method": SearchMethod.BEAM_BFS, "width": 4},
    "random": {"method": SearchMethod.RANDOM},
    "exhaustive": {"method": SearchMethod.EXHAUSTIVE},
}


def preset_config(name: str, **overrides: object) -> SearchConfig:
    """SearchConfig for a named preset such as ``beam4dfs``."""
    if name not in METHOD_PRESETS:
        raise UnknownMethodError(f"Unknown search method: {name} (choose from {', '.join(METHOD_PRESETS)})")
    return SearchConfig(**{**METHOD_PRESETS[name], **overrides})


class _SearchRun:
    """Bookkeeping shared by all searches."""

    def __init__(self, ir: LoopIR, cfg: SearchConfig, manager: BackendManager, label: str):
        self.root = ir
        self.cfg = cfg
        self.manager = manager
        self.label = label
        self.started = time.monotonic()
        self.deadline = self.started + cfg.budget_s
        self.hits_before = manager.cache.hits
        self.misses_before = manager.cache.misses
        self.nodes_expanded = 1
        self.tree_nodes = 1
        self.trace: List[TraceEntry] = []
        self.best_actions: List[Action] = []
        self.best_key = canonical_key(ir)
        self.initial_gflops = self.evaluate(ir, [], initial=True)
        self.best_gflops = self.initial_gflops
        self.record(0)

    def expired(self) -> bool:
        return time.monotonic() >= self.deadline

    def evaluate(self, ir: LoopIR, path: List[Action], initial: bool = False) -> float:
        gflops = self.manager.evaluate(ir).gflops
        if not initial and gflops > self.best_gflops:
            self.best_gflops = gflops
            self.best_actions = list(path)
            self.best_key = canonical_key(ir)
        return gflops

    def expand(self, ir: LoopIR, path: List[Action]) -> List[Tuple[Action, LoopIR, float]]:
        """Evaluate every legal successor; stops early when the budget runs out."""
        children = []
        for action in sorted(legal_actions(ir)):
            if self.expired():
                break
            child = apply(ir, action).next
            self.nodes_expanded += 1
            children.append((action, child, self.evaluate(child, path + [action])))
        return children

    def record(self, step: int) -> None:
        self.trace.append(TraceEntry(step=step, best_gflops=self.best_gflops, time_s=time.monotonic() - self.started))

    def finish(self) -> SearchResult:
        result = SearchResult(
            method=self.label,
            benchmark=self.root.spec.name,
            backend=self.manager.kind,
            best_actions=self.best_actions,
            best_gflops=self.best_gflops,
            initial_gflops=self.initial_gflops,
            best_key=self.best_key,
            nodes_expanded=self.nodes_expanded,
            tree_nodes=self.tree_nodes,
            evals=self.manager.cache.misses - self.misses_before,
            cache_hits=self.manager.cache.hits - self.hits_before,
            wall_time_s=time.monotonic() - self.started,
            per_step_trace=self.trace,
        )
        logger.info(
            f"{self.label} on {result.benchmark}: {result.best_gflops:.4f} GFLOPS "
            f"({result.speedup:.2f}x) with {result.evals} evals in {result.wall_time_s:.2f}s"
        )
        return result


def greedy_search(ir: LoopIR, cfg: SearchConfig, manager: BackendManager) -> SearchResult:
    """Move one action at a time toward the best state of a lookahead tree."""
    run = _SearchRun(ir, cfg, manager, f"greedy{cfg.lookahead}")
    current, path, current_value = ir, [], run.initial_gflops

    for step in range(cfg.depth):
        if run.expired():
            break
        window = min(cfg.lookahead, cfg.depth - step)
        best_first: Optional[Action] = None
        best_value = -math.inf

        def explore(node: LoopIR, first: Optional[Action], level: int, prefix: List[Action]) -> None:
            nonlocal best_first, best_value
            for action, child, value in run.expand(node, path + prefix):
                run.tree_nodes += 1
                head = first if first is not None else action
                if value > best_value:
                    best_value, best_first = value, head
                if level + 1 < window and not run.expired():
                    explore(child, head, level + 1, prefix + [action])

        explore(current, None, 0, [])
        if best_first is None or best_value <= current_value:
            break
        current = apply(current, best_first).next
        path = path + [best_first]
        current_value = run.evaluate(current, path)
        run.record(step + 1)

    return run.finish()


def beam_search(ir: LoopIR, cfg: SearchConfig, manager: BackendManager) -> SearchResult:
    """Keep the top-width children of every node, depth-first or layer by layer."""
    label = f"beam{cfg.width}{'bfs' if cfg.method == SearchMethod.BEAM_BFS else 'dfs'}"
    run = _SearchRun(ir, cfg, manager, label)

    def ranked(node: LoopIR, path: List[Action]) -> List[Tuple[Action, LoopIR]]:
        children = run.expand(node, path)
        children.sort(key=lambda child: (-child[2], int(child[0])))
        return [(action, child) for action, child, _ in children[: cfg.width]]

    if cfg.method == SearchMethod.BEAM_BFS:
        frontier: List[Tuple[LoopIR, List[Action]]] = [(ir, [])]
        for depth in range(1, cfg.depth + 1):
            layer: List[Tuple[LoopIR, List[Action]]] = []
            for node, path in frontier:
                if run.expired():
                    break
                for action, child in ranked(node, path):
                    run.tree_nodes += 1
                    layer.append((child, path + [action]))
            frontier = layer
            run.record(depth)
            if run.expired() or not frontier:
                break
    else:

        def descend(node: LoopIR, path: List[Action]) -> None:
            if len(path) >= cfg.depth or run.expired():
                return
            best_before = run.best_gflops
            for action, child in ranked(node, path):
                run.tree_nodes += 1
                descend(child, path + [action])
            if run.best_gflops > best_before:
                run.record(len(path) + 1)

        descend(ir, [])
    return run.finish()


def random_search(ir: LoopIR, cfg: SearchConfig, manager: BackendManager) -> SearchResult:
    """Sample uniform legal-action sequences of length depth, evaluating every prefix."""
    run = _SearchRun(ir, cfg, manager, "random")
    rng = np.random.default_rng(cfg.seed)
    samples = 0
    while not run.expired() and (cfg.max_samples is None or samples < cfg.max_samples):
        node, path = ir, []
        best_before = run.best_gflops
        for _ in range(cfg.depth):
            if run.expired():
                break
            choices = sorted(legal_actions(node))
            action = choices[int(rng.integers(len(choices)))]
            node = apply(node, action).next
            path.append(action)
            run.nodes_expanded += 1
            run.evaluate(node, path)
        samples += 1
        if run.best_gflops > best_before:
            run.record(samples)
    return run.finish()


def exhaustive_search(ir: LoopIR, cfg: SearchConfig, manager: BackendManager) -> SearchResult:
    """Evaluate every state reachable within depth actions."""
    run = _SearchRun(ir, cfg, manager, "exhaustive")

    def visit(node: LoopIR, path: List[Action]) -> None:
        if len(path) >= cfg.depth or run.expired():
            return
        for action, child, _ in run.expand(node, path):
            run.tree_nodes += 1
            visit(child, path + [action])

    visit(ir, [])
    run.record(cfg.depth)
    return run.finish()


_DISPATCH: Dict[SearchMethod, Callable[[LoopIR, SearchConfig, BackendManager], SearchResult]] = {
    SearchMethod.GREEDY: greedy_search,
    SearchMethod.BEAM_DFS: beam_search,
    SearchMethod.BEAM_BFS: beam_search,
    SearchMethod.RANDOM: random_search,
    SearchMethod.EXHAUSTIVE: exhaustive_search,
}


def run_search(ir: LoopIR, cfg: SearchConfig, manager: BackendManager) -> SearchResult:
    """Dispatch to the configured search."""
    return _DISPATCH[cfg.method](ir, cfg, manager)


def search_benchmark(spec: ContractionSpec, cfg: SearchConfig, manager: BackendManager) -> SearchResult:
    """Lower a benchmark and search from its untiled schedule."""
    return run_search(lower(spec), cfg, manager)
