"""Runs tuning methods over benchmark lists and stores one result per pair."""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

from .backend_manager import Backend, BackendManager, make_backend
from .config import Config
from .contraction import canonical_key, lower
from .environment import QFunction, rollout_policy
from .exceptions import CheckpointError, UnknownMethodError
from .models import BackendKind, ContractionSpec, PeakEstimate, ResultRecord, SearchResult, TraceEntry
from .search import METHOD_PRESETS, preset_config, search_benchmark
from .utils import sanitize_name, write_csv, write_json


logger = logging.getLogger(__name__)

ORIGINAL = "original"
POLICY = "policy"
KNOWN_METHODS: Tuple[str, ...] = (ORIGINAL, *METHOD_PRESETS, POLICY)

ProgressCallback = Callable[[ResultRecord], None]


def result_filename(benchmark: str, method: str) -> str:
    return f"{sanitize_name(benchmark)}__{sanitize_name(method)}.json"


def check_methods(methods: Sequence[str]) -> None:
    unknown = [m for m in methods if m not in KNOWN_METHODS]
    if unknown:
        raise UnknownMethodError(f"Unknown method(s): {', '.join(unknown)} (choose from {', '.join(KNOWN_METHODS)})")


class TuningManager:
    """Dispatches methods to searches, policy rollouts or the untiled baseline.

    Every (benchmark, method) job gets its own evaluation cache so evaluation
    counts and budgets are per job; the backend and its peak are shared.
    """

    def __init__(
        self,
        config: Optional[Config] = None,
        backend: Optional[Backend] = None,
        policy: Optional[QFunction] = None,
    ):
        self.config = config or Config()
        self.backend = backend or make_backend(self.config.backend.backend, self.config)
        self.policy = policy
        self._peak: Optional[PeakEstimate] = None

    @property
    def kind(self) -> BackendKind:
        return self.backend.kind

    def _manager(self) -> BackendManager:
        if self._peak is None:
            self._peak = BackendManager(self.config, self.backend).peak
        return BackendManager(self.config, self.backend, peak=self._peak)

    def evaluate_original(self, spec: ContractionSpec, manager: BackendManager) -> SearchResult:
        """The untiled schedule as a zero-step method."""
        started = time.monotonic()
        ir = lower(spec)
        gflops = manager.evaluate(ir).gflops
        return SearchResult(
            method=ORIGINAL,
            benchmark=spec.name,
            backend=self.kind,
            best_gflops=gflops,
            initial_gflops=gflops,
            best_key=canonical_key(ir),
            nodes_expanded=1,
            tree_nodes=1,
            evals=manager.cache.misses,
            wall_time_s=time.monotonic() - started,
            per_step_trace=[TraceEntry(step=0, best_gflops=gflops, time_s=0.0)],
        )

    def tune_one(self, spec: ContractionSpec, method: str, budget_s: Optional[float] = None) -> SearchResult:
        check_methods([method])
        manager = self._manager()
        if method == ORIGINAL:
            return self.evaluate_original(spec, manager)
        if method == POLICY:
            if self.policy is None:
                raise CheckpointError("the policy method needs a checkpoint")
            return rollout_policy(
                self.policy,
                spec,
                manager,
                episode_length=self.config.train.episode_length,
                weighting=self.config.search.histogram_weighting,
            )
        defaults = self.config.search
        cfg = preset_config(
            method,
            depth=defaults.depth,
            budget_s=budget_s if budget_s is not None else defaults.budget_s,
            backend=self.kind,
            seed=defaults.seed,
        )
        return search_benchmark(spec, cfg, manager)

    def _job(
        self, spec: ContractionSpec, method: str, out_dir: Optional[Path], budget_s: Optional[float], trace: bool
    ) -> ResultRecord:
        result = self.tune_one(spec, method, budget_s)
        record = ResultRecord.from_search(spec, method, result)
        if out_dir is not None:
            write_json(out_dir / result_filename(spec.name, method), record.model_dump_json(indent=2))
            if trace:
                write_csv(
                    out_dir / f"{sanitize_name(spec.name)}__{sanitize_name(method)}.trace.csv",
                    ("step", "best_gflops", "time_s"),
                    ([t.step, t.best_gflops, t.time_s] for t in result.per_step_trace),
                )
        return record

    def tune(
        self,
        benchmarks: Sequence[ContractionSpec],
        methods: Sequence[str],
        out_dir: Optional[Union[str, Path]] = None,
        budget_s: Optional[float] = None,
        trace: bool = False,
        workers: Optional[int] = None,
        progress: Optional[ProgressCallback] = None,
    ) -> List[ResultRecord]:
        """Tune every benchmark with every method; records come back in input order."""
        check_methods(methods)
        if POLICY in methods and self.policy is None:
            raise CheckpointError("the policy method needs a checkpoint")
        target = Path(out_dir) if out_dir is not None else None
        jobs = [(spec, method) for spec in benchmarks for method in methods]
        workers = workers or self.config.search.workers
        if not self.backend.concurrent_safe:
            workers = 1
        logger.info(f"Tuning {len(benchmarks)} benchmarks x {len(methods)} methods on {self.kind.value} with {workers} worker(s)")

        def run(job: Tuple[ContractionSpec, str]) -> ResultRecord:
            record = self._job(job[0], job[1], target, budget_s, trace)
            if progress is not None:
                progress(record)
            return record

        if workers == 1:
            return [run(job) for job in jobs]
        # Measure the shared peak before fanning out.
        self._manager()
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, jobs))
