"""Evaluation backends, memoization and peak bookkeeping."""

import logging
import threading
from typing import Dict, Optional, Protocol

from .config import BackendConfig, Config, CostModelConfig
from .contraction import canonical_key
from .cost_model import analytic_peak, cost_model_execute
from .execution import TimedExecutor, measure_fma_peak, timed_execute
from .models import BackendKind, EvalResult, LoopIR, PeakEstimate


logger = logging.getLogger(__name__)


class Backend(Protocol):
    """Common interface of the timed and cost-model backends."""

    kind: BackendKind
    concurrent_safe: bool

    def evaluate(self, ir: LoopIR) -> EvalResult:
        ...

    def measure_peak(self) -> PeakEstimate:
        ...


class CostModelBackend:
    """Pure analytic backend; safe to call from many threads."""

    kind = BackendKind.COSTMODEL
    concurrent_safe = True

    def __init__(self, config: Optional[CostModelConfig] = None):
        self.config = config or CostModelConfig()

    def evaluate(self, ir: LoopIR) -> EvalResult:
        return cost_model_execute(ir, self.config)

    def measure_peak(self) -> PeakEstimate:
        return analytic_peak(self.config)


class TimedBackend:
    """Wall-clock backend; at most one measurement runs at a time."""

    kind = BackendKind.TIMED
    concurrent_safe = False

    _lock = threading.Lock()

    def __init__(self, config: Optional[BackendConfig] = None):
        self.config = config or BackendConfig()
        self.executor = TimedExecutor(self.config)

    def evaluate(self, ir: LoopIR) -> EvalResult:
        with self._lock:
            return timed_execute(ir, self.executor)

    def measure_peak(self) -> PeakEstimate:
        with self._lock:
            return measure_fma_peak(trials=self.config.peak_trials)


def make_backend(kind: BackendKind, config: Optional[Config] = None) -> Backend:
    """Build a backend of the requested kind from the configuration."""
    config = config or Config()
    if BackendKind(kind) == BackendKind.TIMED:
        return TimedBackend(config.backend)
    return CostModelBackend(config.cost_model)


class EvalCache:
    """Results keyed by canonical key with one writer per key."""

    def __init__(self) -> None:
        self._results: Dict[str, EvalResult] = {}
        self._key_locks: Dict[str, threading.Lock] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._results)

    def __contains__(self, key: str) -> bool:
        return key in self._results

    def get_or_evaluate(self, key: str, ir: LoopIR, backend: Backend) -> EvalResult:
        with self._lock:
            if key in self._results:
                self.hits += 1
                return self._results[key]
            key_lock = self._key_locks.setdefault(key, threading.Lock())
        with key_lock:
            with self._lock:
                if key in self._results:
                    self.hits += 1
                    return self._results[key]
            result = backend.evaluate(ir)
            with self._lock:
                self._results[key] = result
                self.misses += 1
                self._key_locks.pop(key, None)
        logger.debug(f"Evaluated {key}: {result.gflops:.4f} GFLOPS")
        return result


def memoized_eval(ir: LoopIR, backend: Backend, cache: EvalCache) -> EvalResult:
    """Evaluate through the cache; one backend call per distinct key."""
    return cache.get_or_evaluate(canonical_key(ir), ir, backend)


class BackendManager:
    """Owns a backend, its evaluation cache and its peak estimate."""

    def __init__(
        self,
        config: Optional[Config] = None,
        backend: Optional[Backend] = None,
        peak: Optional[PeakEstimate] = None,
    ):
        self.config = config or Config()
        self.backend = backend or make_backend(self.config.backend.backend, self.config)
        self.cache = EvalCache()
        self._peak = peak
        self._observed_max = 0.0

    @property
    def kind(self) -> BackendKind:
        return self.backend.kind

    @property
    def evals(self) -> int:
        return self.cache.misses

    @property
    def peak(self) -> PeakEstimate:
        if self._peak is None:
            self._peak = self.backend.measure_peak()
            logger.info(f"Peak for {self.kind.value} backend: {self._peak.gflops_peak:.3f} GFLOPS")
        return self._peak

    def evaluate(self, ir: LoopIR) -> EvalResult:
        result = memoized_eval(ir, self.backend, self.cache)
        if result.gflops > self._observed_max:
            self._observed_max = result.gflops
            if self._peak is not None and result.gflops > self._peak.gflops_peak:
                self._raise_peak(result.gflops)
        return result

    def _raise_peak(self, observed: float) -> None:
        logger.warning(
            f"Observed {observed:.3f} GFLOPS above the {self.kind.value} peak of "
            f"{self._peak.gflops_peak:.3f}; re-measuring"
        )
        remeasured = self.backend.measure_peak()
        self._peak = PeakEstimate(
            gflops_peak=max(observed, remeasured.gflops_peak),
            method=f"{remeasured.method}; raised after observing {observed:.3f}",
            backend=self.kind,
        )
