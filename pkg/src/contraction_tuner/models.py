"""Data models for contraction-tuner."""

import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import Any, Deque, Dict, Iterator, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator

from .exceptions import DatasetError


class PostOp(str, Enum):
    """Elementwise operation applied to the final result."""

    IDENTITY = "identity"
    RELU = "relu"


class Nest(str, Enum):
    """Loop nest a loop belongs to."""

    COMPUTE = "compute"
    WRITEBACK = "writeback"


class BackendKind(str, Enum):
    """Schedule evaluation backends."""

    COSTMODEL = "costmodel"
    TIMED = "timed"


class SearchMethod(str, Enum):
    """Search algorithms of the baseline suite."""

    GREEDY = "greedy"
    BEAM_DFS = "beam_dfs"
    BEAM_BFS = "beam_bfs"
    RANDOM = "random"
    EXHAUSTIVE = "exhaustive"


class HistogramWeighting(str, Enum):
    """How stride histogram entries are counted."""

    REFERENCES = "references"
    TRIP_COUNT = "trip_count"


class Action(IntEnum):
    """Discrete schedule actions with stable ids."""

    UP = 0
    DOWN = 1
    SWAP_UP = 2
    SWAP_DOWN = 3
    SPLIT_2 = 4
    SPLIT_4 = 5
    SPLIT_8 = 6
    SPLIT_16 = 7
    SPLIT_32 = 8
    SPLIT_64 = 9

    @property
    def label(self) -> str:
        return self.name.lower()

    @property
    def split_factor(self) -> Optional[int]:
        if self >= Action.SPLIT_2:
            return 2 ** (int(self) - 3)
        return None

    @property
    def is_cursor_move(self) -> bool:
        return self in (Action.UP, Action.DOWN)

    @classmethod
    def from_label(cls, label: str) -> "Action":
        try:
            return cls[label.strip().upper()]
        except KeyError:
            raise ValueError(f"Unknown action: {label}") from None


ROLES: Tuple[str, ...] = ("A", "B", "T", "C")
COMPUTE_ROLES: Tuple[str, ...] = ("A", "B", "T")
WRITEBACK_ROLES: Tuple[str, ...] = ("T", "C")


class TensorRef(BaseModel):
    """Tensor name plus its ordered index variables."""

    model_config = ConfigDict(frozen=True)

    name: str
    indices: Tuple[str, ...] = ()

    @field_validator("indices")
    @classmethod
    def _unique_indices(cls, value: Tuple[str, ...]) -> Tuple[str, ...]:
        if len(set(value)) != len(value):
            raise ValueError(f"index variables repeat within a tensor reference: {list(value)}")
        return value

    def to_dsl(self) -> str:
        return f"{self.name}[{','.join(self.indices)}]"


class ContractionSpec(BaseModel):
    """Two-operand contraction C = post(A * B) summed over missing indices."""

    model_config = ConfigDict(frozen=True)

    name: str
    output: TensorRef
    operands: Tuple[TensorRef, TensorRef]
    extents: Dict[str, int]
    post_op: PostOp = PostOp.IDENTITY
    element_type: Literal["float32"] = "float32"

    @model_validator(mode="after")
    def _check_invariants(self) -> "ContractionSpec":
        operand_vars = {v for ref in self.operands for v in ref.indices}
        missing = [v for v in self.output.indices if v not in operand_vars]
        if missing:
            raise ValueError(f"output indices {missing} appear in no operand")
        used = set(self.output.indices) | operand_vars
        if not used:
            raise ValueError("contraction has no index variables")
        undeclared = sorted(used - set(self.extents))
        if undeclared:
            raise ValueError(f"undeclared index variables: {undeclared}")
        for var, extent in self.extents.items():
            if extent < 1:
                raise ValueError(f"extent of {var} must be >= 1, got {extent}")
        return self

    @property
    def output_indices(self) -> Tuple[str, ...]:
        return self.output.indices

    @property
    def contraction_indices(self) -> Tuple[str, ...]:
        seen: List[str] = []
        for ref in self.operands:
            for var in ref.indices:
                if var not in self.output.indices and var not in seen:
                    seen.append(var)
        return tuple(seen)

    @property
    def variables(self) -> Tuple[str, ...]:
        return self.output_indices + self.contraction_indices

    def shape_of(self, ref: TensorRef) -> Tuple[int, ...]:
        return tuple(self.extents[v] for v in ref.indices)

    def to_dsl(self, include_name: bool = True) -> str:
        a, b = self.operands
        bounds = " ".join(f"{v}={self.extents[v]}" for v in self.variables)
        text = f"{self.output.to_dsl()} += {a.to_dsl()} * {b.to_dsl()} | {bounds}"
        if self.post_op != PostOp.IDENTITY:
            text += f" post={self.post_op.value}"
        return f"{self.name}: {text}" if include_name else text

    def digest(self) -> str:
        """Short stable digest of the contraction (name excluded)."""
        return hashlib.sha1(self.to_dsl(include_name=False).encode("utf-8")).hexdigest()[:10]


class TensorLayout(BaseModel):
    """Row-major layout of one tensor."""

    model_config = ConfigDict(frozen=True)

    dims: Tuple[str, ...]
    shape: Tuple[int, ...]
    base_strides: Dict[str, int]

    @classmethod
    def row_major(cls, dims: Tuple[str, ...], extents: Dict[str, int]) -> "TensorLayout":
        strides: Dict[str, int] = {}
        running = 1
        for var in reversed(dims):
            strides[var] = running
            running *= extents[var]
        return cls(dims=tuple(dims), shape=tuple(extents[v] for v in dims), base_strides=strides)

    @model_validator(mode="after")
    def _check_row_major(self) -> "TensorLayout":
        running = 1
        for var, extent in zip(reversed(self.dims), reversed(self.shape)):
            if self.base_strides.get(var) != running:
                raise ValueError(f"stride of {var} is not row-major")
            running *= extent
        return self

    @property
    def size(self) -> int:
        return int(math.prod(self.shape))


@dataclass(frozen=True)
class LoopDesc:
    """One counted loop of a nest."""

    var: str
    size: int
    tail: int = 0
    nest: Nest = Nest.COMPUTE

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError(f"loop size must be >= 1, got {self.size}")
        if self.tail < 0:
            raise ValueError(f"loop tail must be >= 0, got {self.tail}")

    @property
    def is_compute(self) -> bool:
        return self.nest == Nest.COMPUTE


@dataclass(frozen=True)
class LoopIR:
    """Cursor-annotated loop list: compute nest followed by write-back nest."""

    loops: Tuple[LoopDesc, ...]
    cursor: int
    spec: ContractionSpec
    layouts: Dict[str, TensorLayout] = field(compare=False)

    def __post_init__(self) -> None:
        if not 0 <= self.cursor < len(self.loops):
            raise ValueError(f"cursor {self.cursor} outside 0..{len(self.loops) - 1}")

    @property
    def n_compute(self) -> int:
        return sum(1 for loop in self.loops if loop.is_compute)

    @property
    def compute_loops(self) -> Tuple[LoopDesc, ...]:
        return self.loops[: self.n_compute]

    @property
    def writeback_loops(self) -> Tuple[LoopDesc, ...]:
        return self.loops[self.n_compute :]

    @property
    def current(self) -> LoopDesc:
        return self.loops[self.cursor]

    def with_cursor(self, cursor: int) -> "LoopIR":
        return replace(self, cursor=cursor)

    def with_loops(self, loops: Tuple[LoopDesc, ...], cursor: int) -> "LoopIR":
        return replace(self, loops=tuple(loops), cursor=cursor)


@dataclass(frozen=True)
class ActionOutcome:
    """Result of applying one action."""

    next: LoopIR
    changed: bool
    applied: bool


@dataclass(frozen=True)
class StrideProfile:
    """Per-loop strides (elements) for tensors A, B, T and the output C."""

    per_loop: Tuple[Dict[str, int], ...]

    def __len__(self) -> int:
        return len(self.per_loop)

    def __getitem__(self, index: int) -> Dict[str, int]:
        return self.per_loop[index]

    def __iter__(self) -> Iterator[Dict[str, int]]:
        return iter(self.per_loop)


class EvalResult(BaseModel):
    """Measured or modelled performance of one schedule."""

    model_config = ConfigDict(frozen=True)

    gflops: float = Field(gt=0)
    runtime_ns: int = Field(ge=1)
    flops: int = Field(ge=1)
    backend: BackendKind

    @classmethod
    def from_runtime(cls, flops: int, runtime_ns: int, backend: BackendKind) -> "EvalResult":
        runtime_ns = max(1, int(runtime_ns))
        return cls(gflops=flops / runtime_ns, runtime_ns=runtime_ns, flops=flops, backend=backend)


class PeakEstimate(BaseModel):
    """Reward normaliser for one backend."""

    gflops_peak: float = Field(gt=0)
    method: str
    backend: BackendKind


class SearchConfig(BaseModel):
    """Parameters of one search run."""

    method: SearchMethod
    lookahead: int = Field(default=1, ge=1, description="Greedy lookahead depth")
    width: int = Field(default=2, ge=1, description="Beam width")
    depth: int = Field(default=10, ge=1, description="Maximum number of steps")
    budget_s: float = Field(default=60.0, gt=0, description="Wall-clock budget in seconds")
    backend: BackendKind = BackendKind.COSTMODEL
    seed: int = 0
    max_samples: Optional[int] = Field(default=None, ge=1, description="Random search sample cap")


class TraceEntry(BaseModel):
    """Best-so-far value at a point of a search."""

    step: int
    best_gflops: float
    time_s: float


class SearchResult(BaseModel):
    """Outcome of tuning one benchmark with one method."""

    method: str
    benchmark: str
    backend: BackendKind = BackendKind.COSTMODEL
    best_actions: List[Action] = Field(default_factory=list)
    best_gflops: float
    initial_gflops: float
    best_key: str
    nodes_expanded: int = 0
    tree_nodes: int = 0
    evals: int = 0
    cache_hits: int = 0
    wall_time_s: float = 0.0
    per_step_trace: List[TraceEntry] = Field(default_factory=list)

    @field_validator("best_actions", mode="before")
    @classmethod
    def _parse_actions(cls, value: Any) -> Any:
        if isinstance(value, (list, tuple)):
            return [Action.from_label(a) if isinstance(a, str) else a for a in value]
        return value

    @field_serializer("best_actions")
    def _serialize_actions(self, actions: List[Action]) -> List[str]:
        return [a.label for a in actions]

    @property
    def speedup(self) -> float:
        return self.best_gflops / self.initial_gflops


@dataclass
class Transition:
    """One environment step (S, A, R, S')."""

    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    done: bool
    info: Dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "obs": self.obs.tolist(),
                "action": Action(self.action).label,
                "reward": self.reward,
                "next_obs": self.next_obs.tolist(),
                "done": self.done,
                "info": self.info,
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "Transition":
        data = json.loads(line)
        action = data["action"]
        return cls(
            obs=np.asarray(data["obs"], dtype=np.int64),
            action=int(Action.from_label(action)) if isinstance(action, str) else int(action),
            reward=float(data["reward"]),
            next_obs=np.asarray(data["next_obs"], dtype=np.int64),
            done=bool(data["done"]),
            info=dict(data.get("info", {})),
        )


@dataclass
class EnvState:
    """Mutable state of one environment episode."""

    ir: LoopIR
    peak: PeakEstimate
    last_gflops: float
    step_index: int = 0
    done: bool = False
    backend: BackendKind = BackendKind.COSTMODEL
    history: Deque[Tuple[str, int]] = field(default_factory=lambda: deque(maxlen=4))


class Dataset(BaseModel):
    """Benchmark list with a train/test partition."""

    benchmarks: List[ContractionSpec]
    train: List[int] = Field(default_factory=list)
    test: List[int] = Field(default_factory=list)
    seed: Optional[int] = None

    @model_validator(mode="after")
    def _check_partition(self) -> "Dataset":
        members = self.train + self.test
        if len(set(members)) != len(members):
            raise ValueError("train and test splits overlap")
        if members and sorted(members) != list(range(len(self.benchmarks))):
            raise ValueError("train and test splits do not partition the benchmarks")
        return self

    def split(self, name: str) -> List[ContractionSpec]:
        """Benchmarks of a split; an unsplit dataset returns everything for any split."""
        if name == "all" or (name in ("train", "test") and not self.train and not self.test):
            return list(self.benchmarks)
        if name == "train":
            return [self.benchmarks[i] for i in self.train]
        if name == "test":
            return [self.benchmarks[i] for i in self.test]
        raise DatasetError(f"Unknown split: {name} (choose train, test or all)")


class ResultRecord(BaseModel):
    """One (benchmark, method) result as stored in a results directory."""

    benchmark: str
    spec: str
    method: str
    backend: BackendKind
    gflops: float
    initial_gflops: float
    wall_time_s: float
    actions: List[str] = Field(default_factory=list)
    evals: int = 0
    cache_hits: int = 0
    nodes_expanded: int = 0

    @classmethod
    def from_search(cls, spec: ContractionSpec, method: str, result: SearchResult) -> "ResultRecord":
        return cls(
            benchmark=spec.name,
            spec=spec.to_dsl(),
            method=method,
            backend=result.backend,
            gflops=result.best_gflops,
            initial_gflops=result.initial_gflops,
            wall_time_s=result.wall_time_s,
            actions=[a.label for a in result.best_actions],
            evals=result.evals,
            cache_hits=result.cache_hits,
            nodes_expanded=result.nodes_expanded,
        )


class MethodOutcome(BaseModel):
    """Per-benchmark entry of a run report."""

    gflops: float
    wall_time_s: float
    actions: List[str] = Field(default_factory=list)


class RunReport(BaseModel):
    """Aggregated comparison of tuning methods."""

    methods: List[str]
    benchmarks: List[str]
    baseline: Optional[str] = None
    per_benchmark: Dict[str, Dict[str, MethodOutcome]] = Field(default_factory=dict)
    normalized: Dict[str, Dict[str, float]] = Field(default_factory=dict)
    profiles: Dict[str, List[Tuple[float, float]]] = Field(default_factory=dict)
    speedups: Dict[str, Dict[str, float]] = Field(default_factory=dict)
    speedup_summary: Dict[str, Dict[str, float]] = Field(default_factory=dict)


class TrainMetrics(BaseModel):
    """One row of the training metrics CSV."""

    iteration: int
    episode_reward_mean: float
    loss: float
    epsilon: float
