"""Episodic schedule-tuning environment with peak-normalised GFLOPS rewards."""

import logging
import time
from typing import Any, Dict, Iterable, List, Optional, Protocol, Sequence, Tuple

import gymnasium as gym
import numpy as np
from gymnasium import spaces

from .backend_manager import BackendManager
from .contraction import canonical_key, describe, lower
from .exceptions import EpisodeDoneError
from .features import MAX_LOOPS, OBSERVATION_SIZE, encode
from .models import Action, ContractionSpec, EnvState, HistogramWeighting, SearchResult, TraceEntry, Transition
from .transforms import apply, legal_actions, oscillation_detected
from .utils import read_jsonl, write_jsonl


logger = logging.getLogger(__name__)

EPISODE_LEN = 10
N_ACTIONS = len(Action)


class QFunction(Protocol):
    """Anything that scores the actions of an observation."""

    def q_values(self, observation: np.ndarray) -> np.ndarray:
        ...


def masked_argmax(q_values: np.ndarray, mask: np.ndarray) -> int:
    """Highest-valued legal action; ties go to the lowest id."""
    masked = np.where(mask, q_values, -np.inf)
    return int(np.argmax(masked))


class ScheduleEnv(gym.Env):
    """Applies schedule actions to a benchmark and rewards GFLOPS gains.

    Cursor-only and rejected actions cost a step but no evaluation and earn 0.
    An episode ends after ``episode_length`` steps or when the cursor starts
    oscillating over an unchanged structure.
    """

    metadata = {"render_modes": ["ansi"]}

    def __init__(
        self,
        manager: BackendManager,
        benchmarks: Optional[Sequence[ContractionSpec]] = None,
        episode_length: int = EPISODE_LEN,
        weighting: HistogramWeighting = HistogramWeighting.REFERENCES,
    ):
        super().__init__()
        self.manager = manager
        self.benchmarks = list(benchmarks or [])
        self.episode_length = episode_length
        self.weighting = weighting
        self.observation_space = spaces.Box(low=0, high=np.iinfo(np.int32).max, shape=(OBSERVATION_SIZE,), dtype=np.int64)
        self.action_space = spaces.Discrete(N_ACTIONS)
        self.state: Optional[EnvState] = None

    def _observe(self) -> np.ndarray:
        assert self.state is not None
        return encode(self.state.ir, self.weighting)

    def reset_benchmark(self, benchmark: ContractionSpec) -> np.ndarray:
        """Start an episode from the untiled schedule of a benchmark."""
        peak = self.manager.peak
        ir = lower(benchmark)
        gflops = self.manager.evaluate(ir).gflops
        self.state = EnvState(ir=ir, peak=peak, last_gflops=gflops, backend=self.manager.kind)
        self.state.history.append((canonical_key(ir), ir.cursor))
        return self._observe()

    def legal_action_mask(self) -> np.ndarray:
        assert self.state is not None
        mask = np.zeros(N_ACTIONS, dtype=bool)
        for action in legal_actions(self.state.ir, max_loops=MAX_LOOPS):
            mask[int(action)] = True
        return mask

    def transition(self, action: int) -> Transition:
        """Apply one action and return (S, A, R, S')."""
        state = self.state
        if state is None:
            raise EpisodeDoneError("environment has not been reset")
        if state.done:
            raise EpisodeDoneError("episode is done; call reset first")
        action = Action(int(action))
        observation = self._observe()

        if action.split_factor and len(state.ir.loops) >= MAX_LOOPS:
            outcome_ir, changed, applied = state.ir, False, False
        else:
            outcome = apply(state.ir, action)
            outcome_ir, changed, applied = outcome.next, outcome.changed, outcome.applied

        reward = 0.0
        if changed:
            gflops = self.manager.evaluate(outcome_ir).gflops
            reward = (gflops - state.last_gflops) / state.peak.gflops_peak
            state.last_gflops = gflops

        state.ir = outcome_ir
        state.step_index += 1
        key = canonical_key(outcome_ir)
        state.history.append((key, outcome_ir.cursor))
        state.done = state.step_index >= self.episode_length or oscillation_detected(state.history)

        next_observation = self._observe()
        info: Dict[str, Any] = {
            "applied": applied,
            "changed": changed,
            "gflops": state.last_gflops,
            "key": key,
            "next_legal": [int(a) for a in np.flatnonzero(self.legal_action_mask())],
        }
        return Transition(observation, int(action), reward, next_observation, state.done, info)

    def reset(self, *, seed: Optional[int] = None, options: Optional[Dict[str, Any]] = None) -> Tuple[np.ndarray, Dict[str, Any]]:
        super().reset(seed=seed)
        benchmark = (options or {}).get("benchmark")
        if benchmark is None:
            if not self.benchmarks:
                raise ValueError("no benchmark given and the environment has no benchmark list")
            benchmark = self.benchmarks[int(self.np_random.integers(len(self.benchmarks)))]
        observation = self.reset_benchmark(benchmark)
        return observation, {"action_mask": self.legal_action_mask(), "gflops": self.state.last_gflops}

    def step(self, action: int) -> Tuple[np.ndarray, float, bool, bool, Dict[str, Any]]:
        transition = self.transition(action)
        assert self.state is not None
        truncated = transition.done and self.state.step_index >= self.episode_length
        terminated = transition.done and not truncated
        info = dict(transition.info, action_mask=self.legal_action_mask())
        return transition.next_obs, transition.reward, terminated, truncated, info

    def render(self) -> str:
        if self.state is None:
            return ""
        return "\n".join(describe(self.state.ir))


def rollout_policy(
    policy: QFunction,
    benchmark: ContractionSpec,
    manager: BackendManager,
    episode_length: int = EPISODE_LEN,
    weighting: HistogramWeighting = HistogramWeighting.REFERENCES,
) -> SearchResult:
    """Greedy policy episode; returns the best state visited."""
    started = time.monotonic()
    hits_before, misses_before = manager.cache.hits, manager.cache.misses
    env = ScheduleEnv(manager, episode_length=episode_length, weighting=weighting)
    observation = env.reset_benchmark(benchmark)
    assert env.state is not None
    initial = env.state.last_gflops
    best_gflops, best_actions, best_key = initial, [], canonical_key(env.state.ir)
    path: List[Action] = []
    trace = [TraceEntry(step=0, best_gflops=best_gflops, time_s=0.0)]

    while not env.state.done:
        action = masked_argmax(policy.q_values(observation), env.legal_action_mask())
        transition = env.transition(action)
        path.append(Action(action))
        if transition.info["gflops"] > best_gflops:
            best_gflops, best_actions, best_key = transition.info["gflops"], list(path), transition.info["key"]
        trace.append(TraceEntry(step=len(path), best_gflops=best_gflops, time_s=time.monotonic() - started))
        observation = transition.next_obs

    result = SearchResult(
        method="policy",
        benchmark=benchmark.name,
        backend=manager.kind,
        best_actions=best_actions,
        best_gflops=best_gflops,
        initial_gflops=initial,
        best_key=best_key,
        nodes_expanded=len(path) + 1,
        tree_nodes=len(path) + 1,
        evals=manager.cache.misses - misses_before,
        cache_hits=manager.cache.hits - hits_before,
        wall_time_s=time.monotonic() - started,
        per_step_trace=trace,
    )
    logger.info(f"policy on {benchmark.name}: {best_gflops:.4f} GFLOPS after {len(path)} steps, {result.evals} evals")
    return result


def write_transitions(path: str, transitions: Iterable[Transition]) -> int:
    """Dump transitions as JSON lines."""
    return write_jsonl(path, (t.to_json() for t in transitions))


def read_transitions(path: str) -> List[Transition]:
    return [Transition.from_json(line) for line in read_jsonl(path)]
