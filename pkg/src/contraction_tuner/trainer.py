"""Deep Q-learning with prioritized replay over the schedule environment."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .backend_manager import BackendManager
from .config import TrainConfig
from .environment import EPISODE_LEN, N_ACTIONS, ScheduleEnv, QFunction, masked_argmax, read_transitions
from .exceptions import TrainingDivergedError
from .models import ContractionSpec, HistogramWeighting, TrainMetrics, Transition
from .policy import AdamOptimizer, MLPPolicy, normalize_observation, save_checkpoint
from .replay import PrioritizedReplay
from .utils import write_csv


logger = logging.getLogger(__name__)

PRIORITY_EPS = 1e-3
HUBER_DELTA = 1.0
METRICS_HEADER = ("iteration", "episode_reward_mean", "loss", "epsilon")


@dataclass
class TDBatch:
    """Network-ready arrays for one gradient step."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    next_masks: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)


@dataclass
class TDResult:
    loss: float
    gradients: List[np.ndarray]
    priorities: np.ndarray
    td_errors: np.ndarray


def _next_mask(transition: Transition) -> np.ndarray:
    mask = np.zeros(N_ACTIONS, dtype=bool)
    legal = transition.info.get("next_legal")
    if legal is None:
        mask[:] = True
    else:
        mask[list(legal)] = True
    return mask


def make_batch(
    transitions: Sequence[Transition], weights: Optional[np.ndarray] = None, dtype: np.dtype = np.float32
) -> TDBatch:
    """Stack transitions, normalising observations for the network."""
    n = len(transitions)
    return TDBatch(
        states=normalize_observation(np.stack([t.obs for t in transitions]), dtype),
        actions=np.array([t.action for t in transitions], dtype=np.int64),
        rewards=np.array([t.reward for t in transitions], dtype=np.float64),
        next_states=normalize_observation(np.stack([t.next_obs for t in transitions]), dtype),
        dones=np.array([t.done for t in transitions], dtype=bool),
        next_masks=np.stack([_next_mask(t) for t in transitions]),
        weights=np.ones(n, dtype=np.float64) if weights is None else np.asarray(weights, dtype=np.float64),
    )


def td_targets(target: MLPPolicy, batch: TDBatch, gamma: float) -> np.ndarray:
    """r + gamma * max over legal a' of Q_target(s', a'), with no bootstrap past the end."""
    next_q = target.forward(batch.next_states).astype(np.float64)
    masked = np.where(batch.next_masks, next_q, -np.inf)
    bootstrap = ~batch.dones & batch.next_masks.any(axis=1)
    best_next = np.where(bootstrap, masked.max(axis=1), 0.0)
    return batch.rewards + gamma * best_next


def td_update(policy: MLPPolicy, target: MLPPolicy, batch: TDBatch, gamma: float) -> TDResult:
    """Importance-weighted Huber loss on TD errors and its parameter gradients.

    Parameters are not modified.
    """
    n = len(batch)
    rows = np.arange(n)
    q, cache = policy.forward_cached(batch.states)
    targets = td_targets(target, batch, gamma)
    delta = q[rows, batch.actions].astype(np.float64) - targets
    magnitude = np.abs(delta)
    huber = np.where(magnitude <= HUBER_DELTA, 0.5 * delta**2, HUBER_DELTA * (magnitude - 0.5 * HUBER_DELTA))
    loss = float(np.mean(batch.weights * huber))

    dq = np.zeros(q.shape, dtype=np.float64)
    dq[rows, batch.actions] = batch.weights * np.clip(delta, -HUBER_DELTA, HUBER_DELTA) / n
    gradients = policy.backward(cache, dq.astype(policy.dtype))
    return TDResult(loss=loss, gradients=gradients, priorities=magnitude + PRIORITY_EPS, td_errors=delta)


def epsilon_at(iteration: int, cfg: TrainConfig) -> float:
    """Linear anneal from epsilon_start to epsilon_end over the decay window."""
    window = max(1, int(cfg.iterations * cfg.epsilon_decay_fraction))
    progress = min(1.0, iteration / window)
    return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * progress


def run_episode(
    env: ScheduleEnv,
    benchmark: ContractionSpec,
    policy: Optional[QFunction],
    epsilon: float,
    rng: np.random.Generator,
) -> Tuple[float, List[Transition]]:
    """One epsilon-greedy episode; policy None means uniform over legal actions."""
    observation = env.reset_benchmark(benchmark)
    transitions: List[Transition] = []
    total = 0.0
    while not env.state.done:  # type: ignore[union-attr]
        mask = env.legal_action_mask()
        legal = np.flatnonzero(mask)
        if policy is None or rng.random() < epsilon:
            action = int(legal[rng.integers(len(legal))]) if len(legal) else 0
        else:
            action = masked_argmax(policy.q_values(observation), mask)
        transition = env.transition(action)
        transitions.append(transition)
        total += transition.reward
        observation = transition.next_obs
    return total, transitions


def evaluate_policy_reward(
    policy: QFunction,
    benchmarks: Sequence[ContractionSpec],
    manager: BackendManager,
    episode_length: int = EPISODE_LEN,
    weighting: HistogramWeighting = HistogramWeighting.REFERENCES,
) -> float:
    """Mean episode reward of the greedy policy, one episode per benchmark."""
    env = ScheduleEnv(manager, episode_length=episode_length, weighting=weighting)
    rng = np.random.default_rng(0)
    rewards = [run_episode(env, b, policy, 0.0, rng)[0] for b in benchmarks]
    return float(np.mean(rewards))


def random_policy_reward(
    benchmarks: Sequence[ContractionSpec],
    manager: BackendManager,
    episodes: int = 1000,
    seed: int = 0,
    episode_length: int = EPISODE_LEN,
) -> float:
    """Mean episode reward of uniformly random legal actions on random benchmarks."""
    env = ScheduleEnv(manager, episode_length=episode_length)
    rng = np.random.default_rng(seed)
    rewards = []
    for _ in range(episodes):
        benchmark = benchmarks[int(rng.integers(len(benchmarks)))]
        rewards.append(run_episode(env, benchmark, None, 1.0, rng)[0])
    return float(np.mean(rewards))


def seed_replay_from_jsonl(replay: PrioritizedReplay, path: Union[str, Path]) -> int:
    """Push every transition of a JSON-lines dump; returns the count."""
    transitions = read_transitions(str(path))
    for transition in transitions:
        replay.push(transition)
    logger.info(f"Seeded replay with {len(transitions)} transitions from {path}")
    return len(transitions)


@dataclass
class TrainResult:
    policy: MLPPolicy
    metrics: List[TrainMetrics] = field(default_factory=list)
    best_reward: float = -math.inf
    stopped_early: bool = False
    updates: int = 0
    checkpoint_path: Optional[Path] = None
    best_checkpoint_path: Optional[Path] = None
    metrics_path: Optional[Path] = None


class DQNTrainer:
    """Single learner fed by several logical actors.

    Actors act on a snapshot of the online network taken at the start of each
    iteration. Under a thread-safe backend they run concurrently; their
    transitions are pushed in actor order so a fixed seed gives a fixed run.
    """

    def __init__(
        self,
        benchmarks: Sequence[ContractionSpec],
        cfg: TrainConfig,
        manager: BackendManager,
        out_dir: Optional[Union[str, Path]] = None,
        weighting: HistogramWeighting = HistogramWeighting.REFERENCES,
    ):
        if not benchmarks:
            raise ValueError("training needs at least one benchmark")
        self.benchmarks = list(benchmarks)
        self.cfg = cfg
        self.manager = manager
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.weighting = weighting

        self.policy = MLPPolicy.for_observations(cfg.hidden, seed=cfg.seed)
        self.target = self.policy.copy()
        self.optimizer = AdamOptimizer(self.policy.parameters(), lr=cfg.learning_rate)
        self.replay = PrioritizedReplay(cfg.buffer_capacity, alpha=cfg.alpha, beta=cfg.beta, seed=cfg.seed)
        seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.num_actors)
        self.actor_rngs = [np.random.default_rng(s) for s in seeds]
        self.envs = [
            ScheduleEnv(manager, episode_length=cfg.episode_length, weighting=weighting) for _ in range(cfg.num_actors)
        ]
        self.updates = 0
        # Measure the reward normaliser once, before actors share the manager.
        self.peak = manager.peak

    @property
    def learning_starts(self) -> int:
        return self.cfg.learning_starts if self.cfg.learning_starts is not None else self.cfg.batch_size

    def _act(self, actor: int, snapshot: MLPPolicy, epsilon: float) -> Tuple[float, List[Transition]]:
        rng = self.actor_rngs[actor]
        benchmark = self.benchmarks[int(rng.integers(len(self.benchmarks)))]
        return run_episode(self.envs[actor], benchmark, snapshot, epsilon, rng)

    def collect(self, epsilon: float) -> List[float]:
        """Run one episode per actor and push their transitions."""
        snapshot = self.policy.copy()
        actors = range(self.cfg.num_actors)
        if self.manager.backend.concurrent_safe and self.cfg.num_actors > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.num_actors) as pool:
                episodes = list(pool.map(lambda a: self._act(a, snapshot, epsilon), actors))
        else:
            episodes = [self._act(a, snapshot, epsilon) for a in actors]

        rewards = []
        for reward, transitions in episodes:
            rewards.append(reward)
            for transition in transitions:
                self.replay.push(transition)
        return rewards

    def learn(self) -> float:
        """One gradient step on a prioritized batch; returns the loss."""
        sample = self.replay.sample(self.cfg.batch_size)
        batch = make_batch(sample.transitions, sample.weights, dtype=self.policy.dtype)
        result = td_update(self.policy, self.target, batch, self.cfg.gamma)
        if not math.isfinite(result.loss):
            raise TrainingDivergedError(f"loss became {result.loss} after {self.updates} updates")
        self.optimizer.step(result.gradients)
        if not self.policy.is_finite():
            raise TrainingDivergedError(f"parameters became non-finite after {self.updates + 1} updates")
        self.replay.update_priorities(sample.indices, result.priorities)
        self.updates += 1
        if self.updates % self.cfg.target_sync == 0:
            self.target.set_parameters(self.policy.parameters())
            logger.debug(f"Target network synced at update {self.updates}")
        return result.loss

    def _save(self, name: str) -> Optional[Path]:
        if self.out_dir is None:
            return None
        return save_checkpoint(self.policy, self.out_dir / name)

    def train(self) -> TrainResult:
        cfg = self.cfg
        result = TrainResult(policy=self.policy)
        previous: Optional[float] = None
        flat_iterations = 0

        for iteration in range(cfg.iterations):
            epsilon = epsilon_at(iteration, cfg)
            rewards = self.collect(epsilon)
            reward_mean = float(np.mean(rewards))
            # Checkpoint the parameters that earned this reward, before updating them.
            if reward_mean > result.best_reward:
                result.best_reward = reward_mean
                result.best_checkpoint_path = self._save("best.ckpt")

            losses = []
            if len(self.replay) >= self.learning_starts:
                losses = [self.learn() for _ in range(cfg.updates_per_iteration)]
            metrics = TrainMetrics(
                iteration=iteration,
                episode_reward_mean=reward_mean,
                loss=float(np.mean(losses)) if losses else 0.0,
                epsilon=epsilon,
            )
            result.metrics.append(metrics)
            logger.info(
                f"iteration {iteration}: reward {metrics.episode_reward_mean:.4f} "
                f"loss {metrics.loss:.5f} epsilon {epsilon:.3f}"
            )

            if cfg.early_stop_patience:
                if previous is not None and abs(metrics.episode_reward_mean - previous) < cfg.early_stop_tolerance:
                    flat_iterations += 1
                else:
                    flat_iterations = 0
                previous = metrics.episode_reward_mean
                if flat_iterations >= cfg.early_stop_patience:
                    logger.info(f"Average reward converged; stopping after iteration {iteration}")
                    result.stopped_early = True
                    break

        result.updates = self.updates
        result.checkpoint_path = self._save("policy.ckpt")
        if result.best_checkpoint_path is None:
            result.best_checkpoint_path = self._save("best.ckpt")
        if self.out_dir is not None:
            result.metrics_path = write_csv(
                self.out_dir / "metrics.csv",
                METRICS_HEADER,
                ([m.iteration, m.episode_reward_mean, m.loss, m.epsilon] for m in result.metrics),
            )
        return result


def train_policy(
    benchmarks: Sequence[ContractionSpec],
    cfg: TrainConfig,
    manager: BackendManager,
    out_dir: Optional[Union[str, Path]] = None,
    weighting: HistogramWeighting = HistogramWeighting.REFERENCES,
) -> TrainResult:
    """Train a Q-network on the given benchmarks."""
    logger.info(f"Training on {len(benchmarks)} benchmarks for {cfg.iterations} iterations")
    return DQNTrainer(benchmarks, cfg, manager, out_dir, weighting).train()
