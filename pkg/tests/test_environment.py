"""Tests for the environment module."""

import time

import numpy as np
import pytest

from contraction_tuner.backend_manager import BackendManager
from contraction_tuner.config import BackendConfig, Config
from contraction_tuner.contraction import lower, parse_spec
from contraction_tuner.environment import (
    EPISODE_LEN,
    N_ACTIONS,
    ScheduleEnv,
    masked_argmax,
    read_transitions,
    rollout_policy,
    write_transitions,
)
from contraction_tuner.exceptions import EpisodeDoneError
from contraction_tuner.features import CURSOR_COL, MAX_LOOPS, observation_slots
from contraction_tuner.models import Action, BackendKind, LoopDesc, Nest
from contraction_tuner.policy import MLPPolicy
from contraction_tuner.transforms import apply_sequence


class FixedPolicy:
    """Scores actions from a fixed preference vector."""

    def __init__(self, preferences):
        self.preferences = np.asarray(preferences, dtype=float)
        self.calls = 0

    def q_values(self, observation):
        self.calls += 1
        return self.preferences


def test_reset_observation(matmul64, manager):
    """Test reset lowers the benchmark and evaluates it once."""
    env = ScheduleEnv(manager)
    observation = env.reset_benchmark(matmul64)
    slots = observation_slots(observation)
    assert slots[0, CURSOR_COL] == 1
    assert slots[:, CURSOR_COL].sum() == 1
    assert env.state.step_index == 0
    assert env.state.last_gflops > 0
    assert manager.evals == 1


def test_reset_is_deterministic(matmul64):
    """Test two resets of one benchmark agree."""
    env = ScheduleEnv(BackendManager(Config()))
    first = env.reset_benchmark(matmul64)
    gflops = env.state.last_gflops
    np.testing.assert_array_equal(env.reset_benchmark(matmul64), first)
    assert env.state.last_gflops == gflops


def test_cursor_moves_cost_no_evaluation(matmul64, manager):
    """Test rejected and cursor-only actions earn zero without evaluating."""
    env = ScheduleEnv(manager)
    env.reset_benchmark(matmul64)
    for action in (Action.UP, Action.DOWN, Action.UP, Action.SPLIT_64):
        transition = env.transition(action)
        assert transition.reward == 0.0
        assert not transition.info["changed"]
    assert manager.evals == 1
    assert env.state.step_index == 4


def test_split_reward_formula(matmul64, manager):
    """Test the reward is the GFLOPS change over the peak."""
    env = ScheduleEnv(manager)
    env.reset_benchmark(matmul64)
    before = env.state.last_gflops
    transition = env.transition(Action.SPLIT_2)
    after = manager.evaluate(apply_sequence(lower(matmul64), [Action.SPLIT_2])).gflops
    assert transition.info["changed"] and transition.info["applied"]
    assert transition.reward == pytest.approx((after - before) / manager.peak.gflops_peak)
    assert manager.evals == 2


def test_episode_ends_after_ten_steps(matmul64, manager):
    """Test the tenth action ends the episode and an eleventh raises."""
    env = ScheduleEnv(manager)
    env.reset_benchmark(matmul64)
    actions = [Action.SPLIT_2, Action.DOWN, Action.SPLIT_2, Action.DOWN, Action.SWAP_DOWN] * 2
    transitions = [env.transition(a) for a in actions]
    assert [t.done for t in transitions] == [False] * (EPISODE_LEN - 1) + [True]
    with pytest.raises(EpisodeDoneError):
        env.transition(Action.DOWN)


def test_unreset_environment_raises(manager):
    """Test stepping before reset raises."""
    with pytest.raises(EpisodeDoneError):
        ScheduleEnv(manager).transition(Action.DOWN)


def test_oscillation_ends_episode(small_spec, manager):
    """Test alternating cursor moves over one structure end the episode."""
    env = ScheduleEnv(manager)
    env.reset_benchmark(small_spec)
    dones = [env.transition(a).done for a in (Action.DOWN, Action.UP, Action.DOWN)]
    assert dones == [False, False, True]
    assert env.state.step_index == 3


def test_random_steps_reward_invariants(random_spec, manager):
    """Test 1000 random steps over random benchmarks keep every reward invariant."""
    env = ScheduleEnv(manager)
    rng = np.random.default_rng(0)
    peak = manager.peak.gflops_peak
    env.reset_benchmark(random_spec(rng))
    initial, total, episodes = env.state.last_gflops, 0.0, 0
    for _ in range(1000):
        misses = manager.cache.misses
        transition = env.transition(int(rng.integers(N_ACTIONS)))
        assert -1.0 <= transition.reward <= 1.0
        if not transition.info["changed"]:
            assert manager.cache.misses == misses
            assert transition.reward == 0.0
        total += transition.reward
        if env.state.done:
            assert total == pytest.approx((env.state.last_gflops - initial) / peak, abs=1e-12)
            env.reset_benchmark(random_spec(rng))
            initial, total, episodes = env.state.last_gflops, 0.0, episodes + 1
    assert total == pytest.approx((env.state.last_gflops - initial) / peak, abs=1e-12)
    assert episodes >= 100


def test_splits_masked_at_capacity(manager):
    """Test a full nest offers no splits and treats them as no-ops."""
    spec = parse_spec("C[m,n] += A[m,k] * B[k,n] | m=64 n=64 k=64")
    env = ScheduleEnv(manager)
    env.reset_benchmark(spec)
    ir = env.state.ir
    padding = tuple(LoopDesc("k", 1, 0, Nest.COMPUTE) for _ in range(MAX_LOOPS - len(ir.loops)))
    env.state.ir = ir.with_loops(padding + ir.loops, len(padding))
    mask = env.legal_action_mask()
    assert not mask[int(Action.SPLIT_2) :].any()
    transition = env.transition(Action.SPLIT_2)
    assert not transition.info["applied"]
    assert transition.reward == 0.0


def test_transition_info_lists_next_legal(matmul64, manager):
    """Test transitions carry the legal actions of the next state."""
    env = ScheduleEnv(manager)
    env.reset_benchmark(matmul64)
    transition = env.transition(Action.DOWN)
    assert transition.info["next_legal"] == [int(a) for a in np.flatnonzero(env.legal_action_mask())]
    assert int(Action.UP) in transition.info["next_legal"]


def test_gym_api(matmul64, manager):
    """Test the gymnasium reset/step interface."""
    env = ScheduleEnv(manager, benchmarks=[matmul64])
    observation, info = env.reset(seed=1)
    assert env.observation_space.contains(observation)
    assert info["action_mask"].shape == (N_ACTIONS,)
    terminated = truncated = False
    steps = 0
    while not (terminated or truncated):
        observation, reward, terminated, truncated, info = env.step(int(Action.SPLIT_2) if steps % 2 == 0 else int(Action.DOWN))
        steps += 1
    assert truncated and not terminated
    assert steps == EPISODE_LEN
    assert "for m in" in env.render()


def test_masked_argmax():
    """Test the best legal action wins and ties go to the lowest id."""
    q = np.array([5.0, 1.0, 3.0, 3.0])
    assert masked_argmax(q, np.array([False, True, True, True])) == 2
    assert masked_argmax(q, np.array([True, False, False, False])) == 0


def test_rollout_policy(matmul64):
    """Test a rollout returns the best visited state within eleven evaluations."""
    manager = BackendManager(Config())
    preferences = np.zeros(N_ACTIONS)
    preferences[int(Action.SPLIT_2)] = 2.0
    preferences[int(Action.DOWN)] = 1.0
    policy = FixedPolicy(preferences)
    result = rollout_policy(policy, matmul64, manager)
    assert policy.calls == EPISODE_LEN
    assert result.method == "policy"
    assert result.evals <= EPISODE_LEN + 1
    assert result.best_gflops >= result.initial_gflops
    replayed = manager.evaluate(apply_sequence(lower(matmul64), result.best_actions)).gflops
    assert replayed == result.best_gflops
    assert result.nodes_expanded == EPISODE_LEN + 1


def test_transitions_jsonl_round_trip(tmp_path, matmul64, manager):
    """Test transitions survive a JSON-lines dump."""
    env = ScheduleEnv(manager)
    env.reset_benchmark(matmul64)
    transitions = [env.transition(a) for a in (Action.SPLIT_4, Action.DOWN, Action.SWAP_DOWN)]
    path = tmp_path / "transitions.jsonl"
    assert write_transitions(str(path), transitions) == 3
    restored = read_transitions(str(path))
    assert [t.action for t in restored] == [t.action for t in transitions]
    np.testing.assert_array_equal(restored[2].next_obs, transitions[2].next_obs)
    assert restored[0].reward == pytest.approx(transitions[0].reward)


@pytest.mark.hardware
def test_timed_rollout_is_fast(matmul64):
    """Test a policy rollout on the timed backend finishes within five seconds."""
    manager = BackendManager(Config(backend=BackendConfig(backend=BackendKind.TIMED)))
    assert manager.peak.gflops_peak > 0
    policy = MLPPolicy.for_observations([16], seed=0)
    start = time.perf_counter()
    result = rollout_policy(policy, matmul64, manager)
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    assert result.evals <= EPISODE_LEN + 1
