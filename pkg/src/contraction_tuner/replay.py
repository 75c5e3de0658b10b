"""Prioritized experience replay over a sum tree."""

import logging
import threading
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .models import Transition


logger = logging.getLogger(__name__)


class SumTree:
    """Binary tree whose leaves hold priorities and whose nodes hold subtree sums.

    Leaves live at ``tree[capacity - 1:]``; node ``i`` has children ``2i+1`` and
    ``2i+2``.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.tree = np.zeros(2 * capacity - 1, dtype=np.float64)

    @property
    def total(self) -> float:
        return float(self.tree[0])

    def leaf(self, data_index: int) -> float:
        return float(self.tree[data_index + self.capacity - 1])

    @property
    def leaves(self) -> np.ndarray:
        return self.tree[self.capacity - 1 :]

    def update(self, data_index: int, value: float) -> None:
        tree_index = data_index + self.capacity - 1
        change = value - self.tree[tree_index]
        self.tree[tree_index] = value
        while tree_index != 0:
            tree_index = (tree_index - 1) // 2
            self.tree[tree_index] += change

    def find(self, value: float) -> int:
        """Data index of the leaf whose cumulative range contains value."""
        node = 0
        while True:
            left = 2 * node + 1
            if left >= len(self.tree):
                break
            if value < self.tree[left]:
                node = left
            else:
                value -= self.tree[left]
                node = left + 1
        return min(node - (self.capacity - 1), self.capacity - 1)


@dataclass
class ReplaySample:
    """Batch drawn from the buffer."""

    indices: np.ndarray
    transitions: List[Transition]
    weights: np.ndarray
    probabilities: np.ndarray


class PrioritizedReplay:
    """Ring buffer sampling entry i with probability p_i^alpha / sum p^alpha.

    New entries get the largest priority seen so far. ``push`` may be called
    from several actor threads; ``sample`` and ``update_priorities`` belong to
    the single learner.
    """

    def __init__(self, capacity: int, alpha: float = 0.6, beta: float = 0.4, seed: Optional[int] = None):
        self.capacity = capacity
        self.alpha = alpha
        self.beta = beta
        self.tree = SumTree(capacity)
        self.entries: List[Optional[Transition]] = [None] * capacity
        self.next_index = 0
        self.size = 0
        self.max_priority = 1.0
        self.rng = np.random.default_rng(seed)
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return self.size

    def push(self, transition: Transition, priority: Optional[float] = None) -> int:
        """Store a transition, overwriting the oldest when full."""
        with self._lock:
            priority = self.max_priority if priority is None else float(priority)
            if priority <= 0:
                raise ValueError(f"priority must be positive, got {priority}")
            self.max_priority = max(self.max_priority, priority)
            index = self.next_index
            self.entries[index] = transition
            self.tree.update(index, priority**self.alpha)
            self.next_index = (index + 1) % self.capacity
            self.size = min(self.size + 1, self.capacity)
            return index

    def priority(self, index: int) -> float:
        """Stored priority (before the alpha exponent)."""
        return self.tree.leaf(index) ** (1.0 / self.alpha) if self.alpha > 0 else 1.0

    def probabilities(self) -> np.ndarray:
        """Sampling probability of every occupied slot."""
        leaves = self.tree.leaves[: self.size]
        return leaves / leaves.sum()

    def sample(self, batch_size: int, beta: Optional[float] = None) -> ReplaySample:
        """Stratified sample; importance weights are normalised so the largest is 1."""
        with self._lock:
            if self.size == 0:
                raise ValueError("cannot sample from an empty replay buffer")
            beta = self.beta if beta is None else beta
            total = self.tree.total
            segment = total / batch_size
            indices = np.empty(batch_size, dtype=np.int64)
            for i in range(batch_size):
                value = self.rng.uniform(segment * i, segment * (i + 1))
                index = self.tree.find(min(value, np.nextafter(total, 0)))
                # Float drift can land on an unused leaf; fall back to the last stored entry.
                if index >= self.size:
                    index = self.size - 1
                indices[i] = index

            leaves = self.tree.leaves
            probabilities = leaves[indices] / total
            min_probability = leaves[: self.size].min() / total
            weights = np.power(probabilities / min_probability, -beta)
            transitions = [self.entries[int(i)] for i in indices]
        return ReplaySample(indices=indices, transitions=transitions, weights=weights, probabilities=probabilities)  # type: ignore[arg-type]

    def update_priorities(self, indices: np.ndarray, priorities: np.ndarray) -> None:
        with self._lock:
            for index, priority in zip(indices, priorities):
                priority = float(priority)
                if not priority > 0:
                    raise ValueError(f"priority must be positive, got {priority}")
                self.max_priority = max(self.max_priority, priority)
                self.tree.update(int(index), priority**self.alpha)
