"""Prioritized experience replay with FIFO eviction.

Transitions are sampled with probability proportional to priority^alpha
via a binary sum tree; importance weights are (N * P(i))^-beta normalized
by the maximum weight over the buffer (tracked with a parallel min tree).
New transitions enter at the running maximum priority so they are seen at
least once.
"""

from __future__ import annotations

import numpy as np


class _SegmentTree:
    """Fixed-capacity sum + min tree over leaf values."""

    def __init__(self, capacity: int):
        self.capacity = 1
        while self.capacity < capacity:
            self.capacity *= 2
        self.sum = np.zeros(2 * self.capacity)
        self.min = np.full(2 * self.capacity, np.inf)

    def set_batch(self, idx: np.ndarray, values: np.ndarray) -> None:
        pos = idx + self.capacity
        self.sum[pos] = values
        self.min[pos] = values
        pos = np.unique(pos // 2)
        while pos[0] >= 1:
            left = 2 * pos
            self.sum[pos] = self.sum[left] + self.sum[left + 1]
            self.min[pos] = np.minimum(self.min[left], self.min[left + 1])
            if pos[0] == 1:
                break
            pos = np.unique(pos // 2)

    @property
    def total(self) -> float:
        return float(self.sum[1])

    @property
    def minimum(self) -> float:
        return float(self.min[1])

    def find_prefix(self, mass: np.ndarray) -> np.ndarray:
        """Leaves i such that cumulative sum up to i first exceeds mass."""
        pos = np.ones(len(mass), dtype=np.int64)
        mass = mass.copy()
        while pos[0] < self.capacity:
            left = 2 * pos
            go_right = mass > self.sum[left]
            mass = np.where(go_right, mass - self.sum[left], mass)
            pos = np.where(go_right, left + 1, left)
        return pos - self.capacity


class ReplayBuffer:
    """Ring buffer of transitions with proportional prioritization."""

    def __init__(self, capacity: int = 400_000, obs_width: int = 11,
                 alpha: float = 0.7, beta: float = 1e-3,
                 priority_floor: float = 1e-6):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.alpha = alpha
        self.beta = beta
        self.priority_floor = priority_floor
        self.obs = np.empty((capacity, obs_width))
        self.next_obs = np.empty((capacity, obs_width))
        self.actions = np.empty(capacity, dtype=np.int64)
        self.rewards = np.empty(capacity)
        self.terminal = np.empty(capacity, dtype=bool)
        self._tree = _SegmentTree(capacity)
        self._pos = 0
        self._size = 0
        self.max_priority = 1.0

    def __len__(self) -> int:
        return self._size

    def add(self, obs, action, reward, next_obs, terminal) -> None:
        """Insert one transition at the running maximum priority."""
        i = self._pos
        self.obs[i] = obs
        self.next_obs[i] = next_obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.terminal[i] = terminal
        self._tree.set_batch(np.array([i]),
                             np.array([self.max_priority ** self.alpha]))
        self._pos = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Draw a prioritized batch.

        Returns ``(indices, batch, weights)`` where ``batch`` feeds
        :func:`mergesim.nn.td_loss_grad` directly.
        """
        if self._size < batch_size:
            raise ValueError(
                f"buffer holds {self._size} transitions, need {batch_size}")
        total = self._tree.total
        mass = rng.uniform(0.0, total, size=batch_size)
        idx = self._tree.find_prefix(mass)
        # guard the pathological edge where mass lands on an empty leaf
        idx = np.minimum(idx, self._size - 1)
        probs = self._tree.sum[idx + self._tree.capacity] / total
        weights = (self._size * probs) ** (-self.beta)
        max_w = (self._size * (self._tree.minimum / total)) ** (-self.beta)
        weights = weights / max_w
        batch = (self.obs[idx], self.actions[idx], self.rewards[idx],
                 self.next_obs[idx], self.terminal[idx])
        return idx, batch, weights

    def update_priorities(self, idx: np.ndarray,
                          priorities: np.ndarray) -> None:
        priorities = np.maximum(np.asarray(priorities, dtype=np.float64),
                                self.priority_floor)
        self.max_priority = max(self.max_priority, float(priorities.max()))
        self._tree.set_batch(np.asarray(idx, dtype=np.int64),
                             priorities ** self.alpha)

    def sampling_probabilities(self) -> np.ndarray:
        """Current P(i) over stored transitions (diagnostics and tests)."""
        leaves = self._tree.sum[self._tree.capacity:
                                self._tree.capacity + self._size]
        return leaves / self._tree.total
