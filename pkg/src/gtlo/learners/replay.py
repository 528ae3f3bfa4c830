from __future__ import annotations

import numpy as np


class ReplayBuffer:
    """Unbounded column-store replay memory with uniform sampling.

    ``state`` and ``next_state`` are either integer ids (``state_dim=None``) or
    dense float vectors. Terminal rows store id ``-1`` or zeros as the
    absorbing marker. ``tag`` is a free integer column (tabular learners keep
    the preference's bin index there).
    """

    def __init__(self, n_objectives: int, pref_dim: int, state_dim: int | None = None, capacity: int = 1024):
        self.n_objectives = n_objectives
        self.pref_dim = pref_dim
        self.state_dim = state_dim
        self.size = 0
        self._alloc(capacity)

    def _alloc(self, capacity):
        shape = (capacity,) if self.state_dim is None else (capacity, self.state_dim)
        dtype = np.int64 if self.state_dim is None else np.float64
        self.state = np.zeros(shape, dtype=dtype)
        self.next_state = np.zeros(shape, dtype=dtype)
        self.action = np.zeros(capacity, dtype=np.int64)
        self.reward = np.zeros((capacity, self.n_objectives))
        self.terminal = np.zeros(capacity, dtype=bool)
        self.preference = np.zeros((capacity, self.pref_dim))
        self.tag = np.zeros(capacity, dtype=np.int64)

    def _grow(self):
        old = {k: getattr(self, k) for k in ("state", "next_state", "action", "reward", "terminal", "preference", "tag")}
        self._alloc(2 * len(self.action))
        for k, v in old.items():
            getattr(self, k)[: self.size] = v[: self.size]

    def __len__(self):
        return self.size

    def add(self, state, action, next_state, reward, terminal, preference, tag=0):
        if self.size == len(self.action):
            self._grow()
        i = self.size
        self.state[i] = state
        self.action[i] = action
        self.reward[i] = reward
        self.terminal[i] = terminal
        self.preference[i] = preference
        self.tag[i] = tag
        if terminal:
            self.next_state[i] = -1 if self.state_dim is None else 0.0
        else:
            self.next_state[i] = next_state
        self.size += 1

    def sample_indices(self, batch_size: int, rng: np.random.RandomState) -> np.ndarray:
        return rng.randint(0, self.size, size=batch_size)

    def batch(self, idx: np.ndarray) -> dict[str, np.ndarray]:
        return {
            "state": self.state[idx],
            "action": self.action[idx],
            "next_state": self.next_state[idx],
            "reward": self.reward[idx],
            "terminal": self.terminal[idx],
            "preference": self.preference[idx],
            "tag": self.tag[idx],
        }
