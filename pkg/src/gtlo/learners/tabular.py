from __future__ import annotations

import numpy as np

from gtlo.core import ContractViolation


def grid_index(grid: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Map preference values onto exact grid bins; off-grid values are rejected."""
    values = np.asarray(values, dtype=np.float64)
    idx = np.clip(np.searchsorted(grid, values), 0, len(grid) - 1)
    lower = np.clip(idx - 1, 0, len(grid) - 1)
    idx = np.where(np.abs(grid[lower] - values) < np.abs(grid[idx] - values), lower, idx)
    tol = 1e-9 * np.maximum(1.0, np.abs(values))
    if np.any(np.abs(grid[idx] - values) > tol):
        bad = values[np.abs(grid[idx] - values) > tol]
        raise ContractViolation(f"preference values off the tabular grid: {bad[:5]}")
    return idx


class TabularGeneralizedQ:
    """Vector Q-table with one table per objective head.

    Head ``i`` is indexed by ``(state, bins of thresholds 0..i-1, action)``, so
    head 0 is shared across all preferences. ``init`` is a scalar or one
    initial value per objective.
    """

    def __init__(self, n_states, n_actions, grids, init=0.0):
        self.grids = [np.asarray(g, dtype=np.float64) for g in grids]
        self.n_states, self.n_actions = n_states, n_actions
        self.n_objectives = len(self.grids) + 1
        init = np.broadcast_to(np.asarray(init, dtype=np.float64), (self.n_objectives,))
        self.tables, self.visits = [], []
        for i in range(self.n_objectives):
            n_bins = int(np.prod([len(g) for g in self.grids[:i]], dtype=np.int64))
            self.tables.append(np.full((n_states, n_bins, n_actions), init[i]))
            self.visits.append(np.zeros((n_states, n_bins, n_actions), dtype=np.int64))
        sizes = [len(g) for g in self.grids]
        self._divisors = [int(np.prod(sizes[i:], dtype=np.int64)) for i in range(self.n_objectives)]

    def head_bins(self, t: np.ndarray) -> list[np.ndarray]:
        """Flat bin index per head for thresholds ``t`` of shape ``(n, n_objectives)``."""
        n = t.shape[0]
        per_obj = [grid_index(g, t[:, j]) for j, g in enumerate(self.grids)]
        bins, flat = [np.zeros(n, dtype=np.int64)], np.zeros(n, dtype=np.int64)
        for j, g in enumerate(self.grids[:-1] if self.n_objectives > 1 else []):
            flat = flat * len(g) + per_obj[j]
            bins.append(flat.copy())
        if self.n_objectives > 1:
            bins.append(flat * len(self.grids[-1]) + per_obj[-1])
        return bins[: self.n_objectives]

    def full_bin(self, t: np.ndarray) -> np.ndarray:
        """Mixed-radix bin over all constrained thresholds (the last head's bin)."""
        return self.head_bins(t)[-1]

    def bins_from_full(self, full: np.ndarray) -> list[np.ndarray]:
        return [full // d for d in self._divisors]

    def query(self, states: np.ndarray, t: np.ndarray, bins=None) -> np.ndarray:
        states = np.asarray(states, dtype=np.int64)
        bins = self.head_bins(t) if bins is None else bins
        out = np.empty((len(states), self.n_actions, self.n_objectives))
        for i, table in enumerate(self.tables):
            out[:, :, i] = table[states, bins[i]]
        return out

    __call__ = query

    @property
    def params(self):
        return list(self.tables)

    def set_params(self, tables):
        self.tables = [np.array(t, dtype=np.float64) for t in tables]

    def architecture(self) -> dict:
        return {"kind": "gtlo-tabular", "shapes": [list(t.shape) for t in self.tables]}


class TabularScalarQ:
    """Scalar Q-table indexed by ``(state, weight bin, action)``."""

    def __init__(self, n_states, n_actions, grid, init=0.0):
        self.grid = np.asarray(grid, dtype=np.float64)
        self.n_states, self.n_actions = n_states, n_actions
        self.table = np.full((n_states, len(self.grid), n_actions), float(init))
        self.visits = np.zeros(self.table.shape, dtype=np.int64)

    def bins(self, w: np.ndarray) -> np.ndarray:
        return grid_index(self.grid, w[:, 0])

    def query(self, states, w, bins=None):
        bins = self.bins(w) if bins is None else bins
        return self.table[np.asarray(states, dtype=np.int64), bins]

    __call__ = query

    @property
    def params(self):
        return [self.table]

    def set_params(self, tables):
        self.table = np.array(tables[0], dtype=np.float64)

    def architecture(self) -> dict:
        return {"kind": "glinear-tabular", "shapes": [list(self.table.shape)]}
