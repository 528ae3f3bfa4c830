"""Shared multi-objective MDP types and Pareto utilities."""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np


class ContractViolation(ValueError):
    """Raised when an operation is called outside its preconditions."""


class ConfigError(ValueError):
    """Raised for invalid environment or run configuration."""


class TrainingDivergence(RuntimeError):
    """Raised when a loss or value estimate becomes non-finite."""


ABSORBING = None
"""Marker stored as ``next_state`` of terminal transitions."""


@dataclass(frozen=True)
class RewardVector:
    """Immutable per-objective reward or return."""

    components: tuple[float, ...]

    def __init__(self, components: Iterable[float]):
        comps = tuple(float(c) for c in components)
        if len(comps) < 2:
            raise ContractViolation(f"reward vectors need at least 2 objectives, got {len(comps)}")
        if not all(math.isfinite(c) for c in comps):
            raise ContractViolation(f"reward components must be finite: {comps}")
        object.__setattr__(self, "components", comps)

    def __len__(self) -> int:
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def __getitem__(self, i):
        return self.components[i]

    def __add__(self, other: "RewardVector") -> "RewardVector":
        _check_arity(self, other)
        return RewardVector(a + b for a, b in zip(self, other))

    def __repr__(self) -> str:
        return "RewardVector(" + ", ".join(f"{c:g}" for c in self.components) + ")"

    def to_array(self) -> np.ndarray:
        return np.array(self.components, dtype=np.float64)


@dataclass(frozen=True)
class ThresholdPreference:
    """Minimum-return thresholds; the last objective is unconstrained (+inf)."""

    thresholds: tuple[float, ...]

    def __init__(self, thresholds: Iterable[float]):
        ts = tuple(float(t) for t in thresholds)
        if len(ts) < 2:
            raise ContractViolation("a threshold preference needs at least 2 objectives")
        if ts[-1] != math.inf:
            raise ContractViolation(f"last threshold must be +inf, got {ts[-1]}")
        if not all(math.isfinite(t) for t in ts[:-1]):
            raise ContractViolation(f"constrained thresholds must be finite: {ts[:-1]}")
        object.__setattr__(self, "thresholds", ts)

    @classmethod
    def from_constraints(cls, *constraints: float) -> "ThresholdPreference":
        """Build from the finite thresholds only, appending the +inf entry."""
        return cls((*constraints, math.inf))

    @property
    def constraints(self) -> tuple[float, ...]:
        return self.thresholds[:-1]

    def __len__(self) -> int:
        return len(self.thresholds)

    def to_array(self) -> np.ndarray:
        return np.array(self.thresholds, dtype=np.float64)


@dataclass(frozen=True)
class LinearWeight:
    """Non-negative scalarization weights summing to one."""

    weights: tuple[float, ...]

    def __init__(self, weights: Iterable[float]):
        ws = tuple(float(w) for w in weights)
        if len(ws) < 2:
            raise ContractViolation("a weight vector needs at least 2 objectives")
        if any(w < 0 or not math.isfinite(w) for w in ws):
            raise ContractViolation(f"weights must be finite and non-negative: {ws}")
        if abs(math.fsum(ws) - 1.0) > 1e-12:
            raise ContractViolation(f"weights must sum to 1, got {math.fsum(ws)!r}")
        object.__setattr__(self, "weights", ws)

    def __len__(self) -> int:
        return len(self.weights)

    def to_array(self) -> np.ndarray:
        return np.array(self.weights, dtype=np.float64)


Preference = ThresholdPreference | LinearWeight


@dataclass(frozen=True)
class Experience:
    state: Any
    action: int
    next_state: Any
    reward: RewardVector
    terminal: bool
    preference: Preference

    def __post_init__(self):
        if self.action < 0:
            raise ContractViolation(f"negative action index {self.action}")
        if self.terminal and self.next_state is not ABSORBING:
            raise ContractViolation("terminal experiences must carry the absorbing marker")


def _check_arity(a, b):
    if len(a) != len(b):
        raise ContractViolation(f"arity mismatch: {len(a)} vs {len(b)}")


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """True iff ``a`` Pareto-dominates ``b`` (maximization)."""
    _check_arity(a, b)
    return all(x >= y for x, y in zip(a, b)) and any(x > y for x, y in zip(a, b))


def pareto_filter(points: Iterable[Sequence[float]]) -> list[RewardVector]:
    """Return the non-dominated points, duplicates collapsed, sorted by objective 0."""
    unique = sorted({tuple(float(c) for c in p) for p in points})
    if not unique:
        return []
    arity = len(unique[0])
    if any(len(p) != arity for p in unique):
        raise ContractViolation("pareto_filter requires uniform arity")
    kept = [p for p in unique if not any(dominates(q, p) for q in unique if q != p)]
    return [RewardVector(p) for p in kept]


def scalarize_linear(r: Sequence[float], w: LinearWeight | Sequence[float]) -> float:
    weights = w.weights if isinstance(w, LinearWeight) else tuple(w)
    _check_arity(r, weights)
    return math.fsum(ri * wi for ri, wi in zip(r, weights))


class MomdpEnv(abc.ABC):
    """Finite-horizon multi-objective environment with an internal current state.

    Subclasses expose ``n_states`` and ``state_id`` for tabular learners and
    ``encode`` for approximate ones. Thresholded objectives (all but the last)
    must be zero on non-terminal transitions.
    """

    action_count: int
    objective_count: int
    max_steps: int
    n_states: int
    encodings: tuple[str, ...] = ()
    stochastic: bool = False
    # set by step(): the episode ended on the step limit, not in an absorbing state
    truncated: bool = False

    @abc.abstractmethod
    def reset(self, context: int | None = None):
        """Start a new episode and return the initial state."""

    @abc.abstractmethod
    def step(self, action: int):
        """Advance the current state; return ``(state, RewardVector, terminal)``."""

    @abc.abstractmethod
    def state_id(self, state) -> int:
        ...

    def encode(self, state, mode: str) -> np.ndarray:
        raise ConfigError(f"{type(self).__name__} supports no state encodings")

    def encoding_size(self, mode: str) -> int:
        return int(self.encode(self.reset(), mode).size)

    def contexts(self) -> tuple[np.ndarray, np.ndarray]:
        """Forceable context ids and their probabilities; deterministic envs have one."""
        return np.array([0]), np.array([1.0])
