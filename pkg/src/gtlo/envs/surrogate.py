"""Stochastic five-step force-profile environment with a hidden context.

A stand-in for an expensive press-control simulation. Each episode draws a
hidden friction bin from a beta(1.75, 5) distribution discretized into ten
equal bins. The agent picks one of seven force levels per step; after five
steps it receives a two-objective reward computed from the total force:

* quality rises quadratically up to a context-dependent ideal total force and
  drops linearly past it,
* material saving falls linearly with the total force.

Because quality is convex in the total force below the ideal, every
context's front is non-convex: only its two ends lie on the convex hull.
From step 1 on, the state shows a noisy reading of the friction bin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from sklearn.utils import check_random_state

from gtlo.core import ConfigError, ContractViolation, MomdpEnv, RewardVector


@dataclass(frozen=True)
class SurrogateConfig:
    episode_length: int = 5
    action_levels: int = 7
    context_bins: int = 10
    beta_a: float = 1.75
    beta_b: float = 5.0
    ideal_base: float = 0.65
    ideal_slope: float = 0.035
    overshoot_penalty: float = 6.0
    observation_accuracy: float = 0.8

    def __post_init__(self):
        if self.episode_length < 1 or self.action_levels < 2 or self.context_bins < 1:
            raise ConfigError("surrogate dimensions must be positive")
        top = self.ideal_base + self.ideal_slope * (self.context_bins - 1)
        if not (0 < self.ideal_base <= top <= 1):
            raise ConfigError("ideal force fractions must lie in (0, 1]")
        if not 0 <= self.observation_accuracy <= 1:
            raise ConfigError("observation_accuracy must lie in [0, 1]")

    @property
    def max_force(self) -> int:
        return self.episode_length * (self.action_levels - 1)

    def context_probabilities(self) -> np.ndarray:
        edges = np.linspace(0.0, 1.0, self.context_bins + 1)
        return np.diff(stats.beta.cdf(edges, self.beta_a, self.beta_b))

    def ideal_fraction(self, context: int) -> float:
        return self.ideal_base + self.ideal_slope * context

    def terminal_reward(self, total_force: int, context: int) -> tuple[float, float]:
        u = total_force / self.max_force
        ideal = self.ideal_fraction(context)
        if u <= ideal:
            quality = (u / ideal) ** 2
        else:
            quality = max(0.0, 1.0 - self.overshoot_penalty * (u - ideal))
        return quality, 1.0 - u


@dataclass(frozen=True)
class SurrogateState:
    history: tuple[int, ...]
    observation: int | None
    done: bool = False

    @property
    def step_index(self) -> int:
        return len(self.history)

    @property
    def total_force(self) -> int:
        return sum(self.history)


class ForceProfileSurrogate(MomdpEnv):
    """The agent sees step index, total force so far and, from step 1 on, the
    noisy friction reading. Reward depends on the history only through its sum,
    so ``state_id`` aggregates histories by (step, total force, reading)."""

    objective_count = 2
    encodings = ("one-hot", "coordinate")
    stochastic = True

    def __init__(self, config: SurrogateConfig | None = None, random_state=None):
        self.config = config or SurrogateConfig()
        cfg = self.config
        self.action_count = cfg.action_levels
        self.max_steps = cfg.episode_length
        self.rng = check_random_state(random_state)
        self._probs = cfg.context_probabilities()
        # per-step id offsets: step 0 has a single state
        sizes = [1] + [
            (k * (cfg.action_levels - 1) + 1) * cfg.context_bins for k in range(1, cfg.episode_length)
        ]
        self._offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.n_states = int(self._offsets[-1])
        self.context = 0
        self.state = SurrogateState((), None)

    def contexts(self):
        return np.arange(self.config.context_bins), self._probs.copy()

    def reset(self, context: int | None = None) -> SurrogateState:
        cfg = self.config
        if context is None:
            context = int(self.rng.choice(cfg.context_bins, p=self._probs))
        elif not 0 <= context < cfg.context_bins:
            raise ContractViolation(f"context {context} out of range")
        self.context = int(context)
        self._reading = self._observe(self.context)
        self.state = SurrogateState((), None)
        return self.state

    def _observe(self, context: int) -> int:
        cfg = self.config
        if self.rng.random_sample() < cfg.observation_accuracy:
            return context
        shift = -1 if self.rng.random_sample() < 0.5 else 1
        return int(np.clip(context + shift, 0, cfg.context_bins - 1))

    def step(self, action: int):
        cfg = self.config
        if self.state.done:
            raise ContractViolation("step called on a terminal state")
        if not 0 <= action < cfg.action_levels:
            raise ContractViolation(f"invalid action {action}")
        history = self.state.history + (int(action),)
        done = len(history) == cfg.episode_length
        self.state = SurrogateState(history, self._reading, done)
        if done:
            reward = RewardVector(cfg.terminal_reward(sum(history), self.context))
        else:
            reward = RewardVector((0.0, 0.0))
        return self.state, reward, done

    def state_id(self, state: SurrogateState) -> int:
        k = state.step_index
        if k == 0:
            return 0
        if k >= self.config.episode_length:
            raise ContractViolation("terminal surrogate states have no id")
        width = k * (self.config.action_levels - 1) + 1
        return int(self._offsets[k] + state.observation * width + state.total_force)

    def encode(self, state: SurrogateState, mode: str) -> np.ndarray:
        cfg = self.config
        if mode == "one-hot":
            out = np.zeros(self.n_states)
            out[self.state_id(state)] = 1.0
            return out
        if mode == "coordinate":
            reading = -1.0 if state.observation is None else state.observation / max(cfg.context_bins - 1, 1)
            return np.array([state.step_index / cfg.episode_length, state.total_force / cfg.max_force, reading])
        raise ConfigError(f"unknown state encoding {mode!r}")

    def encoding_size(self, mode: str) -> int:
        sizes = {"one-hot": self.n_states, "coordinate": 3}
        if mode not in sizes:
            raise ConfigError(f"unknown state encoding {mode!r}")
        return sizes[mode]
