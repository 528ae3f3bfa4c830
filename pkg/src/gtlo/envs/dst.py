"""Deep-sea treasure grid world.

The submarine starts in the upper-left cell. Each column holds one treasure;
cells beneath a treasure are seabed and cannot be entered. Every move costs
-1 on the second objective, and reaching a treasure ends the episode with its
value on the first objective. Episodes also end after ``max_steps`` moves with
no treasure reward.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from gtlo.core import ConfigError, ContractViolation, MomdpEnv, RewardVector

LEFT, RIGHT, UP, DOWN = range(4)
_MOVES = {LEFT: (-1, 0), RIGHT: (1, 0), UP: (0, -1), DOWN: (0, 1)}

WATER, SEABED, TREASURE, SUBMARINE = 0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0

DEFAULT_VALUES = (1.0, 2.0, 3.0, 5.0, 8.0, 16.0, 24.0, 50.0, 74.0, 124.0)
DEFAULT_DEPTHS = (1, 2, 3, 4, 4, 4, 7, 7, 9, 10)


@dataclass(frozen=True)
class DstConfig:
    treasure_values: tuple[float, ...] = DEFAULT_VALUES
    treasure_depths: tuple[int, ...] = DEFAULT_DEPTHS
    rows: int = 11
    max_steps: int = 50
    timeout_treasure_reward: float = 0.0

    def __post_init__(self):
        values, depths = tuple(map(float, self.treasure_values)), tuple(map(int, self.treasure_depths))
        object.__setattr__(self, "treasure_values", values)
        object.__setattr__(self, "treasure_depths", depths)
        if not values or len(values) != len(depths):
            raise ConfigError("need exactly one treasure value and depth per column")
        if any(v <= 0 for v in values):
            raise ConfigError("treasure values must be positive")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ConfigError("treasure values must increase strictly left to right")
        if any(b < a for a, b in zip(depths, depths[1:])):
            raise ConfigError("treasure depths must be non-decreasing left to right")
        if min(depths) < 1 or max(depths) >= self.rows:
            raise ConfigError(f"treasure depths must lie in [1, {self.rows - 1}]")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be positive")

    @property
    def columns(self) -> int:
        return len(self.treasure_values)

    def cell(self, col: int, row: int) -> float:
        depth = self.treasure_depths[col]
        if row < depth:
            return WATER
        return TREASURE if row == depth else SEABED


@dataclass(frozen=True)
class DstState:
    col: int
    row: int
    steps: int = 0
    done: bool = False


def load_layout(path: str | Path) -> DstConfig:
    """Parse a plain-text layout file.

    Lines of the form ``key: value`` form the header (``values`` lists the
    treasure table, ``max_steps`` is optional). The remaining non-empty lines
    are grid rows of whitespace-separated tokens: ``.`` water, ``#`` seabed,
    ``T<k>`` the k-th entry of the value table, or a bare number giving the
    treasure value directly.
    """
    header: dict[str, str] = {}
    grid: list[list[str]] = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        m = re.match(r"^([a-z_]+)\s*:\s*(.*)$", line)
        if m:
            header[m.group(1)] = m.group(2)
        else:
            grid.append(line.split())
    if not grid:
        raise ConfigError(f"{path}: layout has no grid rows")
    widths = {len(r) for r in grid}
    if len(widths) != 1:
        raise ConfigError(f"{path}: grid rows have unequal widths {sorted(widths)}")
    table = [float(v) for v in re.split(r"[,\s]+", header.get("values", "").strip()) if v]
    values, depths = [], []
    for col in range(widths.pop()):
        found = []
        for row, tokens in enumerate(grid):
            tok = tokens[col]
            if tok in (".", "#"):
                continue
            if tok.startswith("T"):
                k = int(tok[1:])
                if k >= len(table):
                    raise ConfigError(f"{path}: {tok} not in value table")
                found.append((row, table[k]))
            else:
                try:
                    found.append((row, float(tok)))
                except ValueError:
                    raise ConfigError(f"{path}: unknown token {tok!r}") from None
        if len(found) != 1:
            raise ConfigError(f"{path}: column {col} must hold exactly one treasure")
        depths.append(found[0][0])
        values.append(found[0][1])
    kwargs = {"rows": len(grid)}
    if "max_steps" in header:
        kwargs["max_steps"] = int(header["max_steps"])
    return DstConfig(tuple(values), tuple(depths), **kwargs)


class DeepSeaTreasure(MomdpEnv):
    action_count = 4
    objective_count = 2
    encodings = ("one-hot", "coordinate", "grid-image")

    def __init__(self, config: DstConfig | None = None):
        self.config = config or DstConfig()
        self.max_steps = self.config.max_steps
        self.n_states = self.config.rows * self.config.columns
        self.state = self.reset()

    def reset(self, context: int | None = None) -> DstState:
        self.state = DstState(0, 0)
        self.truncated = False
        return self.state

    def transition(self, state: DstState, action: int) -> tuple[DstState, RewardVector, bool]:
        """Pure transition function; does not touch ``self.state``."""
        cfg = self.config
        if state.done:
            raise ContractViolation("step called on a terminal state")
        if action not in _MOVES:
            raise ContractViolation(f"invalid action {action}")
        dc, dr = _MOVES[action]
        col, row = state.col + dc, state.row + dr
        if not (0 <= col < cfg.columns and 0 <= row < cfg.rows) or cfg.cell(col, row) == SEABED:
            col, row = state.col, state.row
        steps = state.steps + 1
        treasure = cfg.cell(col, row) == TREASURE
        done = treasure or steps >= cfg.max_steps
        value = cfg.treasure_values[col] if treasure else cfg.timeout_treasure_reward if done else 0.0
        return DstState(col, row, steps, done), RewardVector((value, -1.0)), done

    def step(self, action: int):
        self.state, reward, done = self.transition(self.state, action)
        self.truncated = done and self.config.cell(self.state.col, self.state.row) != TREASURE
        return self.state, reward, done

    def state_id(self, state: DstState) -> int:
        return state.row * self.config.columns + state.col

    def encode(self, state: DstState, mode: str) -> np.ndarray:
        cfg = self.config
        if mode == "one-hot":
            out = np.zeros(self.n_states)
            out[self.state_id(state)] = 1.0
            return out
        if mode == "coordinate":
            return np.array([state.col / max(cfg.columns - 1, 1), state.row / max(cfg.rows - 1, 1)])
        if mode == "grid-image":
            return self.image(state)
        raise ConfigError(f"unknown state encoding {mode!r}")

    def image(self, state: DstState) -> np.ndarray:
        cfg = self.config
        img = np.array([[cfg.cell(c, r) for c in range(cfg.columns)] for r in range(cfg.rows)])
        img[state.row, state.col] = SUBMARINE
        return img

    def encoding_size(self, mode: str) -> int:
        sizes = {"one-hot": self.n_states, "coordinate": 2, "grid-image": self.n_states}
        if mode not in sizes:
            raise ConfigError(f"unknown state encoding {mode!r}")
        return sizes[mode]
