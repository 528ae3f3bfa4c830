"""A three-state, two-action deterministic chain with terminal treasures.

State 0 branches to state 1 (action 0) or state 2 (action 1); from states 1
and 2 each action ends the episode with a treasure. The four reachable
returns are mutually non-dominated.
"""

from __future__ import annotations

from gtlo.core import ContractViolation, MomdpEnv, RewardVector

# (state, action) -> (next state or None, reward)
CHAIN_TRANSITIONS = {
    (0, 0): (1, (0.0, -1.0)),
    (0, 1): (2, (0.0, -2.0)),
    (1, 0): (None, (1.0, -1.0)),
    (1, 1): (None, (3.0, -3.0)),
    (2, 0): (None, (2.0, -1.0)),
    (2, 1): (None, (4.0, -5.0)),
}


class ChainMomdp(MomdpEnv):
    action_count = 2
    objective_count = 2
    max_steps = 2
    n_states = 3
    encodings = ("one-hot",)

    def __init__(self, transitions=None):
        self.transitions = dict(transitions or CHAIN_TRANSITIONS)
        self.state = 0

    def reset(self, context=None):
        self.state = 0
        return self.state

    def step(self, action: int):
        if self.state is None:
            raise ContractViolation("step called on a terminal state")
        nxt, reward = self.transitions[(self.state, int(action))]
        self.state = nxt
        return nxt, RewardVector(reward), nxt is None

    def state_id(self, state) -> int:
        return int(state)

    def encode(self, state, mode):
        import numpy as np

        out = np.zeros(self.n_states)
        out[int(state)] = 1.0
        return out
