from gtlo.learners.agents import GTLO, GLinear, OuterLoopGTLO, grid_values, tabular_update
from gtlo.learners.checkpoint import load_checkpoint, save_checkpoint
from gtlo.learners.replay import ReplayBuffer

__all__ = ["GTLO", "GLinear", "OuterLoopGTLO", "ReplayBuffer", "grid_values", "load_checkpoint",
           "save_checkpoint", "tabular_update"]
