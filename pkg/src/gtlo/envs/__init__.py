"""Benchmark environments."""

from gtlo.envs.chain import ChainMomdp
from gtlo.envs.dst import DeepSeaTreasure, DstConfig, DstState, load_layout
from gtlo.envs.surrogate import ForceProfileSurrogate, SurrogateConfig, SurrogateState

__all__ = [
    "ChainMomdp",
    "DeepSeaTreasure",
    "DstConfig",
    "DstState",
    "ForceProfileSurrogate",
    "SurrogateConfig",
    "SurrogateState",
    "load_layout",
]
