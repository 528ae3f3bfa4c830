from gtlo.harness.config import RunConfig, load_config
from gtlo.harness.runner import compare, train

__all__ = ["RunConfig", "compare", "load_config", "train"]
