"""Flat, typed run configuration loaded from TOML with ``key=value`` overrides."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from gtlo.core import ConfigError

METHODS = ("gtlo", "gtlo-tabular", "glinear", "glinear-tabular", "outer-loop-gtlo")
ENVS = ("dst", "surrogate", "chain")
REQUIRED = ("method", "env")


@dataclass
class RunConfig:
    """Every knob of one training run.

    ``preference_lo/hi/count`` describe the threshold grid for the gTLO
    variants and the ``phi`` grid for gLinear. An empty ``ref`` picks the
    environment's default hypervolume reference point, and an empty
    ``outer_preferences`` derives the midpoints from the environment oracle.
    """

    method: str
    env: str
    seed: int = 0
    run_id: str = ""
    output_dir: str = "runs"
    env_layout: str = ""
    surrogate_reading_accuracy: float = 0.8
    total_steps: int = 250_000
    eval_period: int = 1000
    ref: list = field(default_factory=list)
    encoding: str = "one-hot"
    preference_lo: float = 0.5
    preference_hi: float = 100.0
    preference_count: int = 100
    outer_preferences: list = field(default_factory=list)
    per_preference_steps: int = 25_000
    outer_backend: str = "tabular"
    gamma: float = 1.0
    learning_rate: float = -1.0
    batch_size: int = 32
    batches_per_step: int = 8
    target_update: int = 5000
    warmup: int = 1000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    exploration_fraction: float = 0.2
    trunk: list = field(default_factory=lambda: [128, 64])
    head0: list = field(default_factory=lambda: [64])
    head1: list = field(default_factory=lambda: [64, 32])
    optimizer: str = "sgd"
    max_grad_norm: float = 10.0
    q_init: list = field(default_factory=lambda: [0.0])
    bootstrap_truncated: bool = True
    solutions_every_eval: bool = False
    checkpoint: bool = True

    def __post_init__(self):
        errors = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            kind = _kind(f)
            if kind is float and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
                setattr(self, f.name, value)
            if kind is bool:
                ok = isinstance(value, bool)
            elif kind is int:
                ok = isinstance(value, int) and not isinstance(value, bool)
            elif kind is list:
                ok = isinstance(value, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                                     for v in value)
            else:
                ok = isinstance(value, kind)
            if not ok:
                errors.append(f"{f.name}: expected {kind.__name__}, got {value!r}")
        if not errors:
            errors += self._check_values()
        if errors:
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))

    def _check_values(self):
        errors = []
        if self.method not in METHODS:
            errors.append(f"method: must be one of {', '.join(METHODS)}, got {self.method!r}")
        if self.env not in ENVS:
            errors.append(f"env: must be one of {', '.join(ENVS)}, got {self.env!r}")
        if self.outer_backend not in ("tabular", "network"):
            errors.append(f"outer_backend: must be 'tabular' or 'network', got {self.outer_backend!r}")
        for name in ("total_steps", "warmup", "eval_period"):
            if getattr(self, name) < 0:
                errors.append(f"{name}: must be >= 0")
        for name in ("preference_count", "batch_size", "batches_per_step", "target_update", "per_preference_steps"):
            if getattr(self, name) < 1:
                errors.append(f"{name}: must be >= 1")
        for name in ("epsilon_start", "epsilon_end", "surrogate_reading_accuracy"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                errors.append(f"{name}: must lie in [0, 1]")
        if self.eval_period and self.method != "outer-loop-gtlo" and self.total_steps % self.eval_period:
            errors.append("total_steps: must be a multiple of eval_period")
        if self.preference_hi < self.preference_lo:
            errors.append("preference_hi: must be >= preference_lo")
        if self.ref and len(self.ref) != 2:
            errors.append("ref: needs two coordinates")
        if self.env_layout and not Path(self.env_layout).is_file():
            errors.append(f"env_layout: file not found: {self.env_layout}")
        if any(w < 1 for w in [*self.trunk, *self.head0, *self.head1]):
            errors.append("trunk/head widths must be positive")
        return errors

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        """Digest of the canonical JSON form, ignoring where outputs go."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("run_id")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"), allow_nan=False)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def dump(self, path) -> None:
        Path(path).write_text(tomli_w.dumps(self.to_dict()), encoding="utf-8")


def _kind(f):
    t = f.type if isinstance(f.type, str) else f.type.__name__
    return {"str": str, "int": int, "float": float, "bool": bool, "list": list}[t]


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def parse_override(item: str) -> tuple[str, object]:
    """``key=value`` with a TOML-typed value; bare words fall back to strings."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = (s.strip() for s in item.split("=", 1))
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def build_config(values: dict) -> RunConfig:
    """Validate a flat mapping; all problems are reported together."""
    errors = [f"{k}: unknown key" for k in values if k not in _FIELDS]
    errors += [f"{k}: required key missing" for k in REQUIRED if k not in values]
    known = {k: v for k, v in values.items() if k in _FIELDS}
    if "q_init" in known and not isinstance(known["q_init"], list):
        known["q_init"] = [known["q_init"]]
    if not errors:
        return RunConfig(**known)
    # still run field validation so every problem shows up in one message
    known.update({k: "gtlo" if k == "method" else "dst" for k in REQUIRED if k not in known})
    try:
        RunConfig(**known)
    except ConfigError as exc:
        errors += str(exc).splitlines()[1:]
    raise ConfigError("invalid configuration:\n  " + "\n  ".join(e.strip() for e in errors))


def load_config(path=None, overrides=(), **extra) -> RunConfig:
    values = {}
    if path is not None:
        try:
            values = tomllib.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        nested = [k for k, v in values.items() if isinstance(v, dict)]
        if nested:
            raise ConfigError(f"config must be flat; found tables: {', '.join(nested)}")
    values.update({k: v for k, v in extra.items() if v is not None})
    for item in overrides:
        key, value = parse_override(item)
        values[key] = value
    return build_config(values)
