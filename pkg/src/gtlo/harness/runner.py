"""Run orchestration: environment and learner construction, evaluation, artifacts."""

from __future__ import annotations

import csv
import logging
import math
import os
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gtlo.core import ConfigError, pareto_filter
from gtlo.envs import ChainMomdp, DeepSeaTreasure, DstConfig, ForceProfileSurrogate, SurrogateConfig, load_layout
from gtlo.learners import GTLO, GLinear, OuterLoopGTLO, save_checkpoint
from gtlo.metrics import chain_policy_returns, dst_pareto_oracle, evaluation_phase, surrogate_pareto_oracle
from gtlo.harness.config import RunConfig

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("run_id", "seed", "step", "hypervolume", "precision", "recall", "f1", "n_solutions")
MATCH_TOL = {"surrogate": 1e-6}
DEFAULT_REFS = {"dst": (0.0, -25.0), "surrogate": (-0.1, -0.1), "chain": (0.0, -10.0)}


def fmt(value) -> str:
    """CSV cell: floats with 17 significant digits, everything else via ``str``."""
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def output_root(cfg: RunConfig) -> Path:
    return Path(os.environ.get("MORL_OUT") or cfg.output_dir)


def run_name(cfg: RunConfig) -> str:
    return cfg.run_id or f"{cfg.env}-{cfg.method}-s{cfg.seed}"


# -- construction -------------------------------------------------------------


def make_env(cfg: RunConfig):
    if cfg.env == "dst":
        return DeepSeaTreasure(load_layout(cfg.env_layout) if cfg.env_layout else DstConfig())
    if cfg.env == "surrogate":
        sc = SurrogateConfig(observation_accuracy=cfg.surrogate_reading_accuracy)
        return ForceProfileSurrogate(sc, random_state=cfg.seed)
    if cfg.env == "chain":
        return ChainMomdp()
    raise ConfigError(f"env: unknown environment {cfg.env!r}")


def env_fronts(env) -> dict:
    """Context id -> true Pareto front, from the exact oracles."""
    if isinstance(env, DeepSeaTreasure):
        return {0: dst_pareto_oracle(env.config)}
    if isinstance(env, ForceProfileSurrogate):
        ids, _ = env.contexts()
        return {int(c): surrogate_pareto_oracle(env.config, int(c)) for c in ids}
    if isinstance(env, ChainMomdp):
        return {0: pareto_filter(chain_policy_returns(env.transitions).values())}
    raise ConfigError(f"no oracle for {type(env).__name__}")


def outer_loop_midpoints(front) -> list[float]:
    """Thresholds halfway between consecutive first-objective values, starting from 0."""
    values = sorted({0.0, *(float(p[0]) for p in front)})
    return [(a + b) / 2 for a, b in zip(values, values[1:])]


def _learner_kwargs(cfg: RunConfig) -> dict:
    return dict(
        encoding=cfg.encoding,
        gamma=cfg.gamma,
        learning_rate=None if cfg.learning_rate <= 0 else cfg.learning_rate,
        batch_size=cfg.batch_size,
        batches_per_step=cfg.batches_per_step,
        target_update=cfg.target_update,
        warmup=cfg.warmup,
        epsilon_start=cfg.epsilon_start,
        epsilon_end=cfg.epsilon_end,
        exploration_fraction=cfg.exploration_fraction,
        total_steps=cfg.total_steps,
        eval_period=cfg.eval_period,
        trunk=tuple(cfg.trunk),
        optimizer=cfg.optimizer,
        max_grad_norm=cfg.max_grad_norm,
        q_init=cfg.q_init[0] if len(cfg.q_init) == 1 else tuple(cfg.q_init),
        bootstrap_truncated=cfg.bootstrap_truncated,
        random_state=cfg.seed,
    )


def make_estimator(cfg: RunConfig, env=None):
    kw = _learner_kwargs(cfg)
    grid = (cfg.preference_lo, cfg.preference_hi, cfg.preference_count)
    heads = (tuple(cfg.head0), tuple(cfg.head1))
    if cfg.method in ("gtlo", "gtlo-tabular"):
        backend = "network" if cfg.method == "gtlo" else "tabular"
        return GTLO(backend=backend, preference_grid=grid, heads=heads, **kw)
    if cfg.method in ("glinear", "glinear-tabular"):
        backend = "network" if cfg.method == "glinear" else "tabular"
        return GLinear(backend=backend, weight_grid=grid, **kw)
    if cfg.method == "outer-loop-gtlo":
        prefs = list(cfg.outer_preferences)
        if not prefs:
            env = env if env is not None else make_env(cfg)
            prefs = outer_loop_midpoints(env_fronts(env)[0])
        inner = GTLO(backend=cfg.outer_backend, preference_grid=grid, heads=heads, **kw)
        return OuterLoopGTLO(estimator=inner, preferences=[[p] for p in prefs],
                             per_preference_steps=cfg.per_preference_steps, eval_period=cfg.eval_period,
                             random_state=cfg.seed)
    raise ConfigError(f"method: unknown method {cfg.method!r}")


def eval_preferences(estimator):
    if isinstance(estimator, OuterLoopGTLO):
        return estimator.preferences_list()
    return estimator.preferences()


# -- training -----------------------------------------------------------------


@dataclass
class RunRecord:
    config_hash: str
    seed: int
    wall_clock: float = 0.0
    rows: list = field(default_factory=list)
    solutions: object = None
    checkpoint_path: str = ""
    output_dir: str = ""
    estimator: object = None


def train(cfg: RunConfig, write: bool = True) -> RunRecord:
    """Train one configured run and (optionally) write its artifacts."""
    env = make_env(cfg)
    fronts = env_fronts(env)
    ref = tuple(cfg.ref) if cfg.ref else DEFAULT_REFS[cfg.env]
    eval_env = make_env(cfg)
    tol = MATCH_TOL.get(cfg.env, 1e-9)
    estimator = make_estimator(cfg, env)
    record = RunRecord(config_hash=cfg.config_hash(), seed=cfg.seed)
    name = run_name(cfg)
    out = output_root(cfg) / name
    if write:
        out.mkdir(parents=True, exist_ok=True)
        cfg.dump(out / "config.resolved.toml")
        record.output_dir = str(out)
    last = {}

    def hook(step, est):
        sols, row = evaluation_phase(est, eval_env, eval_preferences(est), ref, fronts=fronts, tol=tol)
        last["solutions"], last["step"] = sols, step
        if write and cfg.solutions_every_eval:
            _write_solutions(out / f"solutions_{step}.csv", sols)
        return {"run_id": name, "seed": cfg.seed, "step": step, **row}

    start = time.perf_counter()
    estimator.fit(env, hook)
    steps_done = estimator.n_steps_
    if not last or last["step"] != steps_done:
        # make sure the final policy is always evaluated
        estimator.eval_log_.append(hook(steps_done, estimator))
    record.wall_clock = time.perf_counter() - start
    record.rows = estimator.eval_log_
    record.solutions = last["solutions"]
    if write:
        write_csv(out / "eval_metrics.csv", METRIC_COLUMNS, ([r[c] for c in METRIC_COLUMNS] for r in record.rows))
        _write_solutions(out / f"solutions_{last['step']}.csv", record.solutions)
        if cfg.checkpoint:
            if isinstance(estimator, OuterLoopGTLO):
                (out / "checkpoints").mkdir(exist_ok=True)
                for k, learner in enumerate(estimator.learners_):
                    save_checkpoint(out / "checkpoints" / f"learner_{k:02d}.npz", learner, record.config_hash)
                record.checkpoint_path = str(out / "checkpoints")
            else:
                record.checkpoint_path = str(save_checkpoint(out / "checkpoint.npz", estimator, record.config_hash))
    log.info("run %s finished in %.1fs", name, record.wall_clock)
    record.estimator = estimator
    return record


def _write_solutions(path, solutions) -> None:
    n_obj = len(next(iter(solutions)).ret) if len(solutions) else 2
    header = ("preference", "context", *(f"ret_{i}" for i in range(n_obj)))
    write_csv(path, header, solutions.rows())


# -- comparison ---------------------------------------------------------------


def read_metrics(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["seed"], r["step"], r["n_solutions"] = int(r["seed"]), int(r["step"]), int(r["n_solutions"])
        for k in ("hypervolume", "precision", "recall", "f1"):
            r[k] = float(r[k])
    return rows


def steps_to_full_front(rows, threshold: float = 1.0) -> float:
    """First evaluated step whose recall reaches ``threshold``; ``inf`` if never."""
    for r in sorted(rows, key=lambda r: r["step"]):
        if r["recall"] >= threshold - 1e-12:
            return r["step"]
    return math.inf


def _method_of(run_dir: Path) -> str:
    snap = run_dir / "config.resolved.toml"
    if snap.is_file():
        from gtlo.harness.config import load_config

        return load_config(snap).method
    return run_dir.name


def compare(run_dirs) -> tuple[list[dict], list[tuple]]:
    """Per-method summary of final metrics and a long-format table of every eval row."""
    per_method: dict[str, list[list[dict]]] = {}
    long_rows = []
    for d in map(Path, run_dirs):
        path = d / "eval_metrics.csv"
        if not path.is_file():
            log.warning("skipping %s: no eval_metrics.csv", d)
            continue
        rows = read_metrics(path)
        if not rows:
            log.warning("skipping %s: empty eval_metrics.csv", d)
            continue
        method = _method_of(d)
        per_method.setdefault(method, []).append(rows)
        for r in rows:
            for metric in ("hypervolume", "precision", "recall", "f1", "n_solutions"):
                long_rows.append((method, r["seed"], r["step"], metric, r[metric]))
    summary = []
    for method, runs in per_method.items():
        entry = {"method": method, "runs": len(runs)}
        finals = [max(rows, key=lambda r: r["step"]) for rows in runs]
        for metric in ("hypervolume", "precision", "recall", "f1"):
            vals = [f[metric] for f in finals]
            entry[f"{metric}_mean"] = statistics.fmean(vals)
            entry[f"{metric}_std"] = statistics.stdev(vals) if len(vals) > 1 else 0.0
        firsts = [steps_to_full_front(rows) for rows in runs]
        entry["steps_to_full_front_median"] = statistics.median(firsts)
        summary.append(entry)
    return summary, long_rows
