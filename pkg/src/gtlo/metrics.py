"""Offline multi-policy evaluation: hypervolume, coverage scores and Pareto oracles."""

from __future__ import annotations

import copy
import itertools
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from gtlo.core import ConfigError, ContractViolation, RewardVector, pareto_filter
from gtlo.envs.dst import SEABED, TREASURE, DstConfig
from gtlo.envs.surrogate import SurrogateConfig


def hypervolume_2d(points, ref) -> float:
    """Area dominated by ``points`` and bounded below by ``ref`` (maximization).

    Points that do not strictly dominate the reference corner contribute
    nothing.
    """
    ref = tuple(float(r) for r in ref)
    pts = [tuple(float(c) for c in p) for p in points]
    if len(ref) != 2 or any(len(p) != 2 for p in pts):
        raise ContractViolation("hypervolume_2d needs two-objective points")
    if not all(math.isfinite(c) for p in [*pts, ref] for c in p):
        raise ContractViolation("hypervolume inputs must be finite")
    effective = [p for p in pts if p[0] > ref[0] and p[1] > ref[1]]
    front = sorted(tuple(p) for p in pareto_filter(effective))
    area, prev_x = 0.0, ref[0]
    for x, y in front:
        area += (x - prev_x) * (y - ref[1])
        prev_x = x
    return area


def _key(p, tol):
    if tol == 0:
        return tuple(float(c) for c in p)
    return tuple(round(float(c) / tol) for c in p)


@dataclass(frozen=True)
class CoverageScores:
    precision: float
    recall: float
    f1: float
    empty: bool = False

    def __iter__(self):
        return iter((self.precision, self.recall, self.f1))


def coverage_scores(found, front, tol: float = 1e-9) -> CoverageScores:
    """Precision, recall and F1 of the distinct found returns against a known front.

    Returns are matched after rounding to a ``tol`` grid.
    """
    front_keys = {_key(p, tol) for p in front}
    if not front_keys:
        raise ContractViolation("coverage_scores needs a non-empty front")
    found_keys = {_key(p, tol) for p in found}
    if not found_keys:
        return CoverageScores(0.0, 0.0, 0.0, empty=True)
    hits = len(found_keys & front_keys)
    p, r = hits / len(found_keys), hits / len(front_keys)
    f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return CoverageScores(p, r, f1)


def dst_step_counts(cfg: DstConfig) -> list[int]:
    """Shortest-path step count from the start cell to each column's treasure (BFS)."""
    start = (0, 0)
    dist = {start: 0}
    queue = deque([start])
    while queue:
        col, row = queue.popleft()
        if cfg.cell(col, row) == TREASURE and (col, row) != start:
            continue
        for dc, dr in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nc, nr = col + dc, row + dr
            if 0 <= nc < cfg.columns and 0 <= nr < cfg.rows and cfg.cell(nc, nr) != SEABED and (nc, nr) not in dist:
                dist[(nc, nr)] = dist[(col, row)] + 1
                queue.append((nc, nr))
    steps = []
    for col, depth in enumerate(cfg.treasure_depths):
        if (col, depth) not in dist:
            raise ConfigError(f"treasure in column {col} is unreachable")
        steps.append(dist[(col, depth)])
    return steps


def dst_pareto_oracle(cfg: DstConfig | None = None) -> list[RewardVector]:
    cfg = cfg or DstConfig()
    candidates = [
        (v, -float(s)) for v, s in zip(cfg.treasure_values, dst_step_counts(cfg)) if s <= cfg.max_steps
    ]
    return pareto_filter(candidates)


def surrogate_returns(cfg: SurrogateConfig, context: int) -> list[tuple[float, float]]:
    """Terminal returns of every action sequence under a fixed context."""
    levels = range(cfg.action_levels)
    return [cfg.terminal_reward(sum(seq), context) for seq in itertools.product(levels, repeat=cfg.episode_length)]


def surrogate_pareto_oracle(cfg: SurrogateConfig | None = None, context: int = 0) -> list[RewardVector]:
    cfg = cfg or SurrogateConfig()
    if not 0 <= context < cfg.context_bins:
        raise ContractViolation(f"context {context} out of range")
    return pareto_filter(set(surrogate_returns(cfg, context)))


def chain_policy_returns(transitions, state: int = 0) -> dict[tuple[int, ...], tuple[float, ...]]:
    """Return from ``state`` of every deterministic policy of an explicit MOMDP.

    ``transitions`` maps ``(state, action) -> (next_state or None, reward)``.
    Policies are tuples of one action per state (sorted state ids); the MOMDP
    must be acyclic.
    """
    states = sorted({s for s, _ in transitions})
    actions = {s: sorted(a for s2, a in transitions if s2 == s) for s in states}
    out = {}
    for policy in itertools.product(*(actions[s] for s in states)):
        pick = dict(zip(states, policy))
        s, ret = state, None
        for _ in range(len(states) + 1):
            nxt, r = transitions[(s, pick[s])]
            ret = np.asarray(r, dtype=np.float64) if ret is None else ret + np.asarray(r)
            if nxt is None:
                break
            s = nxt
        else:
            raise ContractViolation("policy enumeration needs an acyclic MOMDP")
        out[policy] = tuple(float(v) for v in ret)
    return out


def brute_force_tlo_action(transitions, state: int, t) -> int:
    """First action of the best policy from ``state`` under thresholds ``t``.

    Best means: maximize the last objective among returns that strictly
    exceed every finite threshold; with no such return, compare
    lexicographically from objective 0. Ties go to the lexicographically
    smallest policy.
    """
    t = np.asarray(t, dtype=np.float64)
    returns = chain_policy_returns(transitions, state)
    states = sorted({s for s, _ in transitions})
    col = states.index(state)
    feasible = {p: r for p, r in returns.items() if all(r[j] > t[j] for j in range(len(t) - 1))}
    if feasible:
        best = max(sorted(feasible), key=lambda p: feasible[p][-1])
    else:
        best = max(sorted(returns), key=lambda p: returns[p])
    return best[col]


def upper_hull(points) -> list[tuple[float, float]]:
    """Vertices of the upper-right convex hull of a two-objective front."""
    pts = sorted({(float(a), float(b)) for a, b in points})
    hull: list[tuple[float, float]] = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            # drop the middle point unless it bulges outward (clockwise turn)
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def below_hull(point, front, eps: float = 1e-12) -> bool:
    """True iff ``point`` lies strictly below the hull of ``front`` and no hull
    vertex dominates it, i.e. inside a non-convex region of the front."""
    hull = upper_hull(front)
    x, y = float(point[0]), float(point[1])
    if any(hx >= x and hy >= y and (hx, hy) != (x, y) for hx, hy in hull):
        return False
    for (x1, y1), (x2, y2) in zip(hull, hull[1:]):
        if x1 <= x <= x2 and x2 > x1:
            return y < y1 + (y2 - y1) * (x - x1) / (x2 - x1) - eps
    return False


@dataclass(frozen=True)
class SolutionRecord:
    preference: tuple[float, ...]
    ret: RewardVector
    context: int = 0


@dataclass
class SolutionSet:
    records: list[SolutionRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def returns(self, context: int | None = None) -> list[RewardVector]:
        return [r.ret for r in self.records if context is None or r.context == context]

    def rows(self):
        """``(preference, context, ret_0, ret_1, ...)`` tuples for CSV output."""
        for r in self.records:
            yield (r.preference[0], r.context, *r.ret.components)


def rollout_returns(estimator, env, preferences, contexts=(None,), seed: int = 0) -> SolutionSet:
    """Greedy episodes for every (preference, context) pair, stepped in lockstep.

    Each pair runs on its own copy of ``env``; stochastic copies get a fixed
    per-pair seed so an evaluation phase is reproducible.
    """
    pairs = [(p, c) for c in contexts for p in preferences]
    envs, states = [], []
    for k, (p, c) in enumerate(pairs):
        e = copy.deepcopy(env)
        if getattr(e, "stochastic", False):
            e.rng = np.random.RandomState(seed + k)
        states.append(e.reset(context=c))
        envs.append(e)
    prefs = np.array([_pref_array(p) for p, _ in pairs])
    totals = np.zeros((len(pairs), env.objective_count))
    active = list(range(len(pairs)))
    for _ in range(env.max_steps):
        if not active:
            break
        x = estimator.featurize(envs[0], [states[k] for k in active])
        actions = estimator.predict(x, prefs[active])
        still = []
        for k, a in zip(active, actions):
            states[k], reward, done = envs[k].step(int(a))
            totals[k] += reward.components
            if not done:
                still.append(k)
        active = still
    if active:
        raise ContractViolation("environment exceeded its declared max_steps")
    return SolutionSet([
        SolutionRecord(tuple(prefs[k][:-1] if np.isinf(prefs[k][-1]) else prefs[k]), RewardVector(totals[k]),
                       0 if c is None else int(c))
        for k, (_, c) in enumerate(pairs)
    ])


def _pref_array(p) -> np.ndarray:
    if hasattr(p, "to_array"):
        return p.to_array()
    return np.asarray(p, dtype=np.float64)


def evaluation_phase(estimator, env, preferences, ref, fronts=None, tol: float = 1e-9, seed: int = 0):
    """Greedy sweep over ``preferences`` (and every forceable context).

    ``fronts`` maps context id to the known Pareto front. Returns the solution
    set and a metric row whose values are probability-weighted means over
    contexts.
    """
    ctx_ids, probs = env.contexts()
    contexts = [None] if len(ctx_ids) == 1 and not getattr(env, "stochastic", False) else [int(c) for c in ctx_ids]
    solutions = rollout_returns(estimator, env, preferences, contexts, seed=seed)
    weights = {(0 if c is None else c): float(p) for c, p in zip(contexts, probs)}
    hv = precision = recall = f1 = 0.0
    for c, w in weights.items():
        found = solutions.returns(c)
        hv += w * hypervolume_2d(found, ref)
        if fronts is not None:
            s = coverage_scores(found, fronts[c], tol)
            precision += w * s.precision
            recall += w * s.recall
            f1 += w * s.f1
    row = {"hypervolume": hv, "n_solutions": len({r.ret for r in solutions})}
    if fronts is not None:
        row.update(precision=precision, recall=recall, f1=f1)
    return solutions, row
