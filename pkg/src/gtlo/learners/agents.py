"""Preference-generalized value learners with an sklearn-style estimator API.

Each estimator is configured through constructor keywords (so ``get_params``
and ``clone`` work) and trained with ``fit(env)``, the environment playing the
role of the data. ``predict(X, P)`` returns greedy actions for state features
``X`` under preferences ``P``.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

from gtlo.core import ConfigError, ContractViolation, Experience, LinearWeight, ThresholdPreference
from gtlo.learners.networks import OPTIMIZERS, GeneralizedQNetwork, ScalarQNetwork
from gtlo.learners.replay import ReplayBuffer
from gtlo.learners.tabular import TabularGeneralizedQ, TabularScalarQ
from gtlo.learners.targets import glinear_targets, gtlo_loss, gtlo_targets, scalar_loss
from gtlo.policy import tlo_select_batch


def grid_values(spec) -> np.ndarray:
    """``(lo, hi, count)`` -> ``count`` equidistant values; a bare number pins one value."""
    if isinstance(spec, (int, float)):
        return np.array([float(spec)])
    lo, hi, count = spec
    if int(count) < 1:
        raise ConfigError("preference grid count must be >= 1")
    return np.linspace(float(lo), float(hi), int(count))


def _normalize_grids(preference_grid):
    if preference_grid is None:
        raise ConfigError("preference_grid is required")
    if isinstance(preference_grid, (int, float)):
        return [grid_values(preference_grid)]
    if len(preference_grid) == 3 and all(isinstance(v, (int, float)) for v in preference_grid):
        return [grid_values(tuple(preference_grid))]
    return [grid_values(g) for g in preference_grid]


def tabular_update(q: TabularGeneralizedQ, exp: Experience, alpha: float, gammas) -> TabularGeneralizedQ:
    """Single restricted-set TD update of every head of a tabular Q (in place)."""
    t = exp.preference.to_array()[None]
    bins = q.head_bins(t)
    if exp.terminal:
        y = np.asarray(exp.reward.components)
    else:
        q_next = q.query(np.array([exp.next_state]), t, bins)
        y = gtlo_targets(np.asarray([exp.reward.components]), np.array([False]), q_next, t, gammas)[0]
    for i in range(q.n_objectives):
        cell = (exp.state, bins[i][0], exp.action)
        q.tables[i][cell] += alpha * (y[i] - q.tables[i][cell])
    return q


def _apply_tabular(table, visits, cells, y, lr):
    """Batched TD step with step size max(lr, 1/sqrt(visits)).

    A cell drawn several times in one batch keeps a single update.
    """
    flat = np.ravel_multi_index(cells, table.shape)
    vflat, tflat = visits.reshape(-1), table.reshape(-1)
    np.add.at(vflat, flat, 1)
    alpha = np.maximum(lr, 1.0 / np.sqrt(vflat[flat]))
    tflat[flat] = tflat[flat] + alpha * (y - tflat[flat])


class _ValueLearner(BaseEstimator):
    """Shared episode loop, replay, exploration and target-network mechanics."""

    _default_lr = {"tabular": 0.1, "network": 1e-4}

    # -- construction ------------------------------------------------------
    def _validate(self, env):
        if self.backend not in ("tabular", "network"):
            raise ConfigError(f"backend must be 'tabular' or 'network', got {self.backend!r}")
        for name in ("batch_size", "batches_per_step", "target_update"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("total_steps", "warmup"):
            if int(getattr(self, name)) < 0:
                raise ConfigError(f"{name} must be non-negative")
        for name in ("epsilon_start", "epsilon_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.backend == "network" and self.encoding not in env.encodings:
            raise ConfigError(f"{type(env).__name__} does not support encoding {self.encoding!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")

    def _lr(self):
        return self._default_lr[self.backend] if self.learning_rate is None else float(self.learning_rate)

    def _gammas(self, n_obj):
        g = np.asarray(self.gamma, dtype=np.float64)
        if g.ndim and g.shape != (n_obj,):
            raise ConfigError(f"gamma needs one entry per objective ({n_obj}), got {g.shape}")
        return np.broadcast_to(g, (n_obj,)).copy()

    def featurize(self, env, states) -> np.ndarray:
        if self.backend == "tabular":
            return np.array([env.state_id(s) for s in states], dtype=np.int64)
        return np.stack([np.ravel(env.encode(s, self.encoding)) for s in states])

    def epsilon(self, step: int) -> float:
        horizon = self.exploration_fraction * self.total_steps
        if horizon <= 0:
            return self.epsilon_end
        frac = min(1.0, step / horizon)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def _start(self, env):
        self._validate(env)
        rng = check_random_state(self.random_state)
        seeds = rng.randint(0, 2**31 - 1, size=3)
        self._explore_rng = np.random.RandomState(seeds[0])
        self._replay_rng = np.random.RandomState(seeds[1])
        init_rng = np.random.RandomState(seeds[2])
        self.n_actions_ = env.action_count
        self.n_objectives_ = env.objective_count
        self.grids_ = self._grids()
        state_dim = None if self.backend == "tabular" else env.encoding_size(self.encoding)
        self.q_ = self._build_q(env, init_rng)
        self.q_target_ = self.q_.copy() if self.backend == "network" else self.q_
        if self.backend == "network":
            self.optimizer_ = OPTIMIZERS[self.optimizer](lr=self._lr(), max_grad_norm=self.max_grad_norm)
        self.replay_ = ReplayBuffer(self.n_objectives_, self.n_objectives_, state_dim)
        self.n_steps_ = 0
        self.n_updates_ = 0
        self.losses_ = []
        self._tag_cache = {}
        self._gamma_vec = self._gammas(self.n_objectives_)

    # -- acting ------------------------------------------------------------
    def act(self, x, preference, epsilon: float, rng=None) -> int:
        """Epsilon-greedy action; exploratory actions are uniform over all actions."""
        rng = self._explore_rng if rng is None else rng
        if rng.random_sample() < epsilon:
            return int(rng.randint(self.n_actions_))
        return int(self._greedy(np.asarray(x)[None], np.asarray(preference, dtype=np.float64)[None])[0])

    def predict(self, X, P) -> np.ndarray:
        check_is_fitted(self, "q_")
        return self._greedy(np.asarray(X), np.asarray(P, dtype=np.float64))

    def _tag(self, preference) -> int:
        if self.backend != "tabular":
            return 0
        key = tuple(preference)
        tag = self._tag_cache.get(key)
        if tag is None:
            tag = self._tag_cache[key] = int(self._full_bin(np.asarray(preference, dtype=np.float64)[None])[0])
        return tag

    # -- learning ----------------------------------------------------------
    def observe(self, x, action, x_next, reward, terminal, preference):
        """Store one transition and run the per-step updates."""
        self.replay_.add(x, action, x_next, reward, terminal, preference, self._tag(preference))
        self.n_steps_ += 1
        if self.n_steps_ > self.warmup:
            for _ in range(self.batches_per_step):
                idx = self.replay_.sample_indices(self.batch_size, self._replay_rng)
                self._update(self.replay_.batch(idx))
                self.n_updates_ += 1
        if self.backend == "network" and self.n_steps_ % self.target_update == 0:
            self.q_target_ = self.q_.copy()

    def step_env(self, env, x, action, preference):
        """Take ``action`` in ``env``, record the transition, return ``(x_next, done)``."""
        state, reward, done = env.step(action)
        # a step-limit cut is invisible in the observation: keep bootstrapping through it
        absorbing = done and not (self.bootstrap_truncated and env.truncated)
        x_next = None if absorbing else self.featurize(env, [state])[0]
        self.observe(x, action, x_next, reward.components, absorbing, preference)
        return x_next, done

    def _sgd_step(self, grads):
        # optimizer steps return fresh arrays, so no defensive copy is needed
        self.q_.set_params(self.optimizer_.step(self.q_.params, grads), copy=False)

    def fit(self, env, eval_hook=None):
        """Train on ``env`` for ``total_steps`` environment steps.

        ``eval_hook(step, estimator)`` runs at step 0 and every ``eval_period``
        steps; its non-``None`` return values are collected in ``eval_log_``.
        """
        self._start(env)
        self.eval_log_ = []
        self._maybe_eval(eval_hook)
        grids = self.grids_
        while self.n_steps_ < self.total_steps:
            pref = self._sample_preference(grids)
            state = env.reset()
            x = self.featurize(env, [state])[0]
            done = False
            while not done and self.n_steps_ < self.total_steps:
                a = self.act(x, pref, self.epsilon(self.n_steps_))
                x, done = self.step_env(env, x, a, pref)
                if self.eval_period and self.n_steps_ % self.eval_period == 0:
                    self._maybe_eval(eval_hook)
        return self

    def _maybe_eval(self, eval_hook):
        if eval_hook is not None and self.eval_period:
            row = eval_hook(self.n_steps_, self)
            if row is not None:
                self.eval_log_.append(row)


class GTLO(_ValueLearner):
    """Generalized thresholded lexicographic Q-learning.

    Parameters mirror a DQN setup. ``preference_grid`` gives, per constrained
    objective, ``(lo, hi, count)``; thresholds are drawn from it once per
    episode. ``backend='tabular'`` uses one table cell per grid value;
    ``backend='network'`` uses a multi-head MLP whose head ``i`` sees
    thresholds ``0..i-1``.
    """

    def __init__(self, backend="tabular", encoding="one-hot", preference_grid=(0.5, 100.0, 100), gamma=1.0,
                 learning_rate=None, batch_size=32, batches_per_step=8, target_update=5000, warmup=1000,
                 epsilon_start=1.0, epsilon_end=0.05, exploration_fraction=0.2, total_steps=250_000,
                 eval_period=1000, trunk=(128, 64), heads=((64,), (64, 32)), optimizer="sgd",
                 max_grad_norm=10.0, q_init=0.0, bootstrap_truncated=True, random_state=None):
        self.backend = backend
        self.encoding = encoding
        self.preference_grid = preference_grid
        self.gamma = gamma
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.batches_per_step = batches_per_step
        self.target_update = target_update
        self.warmup = warmup
        self.epsilon_start = epsilon_start
        self.epsilon_end = epsilon_end
        self.exploration_fraction = exploration_fraction
        self.total_steps = total_steps
        self.eval_period = eval_period
        self.trunk = trunk
        self.heads = heads
        self.optimizer = optimizer
        self.max_grad_norm = max_grad_norm
        self.q_init = q_init
        self.bootstrap_truncated = bootstrap_truncated
        self.random_state = random_state

    def _grids(self):
        return _normalize_grids(self.preference_grid)

    def _build_q(self, env, rng):
        n_constrained = env.objective_count - 1
        if len(self.grids_) != n_constrained:
            raise ConfigError(f"need {n_constrained} threshold grids, got {len(self.grids_)}")
        if self.backend == "tabular":
            return TabularGeneralizedQ(env.n_states, env.action_count, self.grids_, init=self.q_init)
        bounds = np.array([[g.min() for g in self.grids_], [g.max() for g in self.grids_]])
        return GeneralizedQNetwork(env.encoding_size(self.encoding), env.action_count, env.objective_count,
                                   bounds, trunk=tuple(self.trunk), heads=tuple(tuple(h) for h in self.heads),
                                   rng=rng)

    def _sample_preference(self, grids):
        t = [g[self._explore_rng.randint(len(g))] for g in grids]
        return np.array([*t, math.inf])

    def preferences(self) -> list[ThresholdPreference]:
        """The full evaluation grid (Cartesian product over constrained objectives)."""
        grids = self.grids_ if hasattr(self, "grids_") else self._grids()
        mesh = np.meshgrid(*grids, indexing="ij")
        return [ThresholdPreference.from_constraints(*vals) for vals in zip(*(m.ravel() for m in mesh))]

    def q_values(self, X, P, target=False) -> np.ndarray:
        check_is_fitted(self, "q_")
        q = self.q_target_ if target else self.q_
        return q(np.asarray(X), np.asarray(P, dtype=np.float64))

    def _greedy(self, X, P):
        """Greedy TLO actions for state features ``X`` under thresholds ``P``."""
        return tlo_select_batch(self.q_(X, P), P)

    def _full_bin(self, P):
        return self.q_.full_bin(P)

    def _update(self, b):
        gammas = self._gamma_vec
        t = b["preference"]
        if self.backend == "tabular":
            q = self.q_
            bins = q.bins_from_full(b["tag"])
            nxt = np.where(b["terminal"], 0, b["next_state"])
            y = gtlo_targets(b["reward"], b["terminal"], q.query(nxt, t, bins), t, gammas)
            lr = self._lr()
            for i in range(q.n_objectives):
                cells = (b["state"], bins[i], b["action"])
                _apply_tabular(q.tables[i], q.visits[i], cells, y[:, i], lr)
            return
        q_next = self.q_target_(b["next_state"], t)
        y = gtlo_targets(b["reward"], b["terminal"], q_next, t, gammas)
        q, cache = self.q_.forward(b["state"], t)
        loss, d_q = gtlo_loss(q, b["action"], y)
        self.losses_.append(loss)
        self._sgd_step(self.q_.backward(cache, d_q))


class GLinear(_ValueLearner):
    """Generalized linear-scalarization Q-learning (scalar Q conditioned on weights).

    Weights are ``w = (1 - phi, phi)`` for ``phi`` drawn per episode from
    ``weight_grid`` (``(lo, hi, count)`` over ``phi``).
    """

    def __init__(self, backend="tabular", encoding="one-hot", weight_grid=(0.0, 1.0, 100), gamma=0.9,
                 learning_rate=None, batch_size=32, batches_per_step=8, target_update=5000, warmup=1000,
                 epsilon_start=1.0, epsilon_end=0.05, exploration_fraction=0.2, total_steps=150_000,
                 eval_period=1000, trunk=(128, 64), optimizer="sgd", max_grad_norm=10.0, q_init=0.0,
                 bootstrap_truncated=True, random_state=None):
        self.backend = backend
        self.encoding = encoding
        self.weight_grid = weight_grid
        self.gamma = gamma
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.batches_per_step = batches_per_step
        self.target_update = target_update
        self.warmup = warmup
        self.epsilon_start = epsilon_start
        self.epsilon_end = epsilon_end
        self.exploration_fraction = exploration_fraction
        self.total_steps = total_steps
        self.eval_period = eval_period
        self.trunk = trunk
        self.optimizer = optimizer
        self.max_grad_norm = max_grad_norm
        self.q_init = q_init
        self.bootstrap_truncated = bootstrap_truncated
        self.random_state = random_state

    def _grids(self):
        phi = grid_values(self.weight_grid)
        return [np.sort(1.0 - phi)]

    def _build_q(self, env, rng):
        if env.objective_count != 2:
            raise ConfigError("GLinear's weight grid is defined for two objectives")
        if self.backend == "tabular":
            return TabularScalarQ(env.n_states, env.action_count, self.grids_[0], init=self.q_init)
        return ScalarQNetwork(env.encoding_size(self.encoding), env.action_count, 2, trunk=tuple(self.trunk),
                              rng=rng)

    def _sample_preference(self, grids):
        w0 = grids[0][self._explore_rng.randint(len(grids[0]))]
        return np.array([w0, 1.0 - w0])

    def preferences(self) -> list[LinearWeight]:
        grids = self.grids_ if hasattr(self, "grids_") else self._grids()
        return [LinearWeight((w0, 1.0 - w0)) for w0 in grids[0]]

    def q_values(self, X, W, target=False) -> np.ndarray:
        check_is_fitted(self, "q_")
        q = self.q_target_ if target else self.q_
        return q(np.asarray(X), np.asarray(W, dtype=np.float64))

    def _greedy(self, X, W):
        return np.argmax(self.q_(X, W), axis=1)

    def _full_bin(self, W):
        return self.q_.bins(W)

    def _update(self, b):
        w = b["preference"]
        gamma = float(self._gamma_vec[0])
        if self.backend == "tabular":
            q = self.q_
            bins = b["tag"]
            nxt = np.where(b["terminal"], 0, b["next_state"])
            y = glinear_targets(b["reward"], b["terminal"], q.query(nxt, w, bins), w, gamma)
            _apply_tabular(q.table, q.visits, (b["state"], bins, b["action"]), y, self._lr())
            return
        y = glinear_targets(b["reward"], b["terminal"], self.q_target_(b["next_state"], w), w, gamma)
        q, cache = self.q_.forward(b["state"], w)
        loss, d_q = scalar_loss(q, b["action"], y)
        self.losses_.append(loss)
        self._sgd_step(self.q_.backward(cache, d_q))


class OuterLoopGTLO(BaseEstimator):
    """Independent single-preference gTLO learners, one per threshold.

    Episodes are assigned to a learner drawn uniformly among those with budget
    left, so the learners share one global step counter; ``eval_hook`` sees
    the merged solution set.
    """

    def __init__(self, estimator=None, preferences=(), per_preference_steps=25_000, eval_period=1000,
                 random_state=None):
        self.estimator = estimator
        self.preferences = preferences
        self.per_preference_steps = per_preference_steps
        self.eval_period = eval_period
        self.random_state = random_state

    def _template(self):
        return GTLO() if self.estimator is None else self.estimator

    def fit(self, env, eval_hook=None):
        prefs = [np.atleast_1d(np.asarray(p, dtype=np.float64)) for p in self.preferences]
        rng = check_random_state(self.random_state)
        self.learners_, self.preference_arrays_ = [], []
        for p in prefs:
            learner = clone(self._template()).set_params(
                preference_grid=[(float(v), float(v), 1) for v in p],
                total_steps=self.per_preference_steps,
                eval_period=0,
                random_state=int(rng.randint(0, 2**31 - 1)),
            )
            learner._start(env)
            self.learners_.append(learner)
            self.preference_arrays_.append(np.array([*p, math.inf]))
        self.n_steps_ = 0
        self.eval_log_ = []
        self._maybe_eval(eval_hook)
        while True:
            open_ = [k for k, lrn in enumerate(self.learners_) if lrn.n_steps_ < lrn.total_steps]
            if not open_:
                break
            k = open_[rng.randint(len(open_))]
            learner, pref = self.learners_[k], self.preference_arrays_[k]
            state = env.reset()
            x = learner.featurize(env, [state])[0]
            done = False
            while not done and learner.n_steps_ < learner.total_steps:
                a = learner.act(x, pref, learner.epsilon(learner.n_steps_))
                x, done = learner.step_env(env, x, a, pref)
                self.n_steps_ += 1
                if self.eval_period and self.n_steps_ % self.eval_period == 0:
                    self._maybe_eval(eval_hook)
        return self

    def _maybe_eval(self, eval_hook):
        if eval_hook is not None and self.eval_period:
            row = eval_hook(self.n_steps_, self)
            if row is not None:
                self.eval_log_.append(row)

    def preferences_list(self) -> list[ThresholdPreference]:
        return [ThresholdPreference(p) for p in self.preference_arrays_]

    def featurize(self, env, states):
        check_is_fitted(self, "learners_")
        return self.learners_[0].featurize(env, states)

    def predict(self, X, P) -> np.ndarray:
        """Route each row to the learner pinned at that row's thresholds."""
        check_is_fitted(self, "learners_")
        X, P = np.asarray(X), np.asarray(P, dtype=np.float64)
        out = np.zeros(len(P), dtype=np.int64)
        matched = np.zeros(len(P), dtype=bool)
        for learner, pref in zip(self.learners_, self.preference_arrays_):
            rows = np.flatnonzero(np.all(np.isclose(P[:, :-1], pref[:-1]), axis=1) & ~matched)
            if rows.size:
                out[rows] = learner.predict(X[rows], P[rows])
                matched[rows] = True
        if not matched.all():
            raise ContractViolation("outer-loop predict called with a preference it was not trained for")
        return out
