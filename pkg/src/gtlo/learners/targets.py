"""Bellman targets and losses for the gTLO and gLinear learners."""

from __future__ import annotations

import numpy as np

from gtlo.core import Experience, TrainingDivergence, scalarize_linear
from gtlo.policy import restricted_max_all, restricted_set


def gtlo_target(exp: Experience, q_next_row, i: int, gamma: float) -> float:
    """Objective-``i`` target for one experience.

    ``q_next_row`` holds the frozen estimates of the successor state under the
    experience's own thresholds (ignored for terminal experiences).
    """
    r = exp.reward[i]
    if exp.terminal:
        return float(r)
    t = exp.preference.to_array()
    q_next_row = np.asarray(q_next_row, dtype=np.float64)
    allowed = restricted_set(q_next_row, t, i)
    return float(r + gamma * max(q_next_row[a, i] for a in allowed))


def gtlo_targets(reward, terminal, q_next, t, gammas) -> np.ndarray:
    """Batched targets ``(n, n_objectives)``; ``q_next`` rows of terminal samples are ignored."""
    y = reward.astype(np.float64, copy=True)
    live = ~terminal
    if live.any():
        y[live] += np.asarray(gammas) * restricted_max_all(q_next[live], t[live])
    return y


def huber(residual, delta=1.0):
    a = np.abs(residual)
    return np.where(a <= delta, 0.5 * residual**2, delta * (a - 0.5 * delta))


def huber_grad(residual, delta=1.0):
    """Derivative of the Huber loss with respect to the residual."""
    return np.clip(residual, -delta, delta)


def gtlo_loss(q_online: np.ndarray, actions: np.ndarray, targets: np.ndarray, delta=1.0):
    """Mean over the batch of the per-objective Huber losses summed over objectives.

    Returns ``(loss, dloss/dQ)`` where the gradient has the shape of
    ``q_online`` and is non-zero only at the taken actions.
    """
    n = q_online.shape[0]
    rows = np.arange(n)
    taken = q_online[rows, actions]
    residual = targets - taken
    loss = float(huber(residual, delta).sum(axis=1).mean())
    if not np.isfinite(loss):
        raise TrainingDivergence(f"non-finite gTLO loss {loss}")
    d_q = np.zeros_like(q_online)
    d_q[rows, actions] = -huber_grad(residual, delta) / n
    return loss, d_q


def glinear_target(exp: Experience, q_next_row, gamma: float) -> float:
    r = scalarize_linear(exp.reward, exp.preference)
    if exp.terminal:
        return r
    return float(r + gamma * np.max(q_next_row))


def glinear_targets(reward, terminal, q_next, w, gamma) -> np.ndarray:
    y = np.einsum("ij,ij->i", reward, w)
    live = ~terminal
    y[live] += gamma * q_next[live].max(axis=1)
    return y


def scalar_loss(q_online, actions, targets, delta=1.0):
    n = q_online.shape[0]
    rows = np.arange(n)
    residual = targets - q_online[rows, actions]
    loss = float(huber(residual, delta).mean())
    if not np.isfinite(loss):
        raise TrainingDivergence(f"non-finite gLinear loss {loss}")
    d_q = np.zeros_like(q_online)
    d_q[rows, actions] = -huber_grad(residual, delta) / n
    return loss, d_q
