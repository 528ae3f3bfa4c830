"""Thresholded lexicographic ordering (TLO) action selection.

A Q-row is an ``(n_actions, n_objectives)`` array of estimates for one state
and one preference; thresholds are a length ``n_objectives`` array whose last
entry is ``+inf``. Action sets are sorted tuples of indices. Exact ties are
resolved towards the lowest action index everywhere.

The batched helpers take ``q`` of shape ``(n, n_actions, n_objectives)`` and
``t`` of shape ``(n, n_objectives)`` and are what the learners call.
"""

from __future__ import annotations

import numpy as np

from gtlo.core import ContractViolation, ThresholdPreference


def _as_row(q, t):
    q = np.asarray(q, dtype=np.float64)
    t = t.to_array() if isinstance(t, ThresholdPreference) else np.asarray(t, dtype=np.float64)
    if q.ndim != 2 or q.shape[0] < 1:
        raise ContractViolation(f"Q-row must be (n_actions, n_objectives), got {q.shape}")
    if q.shape[1] != t.shape[0]:
        raise ContractViolation(f"arity mismatch: Q-row has {q.shape[1]} objectives, thresholds {t.shape[0]}")
    return q, t


def thresholded_q(q, t) -> np.ndarray:
    """Cap every estimate at its threshold: ``min(Q_i, t_i)``."""
    q, t = _as_row(q, t)
    return np.minimum(q, t)


def _check_level(i, n_obj):
    if not 0 <= i < n_obj:
        raise ContractViolation(f"objective index {i} outside [0, {n_obj - 1}]")


def sufficient_set(q, t, i: int) -> tuple[int, ...]:
    """Actions whose estimates strictly exceed every threshold up to objective ``i``.

    The unconstrained last objective never takes part in the comparison, so
    ``i = n_objectives - 1`` yields the same set as ``i = n_objectives - 2``.
    """
    q, t = _as_row(q, t)
    _check_level(i, q.shape[1])
    upto = min(i, q.shape[1] - 2) + 1
    ok = np.all(q[:, :upto] > t[:upto], axis=1)
    return tuple(int(a) for a in np.flatnonzero(ok))


def _argmax_over(values: np.ndarray, actions) -> int:
    actions = list(actions)
    return actions[int(np.argmax(values[actions]))]


def tlo_select_sets(q, t) -> int:
    """TLO action through the sufficient-set (conditioned argmax) formulation."""
    q, t = _as_row(q, t)
    n_obj = q.shape[1]
    last_level = n_obj - 2
    sets = [sufficient_set(q, t, i) for i in range(last_level + 1)]
    if not sets[0]:
        return int(np.argmax(q[:, 0]))
    if sets[last_level]:
        return _argmax_over(q[:, n_obj - 1], sets[last_level])
    i = max(k for k, s in enumerate(sets) if s)
    return _argmax_over(q[:, i + 1], sets[i])


def _superior(qt: np.ndarray, best: int, other: int, i: int) -> bool:
    if qt[best, i] > qt[other, i]:
        return True
    if qt[best, i] == qt[other, i]:
        return i == qt.shape[1] - 1 or _superior(qt, best, other, i + 1)
    return False


def tlo_select_sup(q, t) -> int:
    """TLO action through the recursive superiority relation on thresholded values.

    Literal and quadratic in the number of actions; kept as a cross-check for
    :func:`tlo_select_sets`.
    """
    q, t = _as_row(q, t)
    qt = np.minimum(q, t)
    n = q.shape[0]
    for best in range(n):
        if all(_superior(qt, best, other, 0) for other in range(n) if other != best):
            return best
    raise AssertionError("lexicographic order always has a maximal element")


def restricted_set(q_next, t, i: int) -> tuple[int, ...]:
    """Follow-up actions over which the objective-``i`` backup maximizes.

    Objective 0 backs up over all actions. For ``i >= 1`` this is the
    sufficient set up to ``i - 1`` when non-empty, else the TLO action alone.
    """
    q, t = _as_row(q_next, t)
    _check_level(i, q.shape[1])
    if i == 0:
        return tuple(range(q.shape[0]))
    prior = sufficient_set(q, t, i - 1)
    return prior if prior else (tlo_select_sets(q, t),)


# batched versions ---------------------------------------------------------


def _masked_argmax(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.argmax(np.where(mask, values, -np.inf), axis=1)


def sufficient_masks(q: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Boolean ``(n, n_levels, n_actions)`` membership of the sufficient sets,
    one level per constrained objective."""
    over = q[:, :, :-1] > t[:, None, :-1]
    return np.logical_and.accumulate(over, axis=2).transpose(0, 2, 1)


def _two_objective(q, t):
    mask = q[:, :, 0] > t[:, :1]
    nonempty = mask.any(axis=1)
    greedy0 = np.argmax(q[:, :, 0], axis=1)
    return mask, nonempty, greedy0


def tlo_select_batch(q: np.ndarray, t: np.ndarray) -> np.ndarray:
    n, _, n_obj = q.shape
    if n_obj == 2:
        mask, nonempty, greedy0 = _two_objective(q, t)
        return np.where(nonempty, _masked_argmax(q[:, :, 1], mask), greedy0)
    masks = sufficient_masks(q, t)
    nonempty = masks.any(axis=2)
    # deepest non-empty level; -1 when none
    depth = np.where(nonempty.any(axis=1), n_obj - 2 - np.argmax(nonempty[:, ::-1], axis=1), -1)
    out = np.argmax(q[:, :, 0], axis=1)
    rows = np.flatnonzero(depth >= 0)
    if rows.size:
        d = depth[rows]
        mask = masks[rows, d]
        values = q[rows, :, d + 1]
        out[rows] = _masked_argmax(values, mask)
    return out


def restricted_max_batch(q: np.ndarray, t: np.ndarray, i: int) -> np.ndarray:
    """``max_{a in restricted_set} q[:, a, i]`` for every row."""
    if i == 0:
        return q[:, :, 0].max(axis=1)
    mask = sufficient_masks(q, t)[:, i - 1]
    empty = ~mask.any(axis=1)
    if empty.any():
        fallback = tlo_select_batch(q[empty], t[empty])
        mask = mask.copy()
        mask[np.flatnonzero(empty), fallback] = True
    return np.where(mask, q[:, :, i], -np.inf).max(axis=1)


def restricted_max_all(q: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Restricted-set maxima for every objective at once, shape ``(n, n_objectives)``."""
    n, n_actions, n_obj = q.shape
    if n_obj == 2:
        mask, nonempty, greedy0 = _two_objective(q, t)
        rows = np.arange(n)
        q1 = q[:, :, 1]
        best1 = np.where(nonempty, np.where(mask, q1, -np.inf).max(axis=1), q1[rows, greedy0])
        return np.stack([q[rows, greedy0, 0], best1], axis=1)
    masks = sufficient_masks(q, t)
    nonempty = masks.any(axis=2)
    out = np.empty((n, n_obj))
    out[:, 0] = q[:, :, 0].max(axis=1)
    if n_obj == 1:
        return out
    fallback = None
    if not nonempty.all():
        fallback = np.zeros((n, n_actions), dtype=bool)
        fallback[np.arange(n), tlo_select_batch(q, t)] = True
    for i in range(1, n_obj):
        mask = masks[:, i - 1]
        if fallback is not None:
            mask = np.where(nonempty[:, i - 1, None], mask, fallback)
        out[:, i] = np.where(mask, q[:, :, i], -np.inf).max(axis=1)
    return out
