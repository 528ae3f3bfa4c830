import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gtlo.core import (
    ContractViolation,
    Experience,
    LinearWeight,
    RewardVector,
    ThresholdPreference,
    dominates,
    pareto_filter,
    scalarize_linear,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
points2 = st.lists(st.tuples(finite, finite), min_size=0, max_size=30)


def test_reward_vector_invariants():
    r = RewardVector((1, -1))
    assert r.components == (1.0, -1.0)
    assert (r + RewardVector((2, -3))).components == (3.0, -4.0)
    with pytest.raises(ContractViolation):
        RewardVector((1.0,))
    with pytest.raises(ContractViolation):
        RewardVector((1.0, math.nan))
    with pytest.raises(AttributeError):
        r.components = (0, 0)


def test_threshold_preference_requires_inf_last():
    t = ThresholdPreference.from_constraints(3.0)
    assert t.thresholds == (3.0, math.inf)
    assert t.constraints == (3.0,)
    with pytest.raises(ContractViolation):
        ThresholdPreference((3.0, 4.0))
    with pytest.raises(ContractViolation):
        ThresholdPreference((math.inf, math.inf))


def test_linear_weight_validation():
    assert LinearWeight((0.25, 0.75)).weights == (0.25, 0.75)
    with pytest.raises(ContractViolation):
        LinearWeight((0.5, 0.6))
    with pytest.raises(ContractViolation):
        LinearWeight((1.5, -0.5))


def test_experience_terminal_needs_absorbing_marker():
    pref = ThresholdPreference.from_constraints(1.0)
    Experience(3, 1, None, RewardVector((1, -1)), True, pref)
    with pytest.raises(ContractViolation):
        Experience(3, 1, 4, RewardVector((1, -1)), True, pref)
    with pytest.raises(ContractViolation):
        Experience(3, -1, 4, RewardVector((1, -1)), False, pref)


@pytest.mark.parametrize(
    "a, b, expected",
    [((2, -3), (1, -1), False), ((5, -7), (5, -7), False), ((8, -8), (5, -9), True)],
)
def test_dominates_examples(a, b, expected):
    assert dominates(a, b) is expected


def test_dominates_arity_mismatch():
    with pytest.raises(ContractViolation):
        dominates((1, 2), (1, 2, 3))


@pytest.mark.parametrize(
    "points, expected",
    [
        ([(1, -1), (0, -2)], [(1, -1)]),
        ([(1, -1), (124, -19)], [(1, -1), (124, -19)]),
        ([(3, -5)], [(3, -5)]),
        ([(3, -5), (3, -5)], [(3, -5)]),
        ([], []),
    ],
)
def test_pareto_filter_examples(points, expected):
    assert [p.components for p in pareto_filter(points)] == [tuple(map(float, e)) for e in expected]


@given(points2)
def test_pareto_filter_properties(points):
    front = pareto_filter(points)
    for a in front:
        for b in front:
            assert not dominates(a, b)
    assert pareto_filter(front) == front
    for p in points:
        assert any(tuple(q) == tuple(map(float, p)) or dominates(q, p) for q in front)


@given(st.tuples(finite, finite), st.tuples(finite, finite))
def test_dominates_irreflexive_antisymmetric(a, b):
    assert not dominates(a, a)
    assert not (dominates(a, b) and dominates(b, a))


@pytest.mark.parametrize("r, w, expected", [((1, -1), (1, 0), 1.0), ((124, -19), (0.5, 0.5), 52.5)])
def test_scalarize_examples(r, w, expected):
    assert scalarize_linear(r, LinearWeight(w)) == expected


def test_scalarize_additive_over_random_pairs():
    rng = np.random.RandomState(0)
    for _ in range(1000):
        r1, r2 = rng.uniform(-100, 100, 2), rng.uniform(-100, 100, 2)
        phi = rng.uniform()
        w = LinearWeight((1 - phi, phi))
        lhs = scalarize_linear(r1, w) + scalarize_linear(r2, w)
        assert abs(lhs - scalarize_linear(r1 + r2, w)) < 1e-9


def test_scalarize_arity_mismatch():
    with pytest.raises(ContractViolation):
        scalarize_linear((1, 2, 3), LinearWeight((0.5, 0.5)))
