"""Staircase evaluation against a naive interval-scan oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_scaling, naive_scaling_array, random_staircase
from safescale import (
    Position3,
    StaircaseSafetyFunction,
    eval_scaling,
    eval_scaling_by_distance,
)

DEFAULT = StaircaseSafetyFunction(
    levels=(0.0, 0.25, 0.5, 0.75, 1.0),
    thresholds=(1.2, 1.5, 1.9, 2.4),
)


@pytest.mark.parametrize(
    "d,expected",
    [
        (0.0, 0.0),
        (0.3, 0.0),
        (1.2, 0.0),
        (1.2000001, 0.25),
        (1.5, 0.25),
        (1.7, 0.5),
        (1.9, 0.5),
        (2.0, 0.75),
        (2.4, 0.75),
        (2.41, 1.0),
        (1e9, 1.0),
    ],
)
def test_default_staircase_spot_values(d, expected):
    assert eval_scaling_by_distance(DEFAULT, d) == expected


def test_boundary_distance_takes_lower_level():
    # A distance exactly on a band edge belongs to the inner band.
    for k, thr in enumerate(DEFAULT.thresholds):
        assert DEFAULT.scaling_at_distance(thr) == DEFAULT.levels[k]
        above = np.nextafter(thr, np.inf)
        assert DEFAULT.scaling_at_distance(above) == DEFAULT.levels[k + 1]


def test_eval_scaling_from_positions():
    xr = Position3(0.0, 0.0, 0.0)
    assert eval_scaling(DEFAULT, xr, Position3(0.6, 0.8, 0.0)) == 0.0
    assert eval_scaling(DEFAULT, xr, Position3(0.0, 0.0, 1.6)) == 0.5
    assert eval_scaling(DEFAULT, xr, Position3(0.0, 3.0, 0.0)) == 1.0
    assert eval_scaling(DEFAULT, xr, xr) == 0.0


def test_vectorized_matches_scalar():
    rng = np.random.default_rng(7)
    d = rng.uniform(0.0, 4.0, 500)
    vec = DEFAULT.scaling_at_distances(d)
    assert vec.tolist() == [DEFAULT.scaling_at_distance(v) for v in d]


def test_matches_naive_oracle_on_random_staircases():
    rng = np.random.default_rng(2024)
    for _ in range(30):
        levels, thresholds = random_staircase(rng)
        f = StaircaseSafetyFunction(levels=levels, thresholds=thresholds)
        d = rng.uniform(0.0, thresholds[-1] * 1.5, 2000)
        d[: len(thresholds)] = thresholds  # exact edges too
        got = f.scaling_at_distances(d)
        want = naive_scaling_array(levels, thresholds, d)
        assert np.array_equal(got, want)


@st.composite
def staircases(draw):
    p = draw(st.integers(min_value=2, max_value=6))
    raw_levels = draw(
        st.lists(
            st.floats(0.0, 1.0, allow_nan=False), min_size=p, max_size=p, unique=True
        )
    )
    raw_thresholds = draw(
        st.lists(
            st.floats(0.01, 50.0, allow_nan=False), min_size=p - 1, max_size=p - 1, unique=True
        )
    )
    return tuple(sorted(raw_levels)), tuple(sorted(raw_thresholds))


@settings(max_examples=200, deadline=None)
@given(staircases(), st.floats(0.0, 100.0, allow_nan=False))
def test_property_result_is_a_level_and_matches_oracle(sc, d):
    levels, thresholds = sc
    f = StaircaseSafetyFunction(levels=levels, thresholds=thresholds)
    got = f.scaling_at_distance(d)
    assert got in levels
    assert got == naive_scaling(levels, thresholds, d)


@settings(max_examples=100, deadline=None)
@given(staircases(), st.floats(0.0, 100.0, allow_nan=False), st.floats(0.0, 100.0, allow_nan=False))
def test_property_monotone_in_distance(sc, d1, d2):
    levels, thresholds = sc
    f = StaircaseSafetyFunction(levels=levels, thresholds=thresholds)
    lo, hi = sorted((d1, d2))
    assert f.scaling_at_distance(lo) <= f.scaling_at_distance(hi)


@pytest.mark.parametrize(
    "levels,thresholds",
    [
        ((0.5, 0.5, 1.0), (1.0, 2.0)),  # not strictly increasing
        ((1.0, 0.0), (1.0,)),  # decreasing
        ((0.0, 1.5), (1.0,)),  # outside [0, 1]
        ((0.0, 1.0), (1.0, 2.0)),  # threshold count mismatch
        ((0.0, 0.5, 1.0), (2.0, 1.0)),  # thresholds out of order
        ((0.0, 1.0), (0.0,)),  # threshold not positive
        ((0.0, 1.0), (float("nan"),)),
        ((0.0, float("inf")), (1.0,)),
        ((), ()),
    ],
)
def test_invalid_staircases_rejected(levels, thresholds):
    with pytest.raises(ValueError):
        StaircaseSafetyFunction(levels=levels, thresholds=thresholds)


def test_unknown_metric_rejected():
    with pytest.raises(ValueError):
        StaircaseSafetyFunction(levels=(0.0, 1.0), thresholds=(1.0,), metric="manhattan")


def test_negative_or_nonfinite_distances_rejected():
    with pytest.raises(ValueError):
        DEFAULT.scaling_at_distance(-0.1)
    with pytest.raises(ValueError):
        DEFAULT.scaling_at_distance(float("nan"))
    with pytest.raises(ValueError):
        DEFAULT.scaling_at_distances(np.array([0.5, -1.0]))


def test_dict_roundtrip():
    again = StaircaseSafetyFunction.from_dict(DEFAULT.to_dict())
    assert again == DEFAULT


def test_position_validation_and_distance():
    p = Position3(1.0, 2.0, 2.0)
    assert p.distance_to(Position3(0.0, 0.0, 0.0)) == 3.0
    assert p.as_tuple() == (1.0, 2.0, 2.0)
    assert p.as_array().dtype == np.float64
    assert Position3.from_sequence([1, 2, 2]) == p
    with pytest.raises(ValueError):
        Position3(float("nan"), 0.0, 0.0)
    with pytest.raises(ValueError):
        Position3(0.0, float("inf"), 0.0)
    with pytest.raises(ValueError):
        Position3.from_sequence([1.0, 2.0])
