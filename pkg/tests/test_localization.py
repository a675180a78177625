import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from eela.acoustics import ChannelParams
from eela.localization import (DegenerateGeometry, InfeasibleRanges, InvalidObservation,
                               RangeObservation, localization_error, toa_distance, trilaterate)


def _obs(anchors, truth):
    return [RangeObservation(i, a, math.dist(a, truth)) for i, a in enumerate(anchors)]


def test_worked_example():
    anchors = [(0.0, 0.0, 0.0), (100.0, 0.0, 0.0), (0.0, 100.0, 0.0)]
    obs = [RangeObservation(i, a, d) for i, (a, d) in
           enumerate(zip(anchors, (math.sqrt(5000), math.sqrt(9000), math.sqrt(7000))))]
    assert trilaterate(obs, 50.0) == pytest.approx((30.0, 40.0, 50.0), abs=1e-9)


def test_more_than_three_anchors_least_squares():
    anchors = [(0.0, 0.0, 0.0), (2000.0, 0.0, 0.0), (0.0, 2000.0, 0.0), (2000.0, 2000.0, 0.0)]
    truth = (812.0, 1333.0, 721.0)
    assert trilaterate(_obs(anchors, truth), truth[2]) == pytest.approx(truth, abs=1e-6)


@given(st.lists(st.tuples(st.floats(0, 2500), st.floats(0, 2500)), min_size=3, max_size=5),
       st.tuples(st.floats(0, 2500), st.floats(0, 2500), st.floats(1, 2500)))
def test_exact_ranges_recover_truth(xy, truth):
    a = np.array(xy)
    # keep layouts whose anchors span the plane comfortably
    assume(np.linalg.svd(a - a.mean(axis=0), compute_uv=False).min() > 50.0)
    est = trilaterate(_obs([(x, y, 0.0) for x, y in xy], truth), truth[2])
    assert localization_error(truth, est) < 1e-4


def test_collinear_anchors_are_degenerate():
    anchors = [(0.0, 0.0, 0.0), (500.0, 500.0, 0.0), (1000.0, 1000.0, 0.0)]
    with pytest.raises(DegenerateGeometry):
        trilaterate(_obs(anchors, (300.0, 900.0, 100.0)), 100.0)


def test_too_few_anchors():
    anchors = [(0.0, 0.0, 0.0), (100.0, 0.0, 0.0)]
    with pytest.raises(InvalidObservation):
        trilaterate(_obs(anchors, (50.0, 50.0, 10.0)), 10.0)
    dup = _obs([(0.0, 0.0, 0.0)] * 3, (10.0, 10.0, 10.0))
    dup = [RangeObservation(0, o.anchor_position, o.distance_m) for o in dup]
    with pytest.raises(InvalidObservation):
        trilaterate(dup, 10.0)


def test_ranges_shorter_than_depth():
    anchors = [(0.0, 0.0, 0.0), (100.0, 0.0, 0.0), (0.0, 100.0, 0.0)]
    obs = [RangeObservation(i, a, 10.0) for i, a in enumerate(anchors)]
    with pytest.raises(InfeasibleRanges):
        trilaterate(obs, 500.0)


def test_observation_validation():
    with pytest.raises(InvalidObservation):
        RangeObservation(0, (0.0, 0.0, 0.0), 0.0)
    with pytest.raises(InvalidObservation):
        RangeObservation(0, (0.0, 0.0, 5.0), 10.0)
    with pytest.raises(InvalidObservation):
        trilaterate([RangeObservation(i, (float(i), 0.0, 0.0), 1.0) for i in range(3)], -1.0)


def test_toa_distance():
    c = ChannelParams()
    assert toa_distance(2.0, 3.0, c) == pytest.approx(1500.0)
    with pytest.raises(InvalidObservation):
        toa_distance(3.0, 3.0, c)


def test_error_metric():
    assert localization_error((0, 0, 0), (3, 4, 0)) == 5.0
    assert localization_error((1, 2, 3), (1, 2, 3)) == 0.0
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(2, 50, 3))
    for u, v in zip(a, b):
        assert localization_error(u, v) == pytest.approx(math.sqrt(sum((x - y) ** 2 for x, y in zip(u, v))))


def test_symmetric_layout_below_an_anchor():
    anchors = [(500.0, 500.0, 0.0), (0.0, 0.0, 0.0), (1000.0, 0.0, 0.0)]
    truth = (500.0, 500.0, 300.0)
    assert trilaterate(_obs(anchors, truth), 300.0) == pytest.approx(truth, abs=1e-9)
