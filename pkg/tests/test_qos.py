import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leoqoe.qos import (
    FlowMetrics,
    ScoreBounds,
    composite_score,
    fairness_index,
    map_score,
    objective,
    score_flow,
)

from oracles import linear_score, population_std, profile


def test_latency_at_lower_bound_is_max():
    assert map_score(0.1, 0.1, 0.3, "lower") == 5


def test_latency_midpoint():
    assert map_score(0.2, 0.1, 0.3, "lower") == pytest.approx(3, rel=1e-9)


def test_throughput_saturates_high():
    assert map_score(0.9, 0.1, 0.5, "higher") == 5
    assert map_score(0.05, 0.1, 0.5, "higher") == 1


def test_degenerate_bounds_rejected():
    with pytest.raises(ValueError):
        map_score(1.0, 0.3, 0.3)
    with pytest.raises(ValueError):
        ScoreBounds(1.0, 5.0)


@settings(max_examples=300, deadline=None)
@given(st.floats(-1, 2), st.floats(0, 0.5), st.floats(0.01, 1), st.booleans())
def test_map_score_matches_oracle(v, lo, width, lower):
    hi = lo + width
    got = map_score(v, lo, hi, "lower" if lower else "higher")
    assert got == pytest.approx(linear_score(v, lo, hi, lower), rel=1e-9, abs=1e-12)
    assert 1.0 <= got <= 5.0


def test_composite_examples():
    assert composite_score(5, 3, 1, (0.8, 0.1, 0.1)) == pytest.approx(4.4, rel=1e-9)
    assert composite_score(5, 5, 5, (0.2, 0.3, 0.5)) == pytest.approx(5, rel=1e-9)
    assert composite_score(2, 5, 5, (1, 0, 0)) == 2


def test_objective_examples():
    assert objective([20, 2, 1], [5, 5, 5]) == pytest.approx(1.0, rel=1e-9)
    assert objective([20, 1], [5, 2.5]) == pytest.approx(102.5 / 105, rel=1e-9)
    assert objective([7], [1]) == pytest.approx(0.2, rel=1e-9)
    with pytest.raises(ValueError):
        objective([], [])


def test_fairness_examples():
    assert fairness_index([3.3, 3.3, 3.3]) == pytest.approx(1, rel=1e-12)
    assert fairness_index([5, 1]) == pytest.approx(0, abs=1e-12)
    assert fairness_index([5, 5, 1, 1]) == pytest.approx(0, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(1, 5), min_size=1, max_size=40))
def test_fairness_matches_population_std(scores):
    f = fairness_index(scores)
    assert f == pytest.approx(1 - 2 * population_std(scores) / 4, abs=1e-9)
    assert 0.0 - 1e-12 <= f <= 1.0 + 1e-12


def test_score_flow_and_starvation():
    p = profile(latency=(0.01, 0.11), throughput=(0.1, 0.5), drop=(0.0, 0.1))
    s = score_flow(p, FlowMetrics(0.06, 0.3, 0.05, 100, 95, 5))
    assert (s.omega_delta, s.omega_tau, s.omega_l) == pytest.approx((3, 3, 3))
    assert s.omega_total == pytest.approx(3)
    starved = score_flow(p, FlowMetrics(math.nan, 0.0, 1.0, 10, 0, 10))
    assert starved.omega_delta == 1 and starved.omega_tau == 1 and starved.omega_l == 1
