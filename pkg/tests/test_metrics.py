import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aqmsim.aqm import DropCause, DropRecord
from aqmsim.metrics import (
    EmptySeries,
    attribute_drops,
    cdf_export,
    percentile,
    utilization_sample,
)


def test_nearest_rank_examples():
    assert percentile([1, 2, 3, 4], 50) == 2
    assert percentile([1, 2, 3, 4], 100) == 4
    assert percentile([7], 0) == 7


def test_percentile_errors():
    with pytest.raises(EmptySeries):
        percentile([], 50)
    with pytest.raises(ValueError):
        percentile([1], 101)


def test_uniform_p95():
    rng = np.random.default_rng(0)
    s = np.sort(rng.random(10_000))
    assert percentile(s, 95) == pytest.approx(0.95, abs=0.02)


@given(st.lists(st.integers(-1000, 1000), min_size=1, max_size=200), st.floats(0, 100))
def test_nearest_rank_definition(xs, q):
    s = sorted(xs)
    k = min(max(math.ceil(q * len(s) / 100), 1), len(s))
    assert percentile(np.array(s), q) == s[k - 1]


def test_cdf_examples():
    assert cdf_export([5, 5, 10]) == [(5, pytest.approx(2 / 3)), (10, 1.0)]
    assert cdf_export([3]) == [(3, 1.0)]


@given(st.lists(st.integers(0, 50), min_size=1, max_size=300))
def test_cdf_is_distribution(xs):
    pts = cdf_export(xs)
    vals = [v for v, _ in pts]
    fr = [f for _, f in pts]
    assert vals == sorted(set(xs))
    assert all(a < b for a, b in zip(fr, fr[1:]))
    assert fr[-1] == 1.0


def test_utilization_sample():
    assert utilization_sample(10_000_000, 10e6) == 1.0
    assert utilization_sample(0, 10e6) == 0.0


def rec(cause):
    return DropRecord(0, cause, 1, "f")


def test_attribution_ratios():
    att = attribute_drops([rec(DropCause.RANDOM)] * 2 + [rec(DropCause.OVERFLOW)])
    assert att.r_RD == pytest.approx(2 / 3)
    assert att.r_BO == pytest.approx(1 / 3)
    assert att.r_DD == 0.0
    assert att.n_tot == 3


def test_attribution_empty_log():
    att = attribute_drops([])
    assert att.n_tot == 0
    assert att.r_DD is None


@given(st.lists(st.sampled_from(list(DropCause)), max_size=100))
def test_attribution_conserves_counts(causes):
    att = attribute_drops([rec(c) for c in causes])
    assert att.n_tot == len(causes)
    if causes:
        total = att.r_DD + att.r_RD + att.r_BO + att.r_CoDel
        assert total == pytest.approx(1.0)
