import math
import random

import pytest
from hypothesis import given, strategies as st

from aqmsim.aqm import (
    CodelConfig,
    CodelQueue,
    CodelState,
    DropCause,
    DropTailQueue,
    MadpieConfig,
    MadpieQueue,
    MadpieState,
    PieConfig,
    PieQueue,
    PieState,
    codel_control_law,
    codel_dequeue,
    droptail_enqueue_decision,
    madpie_enqueue_decision,
    madpie_update,
    pie_enqueue_decision,
    pie_estimate_delay,
    pie_update,
)
from aqmsim.engine import NS_PER_MS
from aqmsim.packet import FifoBuffer, Packet

MS = NS_PER_MS
NOSCALE = PieConfig(prob_range_scaling=False)


def pie_state(p=0.0, est=0, old=0, burst=0, qbytes=0):
    return PieState(p_drop=p, est_delay=est, est_delay_old=old, burst_remaining=burst, queue_bytes=qbytes)


class _Flow:
    label = "f"


def pkt(size=1500, seq=0):
    return Packet(_Flow(), seq, size, size, 0)


# -- estimator --------------------------------------------------------------

@pytest.mark.parametrize("qbytes, expected_ms", [(0, 0), (25_000, 20), (62_500, 50)])
def test_backlog_delay_estimate(qbytes, expected_ms):
    assert pie_estimate_delay(qbytes, 10e6) == expected_ms * MS


# -- controller -------------------------------------------------------------

def test_update_zero_error_and_trend_keeps_p():
    s = pie_update(pie_state(0.1, 20 * MS, 20 * MS), NOSCALE)
    assert s.p_drop == 0.1


def test_update_hand_arithmetic():
    s = pie_update(pie_state(0.1, 30 * MS, 25 * MS), NOSCALE)
    assert s.p_drop == pytest.approx(0.1 + 0.125 * 0.010 + 1.25 * 0.005, abs=1e-15)
    assert s.p_drop == pytest.approx(0.10750)


def test_update_lower_clamp():
    s = pie_update(pie_state(0.0005, 5 * MS, 60 * MS), NOSCALE)
    assert s.p_drop == 0.0


def test_update_rolls_old_estimate():
    s = pie_update(pie_state(0.2, 33 * MS, 10 * MS), NOSCALE)
    assert s.est_delay_old == 33 * MS


def test_range_scaling_reduces_gain_at_low_p():
    cfg = PieConfig(prob_range_scaling=True)
    low = pie_update(pie_state(0.005, 30 * MS, 30 * MS), cfg).p_drop - 0.005
    mid = pie_update(pie_state(0.05, 30 * MS, 30 * MS), cfg).p_drop - 0.05
    high = pie_update(pie_state(0.5, 30 * MS, 30 * MS), cfg).p_drop - 0.5
    assert low == pytest.approx(0.125 * 0.010 / 8)
    assert mid == pytest.approx(0.125 * 0.010 / 2)
    assert high == pytest.approx(0.125 * 0.010)


@given(st.lists(st.integers(min_value=0, max_value=10_000 * MS), min_size=1, max_size=60),
       st.booleans())
def test_p_drop_stays_in_unit_interval(estimates, scaling):
    cfg = PieConfig(prob_range_scaling=scaling)
    s = PieState.initial(cfg)
    for e in estimates:
        s.est_delay = e
        pie_update(s, cfg)
        assert 0.0 <= s.p_drop <= 1.0
        assert 0 <= s.burst_remaining <= cfg.max_burst


@given(st.lists(st.integers(min_value=0, max_value=1000 * MS), min_size=1, max_size=40))
def test_zero_gains_never_random_drop(estimates):
    cfg = PieConfig(alpha=0.0, beta=0.0)
    s = PieState.initial(cfg)
    rng = random.Random(3)
    for e in estimates:
        s.est_delay = e
        pie_update(s, cfg)
        assert s.p_drop == 0.0
        assert pie_enqueue_decision(s, 100, 10**9, rng.random()) is None


def test_burst_allowance_counts_down_then_refreshes():
    cfg = PieConfig()
    s = PieState.initial(cfg)
    assert s.burst_remaining == 100 * MS
    s.est_delay = 40 * MS
    for expected in (70, 40, 10, 0, 0):
        pie_update(s, cfg)
        assert s.burst_remaining == expected * MS
    s.p_drop, s.est_delay, s.est_delay_old = 0.0, 1 * MS, 1 * MS
    pie_update(s, cfg)
    assert s.burst_remaining == 100 * MS


def test_config_invariants():
    with pytest.raises(ValueError):
        PieConfig(target=0)
    with pytest.raises(ValueError):
        PieConfig(alpha=-1.0)
    with pytest.raises(ValueError):
        MadpieConfig(tau_dd=10 * MS)
    with pytest.raises(ValueError):
        CodelConfig(target=0)


# -- PIE enqueue ---------------------------------------------------------------

def test_overflow_precedes_random_policy():
    for u in (0.0, 0.5, 1.0):
        s = pie_state(p=0.0, qbytes=1000)
        assert pie_enqueue_decision(s, 600, 1500, u) == DropCause.OVERFLOW
        assert s.queue_bytes == 1000


def test_zero_probability_always_enqueues():
    s = pie_state(p=0.0)
    assert pie_enqueue_decision(s, 1500, 10**6, 1e-9) is None
    assert s.queue_bytes == 1500


def test_random_drop_rule():
    s = pie_state(p=0.3)
    assert pie_enqueue_decision(s, 1500, 10**6, 0.25) == DropCause.RANDOM
    assert pie_enqueue_decision(s, 1500, 10**6, 0.35) is None


def test_burst_allowance_suppresses_random_drop():
    s = pie_state(p=0.9, burst=30 * MS)
    assert pie_enqueue_decision(s, 1500, 10**6, 0.0) is None


# -- MADPIE --------------------------------------------------------------------

def madpie_state(p_max=0, p=0.0, est=0):
    return MadpieState(pie=pie_state(p=p, est=est), p_max=p_max)


def test_p_max_set_above_threshold():
    cfg = MadpieConfig(tau_dd=30 * MS)
    st_ = madpie_update(madpie_state(est=35 * MS), cfg)
    assert st_.p_max == 1


def test_p_max_not_set_at_threshold():
    cfg = MadpieConfig(tau_dd=30 * MS)
    assert madpie_update(madpie_state(est=30 * MS), cfg).p_max == 0


def test_p_max_persists_until_consumed():
    cfg = MadpieConfig(tau_dd=30 * MS)
    assert madpie_update(madpie_state(p_max=1, est=10 * MS), cfg).p_max == 1


def test_random_drop_leaves_p_max_armed():
    s = madpie_state(p_max=1, p=0.5)
    assert madpie_enqueue_decision(s, 1500, 10**6, 0.1) == DropCause.RANDOM
    assert s.p_max == 1


def test_deterministic_drop_consumes_p_max():
    s = madpie_state(p_max=1, p=0.0)
    assert madpie_enqueue_decision(s, 1500, 10**6, 0.9) == DropCause.DETERMINISTIC
    assert s.p_max == 0
    assert s.pie.queue_bytes == 0
    assert madpie_enqueue_decision(s, 1500, 10**6, 0.9) is None


def test_overflow_precedes_deterministic_drop():
    s = madpie_state(p_max=1)
    s.pie.queue_bytes = 1000
    assert madpie_enqueue_decision(s, 1500, 2000, 0.9) == DropCause.OVERFLOW
    assert s.p_max == 1


@given(st.lists(st.tuples(st.integers(0, 200 * MS), st.lists(st.floats(0, 1), max_size=30)), max_size=30))
def test_at_most_one_deterministic_drop_per_interval(schedule):
    cfg = MadpieConfig(pie=PieConfig(), tau_dd=30 * MS)
    s = MadpieState.initial(cfg)
    for est, draws in schedule:
        s.pie.est_delay = est
        madpie_update(s, cfg)
        dd = 0
        for u in draws:
            if madpie_enqueue_decision(s, 1500, 10**9, u) == DropCause.DETERMINISTIC:
                dd += 1
        assert dd <= 1


@given(st.lists(st.tuples(st.integers(0, 30 * MS), st.lists(st.floats(0, 1), max_size=20)), max_size=30))
def test_no_deterministic_drop_while_below_threshold(schedule):
    cfg = MadpieConfig(tau_dd=30 * MS)
    s = MadpieState.initial(cfg)
    for est, draws in schedule:
        s.pie.est_delay = est
        madpie_update(s, cfg)
        for u in draws:
            assert madpie_enqueue_decision(s, 1500, 10**9, u) != DropCause.DETERMINISTIC


@given(st.integers(0, 2**32), st.integers(20, 400))
def test_infinite_threshold_matches_pie(seed, n):
    pie = PieQueue(200_000, 10e6, PieConfig())
    mad = MadpieQueue(200_000, 10e6, MadpieConfig(PieConfig(), math.inf))
    rng = random.Random(seed)
    now = 0
    for i in range(n):
        now += rng.randrange(0, 3 * MS)
        u = rng.random()
        if rng.random() < 0.1:
            pie.tick(now)
            mad.tick(now)
        if rng.random() < 0.4:
            assert (pie.dequeue(now) is None) == (mad.dequeue(now) is None)
        assert pie.enqueue(pkt(seq=i), now, u) == mad.enqueue(pkt(seq=i), now, u)
        assert pie.state.p_drop == mad.state.pie.p_drop


# -- DropTail ------------------------------------------------------------------

def test_droptail_rules():
    assert droptail_enqueue_decision(0, 1500, 3000) is None
    assert droptail_enqueue_decision(3000, 1, 3000) == DropCause.OVERFLOW


def test_droptail_fills_to_bdp():
    cap = 625_000  # 10 Mbps x 500 ms
    q = DropTailQueue(cap, 10e6)
    accepted = 0
    while q.enqueue(pkt(seq=accepted), 0, 0.5) is None:
        accepted += 1
    assert accepted == cap // 1500
    assert q.backlog_bytes <= cap


# -- CoDel ---------------------------------------------------------------------

def test_control_law_spacing():
    assert codel_control_law(0, 100 * MS, 1) == 100 * MS
    assert codel_control_law(0, 100 * MS, 2) == 70_710_678
    assert codel_control_law(5, 100 * MS, 4) == 5 + 50 * MS


def _codel_trace(dequeue_times, sojourn):
    """Dequeue at the given instants from a buffer whose every packet has ``sojourn`` age."""
    cfg = CodelConfig()
    state = CodelState()
    buf = FifoBuffer()
    drops = []
    for now in dequeue_times:
        while len(buf) < 4:
            buf.append(pkt())
        for p in buf:
            p.enq_ts = now - sojourn
        _, dropped = codel_dequeue(state, cfg, buf, now)
        drops.extend(now for _ in dropped)
    return drops, state


def test_no_drops_below_target():
    drops, _ = _codel_trace(range(0, 2_000 * MS, MS), 4 * MS)
    assert drops == []


def test_exempt_when_backlog_within_one_mtu():
    cfg, state, buf = CodelConfig(), CodelState(), FifoBuffer()
    for now in range(0, 1_000 * MS, MS):
        p = pkt()
        p.enq_ts = now - 50 * MS
        buf.append(p)
        _, dropped = codel_dequeue(state, cfg, buf, now)
        assert dropped == []


def test_queue_reports_codel_drops():
    q = CodelQueue(10**6, 10e6)
    seen = []
    q.on_drop = lambda p, cause, delay, now: seen.append((cause, delay))
    for now in range(0, 300 * MS, MS):
        while len(q.buf) < 4:
            q.enqueue(pkt(), now - 10 * MS, 0.5)
        q.dequeue(now)
    assert seen and all(c == DropCause.CODEL and d >= 10 * MS for c, d in seen)


def test_codel_resumes_previous_drop_rate():
    # state after a cycle that ended with count 5 and last_count 1 and
    # drop_next just passed: re-entry should restart at count 5 - 1 + 1
    cfg = CodelConfig()
    state = CodelState(drop_count=5, last_count=1, next_drop_at=0)
    state.first_above_at = 0
    buf = FifoBuffer()
    now = 50 * MS
    for _ in range(4):
        p = pkt()
        p.enq_ts = now - 20 * MS
        buf.append(p)
    _, dropped = codel_dequeue(state, cfg, buf, now)
    assert len(dropped) == 1
    assert state.drop_count == 5 and state.last_count == 5
    assert state.next_drop_at == codel_control_law(now, cfg.interval, 5)


def test_codel_restarts_at_one_after_long_idle():
    cfg = CodelConfig()
    state = CodelState(drop_count=5, last_count=1, next_drop_at=0, first_above_at=0)
    buf = FifoBuffer()
    now = 17 * cfg.interval
    for _ in range(4):
        p = pkt()
        p.enq_ts = now - 20 * MS
        buf.append(p)
    codel_dequeue(state, cfg, buf, now)
    assert state.drop_count == 1
