import pytest
from hypothesis import given, strategies as st

from aqmsim.engine import NS_PER_S, Engine, SchedulingInPast


def test_same_time_events_fire_in_insertion_order():
    eng = Engine()
    seen = []
    for tag in "abc":
        eng.schedule(10, seen.append, tag)
    eng.run_until(10)
    assert seen == ["a", "b", "c"]


def test_schedule_at_now_runs_after_already_due_events():
    eng = Engine()
    seen = []

    def first(_):
        seen.append("first")
        eng.schedule(eng.now, seen.append, "late")

    eng.schedule(5, first)
    eng.schedule(5, seen.append, "second")
    eng.run_until(5)
    assert seen == ["first", "second", "late"]


def test_scheduling_in_the_past_raises():
    eng = Engine()
    eng.run_until(100)
    with pytest.raises(SchedulingInPast):
        eng.schedule(99, print)
    with pytest.raises(SchedulingInPast):
        eng.post(99, print)


def test_cancel_semantics():
    eng = Engine()
    fired = []
    h = eng.schedule(50, fired.append, "rto")
    assert h.pending
    assert Engine.cancel(h) is True
    assert Engine.cancel(h) is False
    eng.run_until(100)
    assert fired == []

    h2 = eng.schedule(150, fired.append, "x")
    eng.run_until(200)
    assert fired == ["x"]
    assert Engine.cancel(h2) is False


def test_empty_run_advances_clock_only():
    eng = Engine()
    s = eng.run_until(100 * NS_PER_S)
    assert s.events_processed == 0
    assert s.clock_ns == 100 * NS_PER_S


def test_events_after_end_stay_pending():
    eng = Engine()
    eng.schedule(10, lambda _: None)
    eng.schedule(11, lambda _: None)
    s = eng.run_until(10)
    assert s.events_processed == 1
    assert eng.pending() == 1


@given(st.lists(st.integers(min_value=0, max_value=1_000), min_size=1, max_size=200))
def test_delivery_is_sorted_by_time_then_insertion(times):
    eng = Engine()
    seen = []
    for i, t in enumerate(times):
        eng.schedule(t, seen.append, (t, i))
    eng.run_until(max(times))
    assert seen == sorted((t, i) for i, t in enumerate(times))


@given(st.lists(st.tuples(st.integers(0, 500), st.integers(0, 50)), min_size=1, max_size=100))
def test_clock_never_decreases(spec):
    eng = Engine()
    clocks = []

    def handler(extra):
        clocks.append(eng.now)
        if extra:
            eng.schedule(eng.now + extra, handler, 0)

    for t, extra in spec:
        eng.schedule(t, handler, extra)
    eng.run_until(10_000)
    assert clocks == sorted(clocks)
