import numpy as np
import pytest

from aqmsim.engine import NS_PER_MS, NS_PER_S, Engine
from aqmsim.netsim import ConfigError, Link, ScenarioConfig, Simulation, preset_config, run_scenario, serialization_ns

MS = NS_PER_MS


def test_base_rtt_and_bdp():
    cfg = preset_config("proof_of_concept", owd=48 * MS)
    assert cfg.base_rtt() == 100 * MS
    cfg = preset_config("proof_of_concept", owd=248 * MS)
    assert cfg.base_rtt() == 500 * MS
    assert cfg.capacity_bytes == 625_000


def test_rtt_mix_groups():
    cfg = preset_config("rtt_mix")
    assert cfg.access_owd == 1 * MS and cfg.far_access_owd == 201 * MS
    assert cfg.base_rtt(False) == 100 * MS
    assert cfg.base_rtt(True) == 500 * MS
    sim = Simulation(cfg.with_(duration=1 * NS_PER_S))
    assert sorted(sim.metrics.classes) == ["CBR-100", "CBR-500", "FTP-100", "FTP-500", "SF-100", "SF-500"]


def test_serialization():
    assert serialization_ns(1500, 10e6) == 1_200_000
    assert serialization_ns(1500, 100e6) == 120_000


def test_link_back_to_back_spacing():
    link = Link(10e6, 5 * MS)
    arrivals = [link.transit(0, 1500) for _ in range(5)]
    assert np.diff(arrivals).tolist() == [1_200_000] * 4
    assert arrivals[0] == 5 * MS + 1_200_000


def test_link_preserves_order():
    link = Link(10e6, 1 * MS)
    rng = np.random.default_rng(1)
    t, out = 0, []
    for size in rng.integers(40, 1500, 200):
        t += int(rng.integers(0, 2 * MS))
        out.append(link.transit(t, int(size)))
    assert out == sorted(out)


@pytest.mark.parametrize("bad", [
    dict(aqm="red"), dict(n_ftp=-1), dict(n_ftp=0), dict(duration=0), dict(tau_dd=5 * MS),
    dict(pie_estimator="magic"), dict(queue_capacity=0),
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        ScenarioConfig(**bad).validate()


@pytest.fixture(scope="module")
def short_runs():
    out = {}
    for aqm in ("dt", "pie", "madpie", "codel"):
        out[aqm] = run_scenario(preset_config("traffic_mix", aqm=aqm, duration=15 * NS_PER_S, seed=3))
    return out


def test_conservation_every_aqm(short_runs):
    for r in short_runs.values():
        assert r.conservation_ok()


def test_utilization_bounded(short_runs):
    for r in short_runs.values():
        assert r.util.max() <= 1.0 + 1e-12
        assert r.util.min() >= 0.0


def test_no_reordering_at_bottleneck(short_runs):
    for r in short_runs.values():
        assert np.all(np.diff(r.tx_end) > 0)
        assert np.all(r.tx_start[1:] >= r.tx_end[:-1])


def test_queuing_delay_bounds(short_runs):
    for r in short_runs.values():
        cfg = r.config
        bound = cfg.capacity_bytes * 8 * NS_PER_S / cfg.bottleneck_rate + serialization_ns(1500, 10e6)
        assert r.qdelay_v.min() >= 0
        assert r.qdelay_v.max() <= bound


def test_pie_never_deterministic(short_runs):
    assert short_runs["pie"].attribution.n_DD == 0
    assert short_runs["dt"].attribution.n_RD == 0


def test_codel_only_codel_or_overflow(short_runs):
    causes = {d.cause.value for d in short_runs["codel"].drop_records}
    assert causes <= {"CodelDrop", "BufferOverflow"}


def test_download_records_complete(short_runs):
    r = short_runs["pie"]
    for d in r.downloads:
        assert d.duration is None or d.duration > 0
        assert d.start + (d.duration or 0) <= r.clock_ns


def test_clock_reads_duration():
    r = run_scenario(preset_config("proof_of_concept", duration=3 * NS_PER_S))
    assert r.clock_ns == 3 * NS_PER_S


def test_single_flow_fills_pipe():
    cfg = ScenarioConfig(aqm="dt", n_ftp=1, duration=40 * NS_PER_S, owd=48 * MS)
    r = run_scenario(cfg)
    assert r.util[10:].mean() >= 0.9


def test_saturated_droptail_utilization():
    r = run_scenario(preset_config("proof_of_concept", aqm="dt", duration=30 * NS_PER_S))
    assert r.util[5:].mean() >= 0.98


def test_same_seed_same_run():
    cfg = preset_config("traffic_mix", aqm="madpie", duration=5 * NS_PER_S, seed=11)
    a, b = run_scenario(cfg), run_scenario(cfg)
    assert a.events == b.events
    assert np.array_equal(a.qdelay_v, b.qdelay_v)
    assert a.drop_records == b.drop_records
    c = run_scenario(cfg.with_(seed=12))
    assert not np.array_equal(a.qdelay_v, c.qdelay_v)


def test_engine_runs_are_independent():
    eng = Engine()
    assert eng.run_until(0).events_processed == 0
