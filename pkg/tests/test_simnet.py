import heapq
from collections import deque

import numpy as np
import pytest

from ppmarket.config import LedgerConfig, SimConfig
from ppmarket.exceptions import ConfigError
from ppmarket.simnet import (
    CSV_COLUMNS,
    TXS_PER_TRAINING,
    LoadProfile,
    NetworkTopology,
    SweepConfig,
    assign_types,
    block_cut_times,
    fifo_departures,
    load_sweep,
    models_per_second,
    per_type_spread,
    run,
    sweep,
    write_csv,
)

from conftest import SCENARIOS

SIM = SimConfig(orderer_rate=1200, endorsement_rate=3300, total_txs=20_000, runs=1)
BLOCKS = LedgerConfig(block_size=500, block_timeout_ms=1000)


def _run(peers, sites, rate, total=20_000, seed=1, **profile):
    topology = NetworkTopology(peer_count=peers, sites=sites)
    return run(topology, LoadProfile(send_rate=rate, total_txs=total, **profile), seed, SIM, BLOCKS)


# === Calibration ===

def test_single_site_keeps_up_with_1000_tps():
    report = _run(4, 1, 1000)
    assert 990 < report.throughput <= 1000
    assert models_per_second(report) == pytest.approx(66.6, abs=0.7)
    assert report.queued == 0


def test_doubling_peers_across_two_sites_costs_a_third_of_throughput():
    small = _run(4, 2, 1000, total=100_000)
    large = _run(8, 2, 1000, total=100_000)
    assert 1.40 < small.throughput / large.throughput < 1.56


def test_latency_explodes_past_saturation():
    steady = _run(4, 1, 1000)
    overloaded = _run(4, 1, 1500)
    assert overloaded.aggregate.lat_mean_ms > 2 * steady.aggregate.lat_mean_ms
    assert overloaded.throughput < 1150
    assert overloaded.peak_backlog > steady.peak_backlog


def test_throughput_grows_with_load_below_saturation():
    assert _run(4, 1, 500).throughput < _run(4, 1, 1000).throughput


def test_remote_peers_add_latency():
    assert _run(4, 2, 500).aggregate.lat_mean_ms > _run(4, 1, 500).aggregate.lat_mean_ms


# Each step delays every endorsement by more than one block timeout
INTER_DC_STEPS = [(300.0, 3000.0), (1500.0, 4500.0), (3000.0, 6000.0), (6000.0, 9000.0)]


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_slower_inter_dc_links_never_raise_throughput(seed):
    profile = LoadProfile(send_rate=500, total_txs=5000)
    throughputs = [
        run(NetworkTopology(peer_count=4, sites=2, inter_dc_ms=bounds), profile, seed, SIM, BLOCKS).throughput
        for bounds in INTER_DC_STEPS
    ]
    assert all(later <= earlier for earlier, later in zip(throughputs, throughputs[1:]))
    assert throughputs[-1] < throughputs[0]


def test_saturated_latency_grows_with_the_run_length():
    means = [_run(4, 1, 1500, total=total).aggregate.lat_mean_ms for total in (4000, 8000, 16_000, 32_000)]
    assert all(later > earlier for earlier, later in zip(means, means[1:]))


def test_models_per_second():
    assert models_per_second(975.0) == pytest.approx(65.0)
    assert models_per_second(0.0) == 0.0
    assert models_per_second(1050.0) == pytest.approx(70.0)
    assert TXS_PER_TRAINING == 15


# === Accounting ===

def test_horizon_splits_committed_from_queued():
    report = _run(4, 1, 1500, horizon_ms=5000)
    assert 0 < report.committed < report.submitted
    assert report.committed + report.queued == report.submitted
    assert report.aggregate.committed == report.committed
    assert sum(s.committed for s in report.per_type.values()) == report.committed


def test_per_type_statistics_cover_the_mix():
    report = _run(4, 1, 500, total=30_000)
    assert len(report.per_type) == TXS_PER_TRAINING
    assert per_type_spread(report) < 0.05
    single = _run(4, 1, 500, total=1_000, mix={"UpdateTJ": 1.0})
    assert list(single.per_type) == ["UpdateTJ"]
    assert single.per_type["UpdateTJ"].committed == 1_000


def test_runs_are_deterministic_per_seed():
    assert _run(8, 2, 1000, total=5_000, seed=3) == _run(8, 2, 1000, total=5_000, seed=3)
    assert _run(8, 2, 1000, total=5_000, seed=3) != _run(8, 2, 1000, total=5_000, seed=4)


# === Stations ===

def test_fifo_departures():
    arrivals = np.array([0.0, 0.0, 0.0, 10.0])
    assert fifo_departures(arrivals, 2.0).tolist() == [2.0, 4.0, 6.0, 12.0]
    assert fifo_departures(np.array([]), 2.0).size == 0


def _event_loop_departures(arrivals, service_ms):
    """Single FIFO server driven by a (time, seq, kind) event heap."""
    events = [(t, seq, "arrive") for seq, t in enumerate(arrivals)]
    heapq.heapify(events)
    queue, busy, done, seq = deque(), False, [], len(arrivals)
    while events:
        now, _, kind = heapq.heappop(events)
        if kind == "done":
            done.append(now)
            busy = False
        else:
            queue.append(now)
        if queue and not busy:
            queue.popleft()
            busy = True
            heapq.heappush(events, (now + service_ms, seq, "done"))
            seq += 1
    return np.array(done)


def test_fifo_departures_match_an_event_loop():
    rng = np.random.default_rng(5)
    for _ in range(50):
        arrivals = np.sort(rng.exponential(1.0, size=int(rng.integers(1, 300))).cumsum())
        service = float(rng.uniform(0.2, 2.0))
        np.testing.assert_allclose(fifo_departures(arrivals, service),
                                   _event_loop_departures(arrivals.tolist(), service), rtol=1e-9)


def test_block_cut_times():
    cuts = block_cut_times(np.array([0.0, 1.0, 2.0, 15.0, 30.0]), 2, 10)
    assert cuts.tolist() == [1.0, 1.0, 12.0, 25.0, 40.0]


def test_assign_types_uses_largest_remainder():
    names, labels = assign_types({"CreateDO": 0.5, "CreateCO": 0.5}, 3, np.random.default_rng(0))
    assert names == ["CreateDO", "CreateCO"]
    assert sorted(np.bincount(labels).tolist()) == [1, 2]


def test_quorum_is_a_majority_plus_one():
    assert [NetworkTopology(peer_count=p).quorum for p in (1, 2, 3, 4, 8, 16, 24)] == [1, 2, 3, 3, 5, 9, 13]
    assert NetworkTopology(peer_count=5, sites=2).peer_sites().tolist() == [0, 1, 0, 1, 0]
    assert NetworkTopology(peer_count=8, sites=2).label == "2dc-8p"


# === Validation and sweeps ===

def test_topology_and_profile_validation():
    with pytest.raises(ValueError):
        NetworkTopology(peer_count=0)
    with pytest.raises(ValueError):
        NetworkTopology(peer_count=4, sites=3)
    with pytest.raises(ValueError):
        NetworkTopology(peer_count=4, intra_dc_ms=(10.0, 1.0))
    with pytest.raises(ValueError):
        LoadProfile(send_rate=0, total_txs=10)
    with pytest.raises(ValueError):
        LoadProfile(send_rate=100, total_txs=10, mix={"Transfer": 1.0})
    with pytest.raises(ValueError):
        LoadProfile(send_rate=100, total_txs=10, mix={"CreateDO": 0.5, "CreateCO": 0.4})
    with pytest.raises(ValueError):
        LoadProfile(send_rate=100, total_txs=10, mix={"CreateDO": 1.5, "CreateCO": -0.5})


def test_default_sweep_has_24_cells():
    cells = SweepConfig().cells()
    assert len(cells) == 24
    assert {(t.sites, t.peer_count, p.send_rate) for t, p in cells} == {
        (s, n, r) for s in (1, 2) for n in (4, 8, 16, 24) for r in (500.0, 1000.0, 1500.0)
    }
    assert len(load_sweep(SCENARIOS / "bench-default.json").cells()) == 24


def test_csv_is_byte_identical_across_runs(tmp_path):
    cells = SweepConfig(peers=[4, 8], send_rates=[500, 1000], sites=[1], total_txs=2_000).cells()
    first = write_csv(sweep(cells, seed=5, runs=30, sim=SIM, ledger_config=BLOCKS), tmp_path / "a.csv")
    second = write_csv(sweep(cells, seed=5, runs=30, sim=SIM, ledger_config=BLOCKS), tmp_path / "b.csv")
    assert first.read_bytes() == second.read_bytes()

    lines = first.read_text(encoding="utf-8").splitlines()
    assert lines[0].split(",") == CSV_COLUMNS
    assert len(lines) == 1 + 4 * (1 + TXS_PER_TRAINING)
    assert lines[1].split(",")[:5] == ["1dc-4p", "1", "4", "500", "all"]


def test_sweep_averages_its_runs():
    cells = SweepConfig(peers=[4], send_rates=[1000], sites=[1], total_txs=1_000).cells()
    (report,) = sweep(cells, seed=0, runs=3, sim=SIM, ledger_config=BLOCKS)
    assert report.runs == 3
    assert report.submitted == 1_000


def test_load_sweep_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_sweep(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text('{"peers": [], "send_rates": [500]}', encoding="utf-8")
    with pytest.raises(ConfigError):
        load_sweep(bad)
    bad.write_text('{"sites": [3]}', encoding="utf-8")
    with pytest.raises(ConfigError):
        load_sweep(bad)
    bad.write_text('{"rate": 5}', encoding="utf-8")
    with pytest.raises(ConfigError):
        load_sweep(bad)
