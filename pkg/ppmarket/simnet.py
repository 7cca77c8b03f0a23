"""
Network simulator and load generator for the marketplace ledger.

Each transaction goes client -> endorsing peers -> client endorsement check ->
orderer -> block cut -> commit notification. Stations are single FIFO
servers with deterministic service times, so every queue reduces to a Lindley
recursion over the arrival times and a whole run is a handful of numpy passes.

All times are milliseconds. Runs are deterministic per seed.
"""
import csv
import itertools
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .config import LedgerConfig, SimConfig, config
from .encoding import seed_int, sha256
from .exceptions import ConfigError
from .ledger.envelope import TxType

# Configure logging
logger = logging.getLogger(__name__)

TXS_PER_TRAINING = len(TxType)

CSV_COLUMNS = [
    "topology", "sites", "peers", "send_rate", "tx_type", "throughput_tps",
    "lat_mean_ms", "lat_p50_ms", "lat_p95_ms", "models_per_second", "seed",
]


def uniform_mix() -> Dict[str, float]:
    return {t.value: 1.0 / TXS_PER_TRAINING for t in TxType}


class NetworkTopology(BaseModel):
    """Peers spread over one or two datacenters; the client sits in the first."""
    model_config = ConfigDict(frozen=True)

    peer_count: int = Field(ge=1)
    sites: int = Field(default=1, ge=1, le=2)
    intra_dc_ms: Tuple[float, float] = Field(default_factory=lambda: config.sim.intra_dc_ms)
    inter_dc_ms: Tuple[float, float] = Field(default_factory=lambda: config.sim.inter_dc_ms)

    @field_validator("intra_dc_ms", "inter_dc_ms")
    @classmethod
    def validate_range(cls, v):
        lo, hi = v
        if lo < 0 or lo > hi:
            raise ValueError(f"latency range must satisfy 0 <= lo <= hi, got {v}")
        return v

    @property
    def label(self) -> str:
        return f"{self.sites}dc-{self.peer_count}p"

    @property
    def quorum(self) -> int:
        """Endorsements needed per transaction: a majority plus one, capped at the peer count."""
        return min(self.peer_count, (self.peer_count + 1) // 2 + 1)

    def peer_sites(self) -> np.ndarray:
        # Round-robin placement keeps the sites within one peer of each other
        return np.arange(self.peer_count) % self.sites

    def link_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """Per-peer (lo, hi) round-trip bounds from the client."""
        remote = self.peer_sites() != 0
        lo = np.where(remote, self.inter_dc_ms[0], self.intra_dc_ms[0])
        hi = np.where(remote, self.inter_dc_ms[1], self.intra_dc_ms[1])
        return lo, hi


class LoadProfile(BaseModel):
    """Open-loop fixed-rate load."""
    model_config = ConfigDict(frozen=True)

    send_rate: float = Field(gt=0)
    total_txs: int = Field(default_factory=lambda: config.sim.total_txs, ge=1)
    mix: Dict[str, float] = Field(default_factory=uniform_mix)
    # Commits later than this are counted as still queued
    horizon_ms: Optional[float] = Field(default=None, gt=0)

    @field_validator("mix")
    @classmethod
    def validate_mix(cls, v):
        unknown = [name for name in v if TxType.parse(name) is None]
        if unknown:
            raise ValueError(f"unknown transaction types in mix: {unknown}")
        if any(share < 0 for share in v.values()):
            raise ValueError("mix proportions must be non-negative")
        if abs(sum(v.values()) - 1.0) > 1e-9:
            raise ValueError(f"mix proportions must sum to 1, got {sum(v.values())}")
        return v


class LatencyStats(BaseModel):
    committed: float = 0.0
    throughput_tps: float = 0.0
    lat_mean_ms: float = 0.0
    lat_p50_ms: float = 0.0
    lat_p95_ms: float = 0.0


class MetricsReport(BaseModel):
    topology: NetworkTopology
    profile: LoadProfile
    seed: int
    runs: int = 1
    aggregate: LatencyStats
    per_type: Dict[str, LatencyStats]
    submitted: float
    committed: float
    queued: float
    # Transactions submitted but not yet through the orderer when the last one is sent
    peak_backlog: float

    @property
    def throughput(self) -> float:
        return self.aggregate.throughput_tps


def models_per_second(report: Union[MetricsReport, float]) -> float:
    """Complete model trainings per second the measured throughput supports."""
    throughput = report.throughput if isinstance(report, MetricsReport) else float(report)
    return throughput / TXS_PER_TRAINING


# === Stations ===

def fifo_departures(arrivals: np.ndarray, service_ms: float) -> np.ndarray:
    """Departure times of a single FIFO server with constant service time.

    arrivals must be sorted. d[i] = max(a[i], d[i-1]) + s unrolls to
    (i + 1) * s + max over j <= i of (a[j] - j * s).
    """
    idx = np.arange(arrivals.size)
    return service_ms * (idx + 1) + np.maximum.accumulate(arrivals - idx * service_ms)


def _through_station(arrivals: np.ndarray, service_ms: float) -> np.ndarray:
    order = np.argsort(arrivals, kind="stable")
    departures = np.empty_like(arrivals)
    departures[order] = fifo_departures(arrivals[order], service_ms)
    return departures


def block_cut_times(ordered: np.ndarray, block_size: int, timeout_ms: float) -> np.ndarray:
    """Cut time of the block holding each transaction, ordered ascending.

    A block closes when it holds block_size transactions or timeout_ms after
    its first transaction arrived, whichever comes first.
    """
    cuts = np.empty_like(ordered)
    i, n = 0, ordered.size
    while i < n:
        deadline = ordered[i] + timeout_ms
        full = i + block_size - 1
        if full < n and ordered[full] <= deadline:
            end, at = full + 1, ordered[full]
        else:
            end, at = int(np.searchsorted(ordered, deadline, side="right")), deadline
        cuts[i:end] = at
        i = end
    return cuts


def assign_types(mix: Dict[str, float], n: int, rng: np.random.Generator) -> Tuple[List[str], np.ndarray]:
    """Split n transactions over the mix by largest remainder, then shuffle."""
    names = list(mix)
    raw = np.array([mix[name] for name in names]) * n
    counts = np.floor(raw).astype(int)
    short = n - int(counts.sum())
    if short > 0:
        counts[np.argsort(-(raw - counts), kind="stable")[:short]] += 1
    labels = np.repeat(np.arange(len(names)), counts)
    rng.shuffle(labels)
    return names, labels


def _stats(submit: np.ndarray, commit: np.ndarray, done: np.ndarray, send_rate: float) -> LatencyStats:
    committed = int(done.sum())
    if committed == 0:
        return LatencyStats()
    latency = (commit - submit)[done]
    span_s = (commit[done].max() - submit.min()) / 1000.0
    # A window shorter than the send schedule would report more than was sent
    duration = max(span_s, committed / send_rate)
    return LatencyStats(
        committed=committed,
        throughput_tps=committed / duration,
        lat_mean_ms=float(latency.mean()),
        lat_p50_ms=float(np.percentile(latency, 50)),
        lat_p95_ms=float(np.percentile(latency, 95)),
    )


# === Runs ===

def run(topology: NetworkTopology, profile: LoadProfile, seed: int,
        sim: Optional[SimConfig] = None, ledger_config: Optional[LedgerConfig] = None) -> MetricsReport:
    """Simulate one load run.

    Args:
        topology: Peer placement and link latencies
        profile: Send rate, transaction count and mix
        seed: Seeds every random draw of the run
        sim: Station service rates, the global config by default
        ledger_config: Block formation policy, the global config by default

    Returns:
        MetricsReport with aggregate and per-type statistics
    """
    sim = sim or config.sim
    ledger_config = ledger_config or config.ledger
    rng = np.random.default_rng(seed)
    n = profile.total_txs
    q = topology.quorum

    submit = np.arange(n) * (1000.0 / profile.send_rate)
    names, labels = assign_types(profile.mix, n, rng)

    lo, hi = topology.link_bounds()
    if q < topology.peer_count:
        chosen = np.argpartition(rng.random((n, topology.peer_count)), q - 1, axis=1)[:, :q]
    else:
        chosen = np.broadcast_to(np.arange(topology.peer_count), (n, q))
    endorsed = submit + rng.uniform(lo[chosen], hi[chosen]).max(axis=1)

    checked = _through_station(endorsed, q * 1000.0 / sim.endorsement_rate)
    ordered = _through_station(checked, 1000.0 / sim.orderer_rate)

    order = np.argsort(ordered, kind="stable")
    cut = np.empty_like(ordered)
    cut[order] = block_cut_times(ordered[order], ledger_config.block_size, ledger_config.block_timeout_ms)
    commit = cut + rng.uniform(lo[0], hi[0], n)

    done = commit <= profile.horizon_ms if profile.horizon_ms is not None else np.ones(n, dtype=bool)
    per_type = {
        name: _stats(submit[labels == k], commit[labels == k], done[labels == k], profile.send_rate)
        for k, name in enumerate(names)
        if (labels == k).any()
    }
    committed = int(done.sum())
    report = MetricsReport(
        topology=topology,
        profile=profile,
        seed=seed,
        aggregate=_stats(submit, commit, done, profile.send_rate),
        per_type=per_type,
        submitted=n,
        committed=committed,
        queued=n - committed,
        peak_backlog=int((ordered > submit[-1]).sum()),
    )
    logger.debug(
        f"Run {topology.label}@{profile.send_rate:g} seed {seed}: "
        f"{report.throughput:.1f} tps, mean latency {report.aggregate.lat_mean_ms:.1f} ms"
    )
    return report


def _mean_stats(stats: Sequence[LatencyStats]) -> LatencyStats:
    fields = LatencyStats.model_fields
    return LatencyStats(**{name: float(np.mean([getattr(s, name) for s in stats])) for name in fields})


def mean_report(reports: Sequence[MetricsReport], seed: int) -> MetricsReport:
    """Average several runs of one cell into a single report."""
    first = reports[0]
    return MetricsReport(
        topology=first.topology,
        profile=first.profile,
        seed=seed,
        runs=len(reports),
        aggregate=_mean_stats([r.aggregate for r in reports]),
        per_type={
            name: _mean_stats([r.per_type[name] for r in reports])
            for name in first.per_type
        },
        submitted=float(np.mean([r.submitted for r in reports])),
        committed=float(np.mean([r.committed for r in reports])),
        queued=float(np.mean([r.queued for r in reports])),
        peak_backlog=float(np.mean([r.peak_backlog for r in reports])),
    )


def cell_seed(seed: int, topology: NetworkTopology, profile: LoadProfile, run_index: int) -> int:
    return seed_int(sha256(f"{seed}|{topology.label}|{profile.send_rate:g}|{run_index}".encode("utf-8")))


def sweep(cells: Sequence[Tuple[NetworkTopology, LoadProfile]], seed: int = 0,
          runs: Optional[int] = None, sim: Optional[SimConfig] = None,
          ledger_config: Optional[LedgerConfig] = None) -> List[MetricsReport]:
    """Run every cell `runs` times with derived seeds and report the means."""
    runs = runs or (sim or config.sim).runs
    reports = []
    for topology, profile in cells:
        logger.info(f"Sweeping {topology.label} at {profile.send_rate:g} tx/s ({runs} runs)")
        per_run = [
            run(topology, profile, cell_seed(seed, topology, profile, i), sim, ledger_config)
            for i in range(runs)
        ]
        reports.append(mean_report(per_run, seed))
    return reports


def write_csv(reports: Sequence[MetricsReport], path: Union[str, Path]) -> Path:
    """One row per (cell, tx_type), plus an `all` row carrying the aggregate."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for report in reports:
            rows = [("all", report.aggregate)] + sorted(report.per_type.items())
            for tx_type, stats in rows:
                writer.writerow([
                    report.topology.label,
                    report.topology.sites,
                    report.topology.peer_count,
                    f"{report.profile.send_rate:g}",
                    tx_type,
                    f"{stats.throughput_tps:.3f}",
                    f"{stats.lat_mean_ms:.3f}",
                    f"{stats.lat_p50_ms:.3f}",
                    f"{stats.lat_p95_ms:.3f}",
                    f"{models_per_second(stats.throughput_tps):.3f}",
                    report.seed,
                ])
    logger.info(f"Wrote {len(reports)} cells to {path}")
    return path


def per_type_spread(report: MetricsReport) -> float:
    """(max - min) of the per-type throughputs relative to their mean."""
    values = np.array([s.throughput_tps for s in report.per_type.values()])
    if values.size == 0 or values.mean() == 0:
        return 0.0
    return float((values.max() - values.min()) / values.mean())


# === Sweep files ===

class SweepConfig(BaseModel):
    """Benchmark sweep definition file (JSON)."""
    model_config = ConfigDict(extra="forbid")

    name: str = "sweep"
    seed: int = 0
    peers: List[int] = Field(default_factory=lambda: [4, 8, 16, 24])
    send_rates: List[float] = Field(default_factory=lambda: [500.0, 1000.0, 1500.0])
    sites: List[int] = Field(default_factory=lambda: [1, 2])
    total_txs: Optional[int] = Field(default=None, ge=1)
    runs: Optional[int] = Field(default=None, ge=1)
    mix: Optional[Dict[str, float]] = None
    intra_dc_ms: Optional[Tuple[float, float]] = None
    inter_dc_ms: Optional[Tuple[float, float]] = None

    @model_validator(mode="after")
    def check_axes(self):
        if not self.peers or not self.send_rates or not self.sites:
            raise ValueError("peers, send_rates and sites must each list at least one value")
        return self

    def cells(self) -> List[Tuple[NetworkTopology, LoadProfile]]:
        links = {k: v for k, v in (("intra_dc_ms", self.intra_dc_ms), ("inter_dc_ms", self.inter_dc_ms)) if v}
        load = {k: v for k, v in (("total_txs", self.total_txs), ("mix", self.mix)) if v is not None}
        return [
            (NetworkTopology(peer_count=peers, sites=sites, **links), LoadProfile(send_rate=rate, **load))
            for sites, peers, rate in itertools.product(self.sites, self.peers, self.send_rates)
        ]


def load_sweep(path: Union[str, Path]) -> SweepConfig:
    """Read a sweep file. Raises ConfigError on unreadable or invalid content."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        sweep_cfg = SweepConfig.model_validate(raw)
        sweep_cfg.cells()
        return sweep_cfg
    except OSError as e:
        raise ConfigError(f"cannot read sweep {path}: {e}") from e
    except (json.JSONDecodeError, ValidationError) as e:
        raise ConfigError(f"invalid sweep {path}: {e}") from e
