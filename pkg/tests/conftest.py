"""
Shared fixtures: a ledger driver that commits one transaction per block and a
pre-built market (members, dataset, verified cloud instances, model).
"""
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, List

import pytest

from ppmarket.actors import ScenarioResult, load_scenario, run_scenario
from ppmarket.config import LedgerConfig
from ppmarket.encoding import sha256_hex
from ppmarket.fedtrain import TrainingSpec
from ppmarket.ledger import Ledger, TransactionEnvelope, TxResult, TxType

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
LEDGER = LedgerConfig(block_size=500, block_timeout_ms=1000)


@lru_cache(maxsize=None)
def bundled(name: str) -> ScenarioResult:
    """Run a bundled scenario once per test session; callers must not mutate the result."""
    return run_scenario(load_scenario(SCENARIOS / f"{name}.json"), ledger_config=LEDGER)


class ChainDriver:
    """Submits envelopes as a given caller and commits each in its own block."""

    def __init__(self, ledger: Ledger):
        self.ledger = ledger
        self.now = 0
        self.counter = 0

    def envelope(self, tx_type: TxType, caller: str, *args: str) -> TransactionEnvelope:
        self.counter += 1
        return TransactionEnvelope(
            tx_id=f"tx-{self.counter}",
            tx_type=tx_type.value,
            caller=caller,
            args=list(args),
            submit_time=self.now,
        )

    def commit(self) -> None:
        self.now += self.ledger.config.block_timeout_ms
        self.ledger.tick(self.now)

    def call(self, tx_type: TxType, caller: str, *args: str) -> TxResult:
        env = self.envelope(tx_type, caller, *args)
        self.ledger.submit(env)
        self.commit()
        return self.ledger.result(env.tx_id)

    def ok(self, tx_type: TxType, caller: str, *args: str) -> str:
        result = self.call(tx_type, caller, *args)
        assert result.valid, f"{tx_type.value} rejected: {result.error}"
        return result.value

    def asset(self, kind: str, asset_id: str):
        return self.ledger.get_asset(f"{kind}:{asset_id}")


@dataclass
class Market:
    chain: ChainDriver
    do: str
    mo: str
    cos: List[str]
    ds: str
    dss: List[str]
    cis: Dict[str, List[str]] = field(default_factory=dict)
    co_of: Dict[str, str] = field(default_factory=dict)
    mod: str = ""

    def train_couple(self) -> str:
        tc = self.chain.ok(TxType.REQUEST_TC, self.mo, self.ds, self.mod)
        self.chain.ok(TxType.APPROVE_TC, self.do, tc)
        return tc

    def all_cis(self) -> List[str]:
        return [ci for dss in self.dss for ci in self.cis[dss]]


def build_market(chain: ChainDriver, m: int = 2, n: int = 3, verify: bool = True) -> Market:
    do = chain.ok(TxType.CREATE_DO, "", "alice", "acme", "1")
    cos = [chain.ok(TxType.CREATE_CO, "", f"cloud-{i}") for i in range(m * n)]
    mo = chain.ok(TxType.CREATE_MO, "", "bob")
    ds = chain.ok(TxType.CREATE_DS, do, str(m), str(n), "rows=100")
    dss = [chain.ok(TxType.CREATE_DSS, do, ds, str(i)) for i in range(m)]
    market = Market(chain=chain, do=do, mo=mo, cos=cos, ds=ds, dss=dss)
    for i, dss_id in enumerate(dss):
        market.cis[dss_id] = []
        for r in range(n):
            co = cos[i * n + r]
            ci = chain.ok(TxType.CREATE_CI, do, dss_id, co)
            market.cis[dss_id].append(ci)
            market.co_of[ci] = co
    for k, ci in enumerate(market.all_cis()):
        chain.ok(TxType.JOIN_CI, market.co_of[ci], ci, sha256_hex(f"chunk|{ci}".encode()), f"{k:032x}")
        if verify:
            chain.ok(TxType.VERIFY_CI, do, ci, "true")
    spec = TrainingSpec(learning_rate=0.1, local_epochs=1, mask_key_ref="keys/mo")
    market.mod = chain.ok(TxType.CREATE_MOD, mo, "linear-regression", "models/init", spec.model_dump_json(), "ab" * 32)
    return market


@pytest.fixture
def ledger_config():
    return LedgerConfig(block_size=500, block_timeout_ms=1000)


@pytest.fixture
def ledger(ledger_config):
    return Ledger(ledger_config)


@pytest.fixture
def chain(ledger):
    return ChainDriver(ledger)


@pytest.fixture
def market(chain):
    return build_market(chain)


@pytest.fixture
def scenarios_dir():
    return SCENARIOS
