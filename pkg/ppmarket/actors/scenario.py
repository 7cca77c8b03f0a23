"""
End-to-end scenarios: one data owner, a roster of cloud owners (some of them
fraudulent) and one model owner, run to completion under the deterministic
scheduler, then checked against a centralized oracle and the verification
suite.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Set, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..assets import MemberKind
from ..config import LedgerConfig
from ..dataplane import Chunk, LabeledDataset, make_dataset, parse_rows
from ..encoding import sha256
from ..exceptions import ConfigError
from ..fedtrain import ModelParams, TrainingSpec, fed_average, local_train
from ..ledger import Ledger
from ..ledger.events import EventType
from ..offchain import ObjectStore
from .base import Actor, ActorConfig, FraudStrategy
from .cloud_owner import CloudOwner
from .data_owner import DataOwner
from .model_owner import ModelOwner
from .scheduler import Scheduler
from .verification import VerificationReport, attributable, flagged_cis, verify_suite

# Configure logging
logger = logging.getLogger(__name__)


class CloudOwnerSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    fraud: Optional[FraudStrategy] = None


class ScenarioExpectation(BaseModel):
    """What a correct run of this scenario looks like."""
    model_config = ConfigDict(extra="forbid")

    flagged: int = Field(default=0, ge=0)
    quorum_failure: bool = False


class ScenarioConfig(BaseModel):
    """Scenario definition file (JSON)."""
    model_config = ConfigDict(extra="forbid")

    name: str
    seed: int = 0
    m: int = Field(default=4, ge=2)
    n: int = Field(default=3, ge=1)
    rounds: int = Field(default=2, ge=1)
    rows: int = Field(default=240, ge=1)
    features: int = Field(default=3, ge=1)
    label_count: int = Field(default=3, ge=2)
    noise: float = Field(default=0.1, ge=0)
    validation_rows: int = Field(default=40, ge=0)
    training: TrainingSpec = Field(default_factory=lambda: TrainingSpec(learning_rate=0.05, local_epochs=1))
    cloud_owners: List[CloudOwnerSpec] = Field(default_factory=list)
    collude_on: Optional[Tuple[int, int]] = None
    data_claim_q: int = Field(default=2, ge=1)
    expect: ScenarioExpectation = Field(default_factory=ScenarioExpectation)

    @model_validator(mode="after")
    def fill_roster(self):
        if not self.cloud_owners:
            self.cloud_owners = [CloudOwnerSpec(name=f"co-{i}") for i in range(self.m * self.n)]
        names = [co.name for co in self.cloud_owners]
        if len(set(names)) != len(names):
            raise ValueError("cloud owner names must be unique")
        if len(self.cloud_owners) < self.m * self.n:
            raise ValueError(
                f"a {self.m}x{self.n} plan needs {self.m * self.n} cloud owners, the roster lists {len(self.cloud_owners)}"
            )
        if self.collude_on is not None:
            subset, replica = self.collude_on
            if not (0 <= subset < self.m and 0 <= replica < self.n):
                raise ValueError(f"collude_on {self.collude_on} outside the {self.m}x{self.n} plan")
        return self


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    """Read a scenario file. Raises ConfigError on unreadable or invalid content."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return ScenarioConfig.model_validate(raw)
    except OSError as e:
        raise ConfigError(f"cannot read scenario {path}: {e}") from e
    except (json.JSONDecodeError, ValidationError) as e:
        raise ConfigError(f"invalid scenario {path}: {e}") from e


def actor_seed(run_seed: int, name: str) -> bytes:
    return sha256(f"{run_seed}|{name}".encode("utf-8"))


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    seed: int
    ledger: Ledger
    store: ObjectStore
    do: DataOwner
    cos: List[CloudOwner]
    mo: ModelOwner
    oracle: Optional[ModelParams] = None
    reports: List[VerificationReport] = field(default_factory=list)

    @property
    def actors(self) -> List[Actor]:
        return [self.do, *self.cos, self.mo]

    @property
    def model(self) -> ModelParams:
        return self.mo.global_params

    @property
    def flagged(self) -> Set[str]:
        return flagged_cis(self.ledger)

    @property
    def tx_types(self) -> Set[str]:
        return {btx.tx.tx_type for block in self.ledger.blocks for btx in block.txs}

    @property
    def matches_oracle(self) -> bool:
        return self.oracle is not None and self.model.weights == self.oracle.weights

    def failures(self) -> List[VerificationReport]:
        return [r for r in self.reports if not r.passed]

    def unexplained_failures(self) -> List[VerificationReport]:
        flagged = self.flagged
        return [r for r in self.failures() if not attributable(r, self.ledger, flagged)]

    def meets_expectations(self) -> bool:
        """Outcome, flag count and verification verdicts all as the scenario expects."""
        expect = self.config.expect
        if expect.quorum_failure:
            return self.mo.failure is not None and not self.mo.finished
        return (
            self.mo.finished
            and self.matches_oracle
            and len(self.flagged) == expect.flagged
            and not self.unexplained_failures()
        )

    def actor_log(self) -> List[Dict[str, Any]]:
        entries = [entry for actor in self.actors for entry in actor.log]
        return sorted(entries, key=lambda e: e["t"])


def centralized_oracle(result: ScenarioResult, spec: TrainingSpec) -> ModelParams:
    """Replay the ledger's round selections centrally on the data owner's chunks."""
    chunks: Dict[str, Chunk] = {result.do.dss_ids[c.subset_index]: c for c in result.do.chunks}
    params = ModelParams.zeros(result.config.features)
    for event in result.ledger.events:
        if event.event_type != EventType.ROUND_STARTED or event.payload["tc"] != result.mo.tc_id:
            continue
        if not event.payload["tj_ids"]:
            continue
        trained = []
        for dss_id in event.payload["cur_dss_ids"]:
            rows = parse_rows(chunks[dss_id].chunk_bytes)
            trained.append((local_train(params, rows, spec), len(rows)))
        params = fed_average(trained)
    return params


def run_scenario(cfg: ScenarioConfig, seed: Optional[int] = None,
                 ledger_config: Optional[LedgerConfig] = None) -> ScenarioResult:
    """Run a scenario end to end and verify it.

    Args:
        cfg: Scenario definition
        seed: Overrides cfg.seed when given
        ledger_config: Block formation settings, the global config by default

    Returns:
        ScenarioResult with the ledger, object store, actors, oracle and reports
    """
    seed = cfg.seed if seed is None else seed
    logger.info(f"Running scenario {cfg.name} with seed {seed}")
    pool = make_dataset(cfg.rows + cfg.validation_rows, cfg.features, cfg.label_count, seed, cfg.noise)
    data = LabeledDataset(rows=pool.rows[:cfg.rows], label_count=cfg.label_count)
    validation = pool.rows[cfg.rows:]

    ledger = Ledger(ledger_config)
    store = ObjectStore()
    scheduler = Scheduler(ledger, store, run_tag=f"{cfg.name}|{seed}")

    do = DataOwner(
        ActorConfig(name="do-0", role=MemberKind.DO, seed=actor_seed(seed, "do-0")),
        data, cfg.m, cfg.n, collude_on=cfg.collude_on,
    )
    cos = [
        CloudOwner(ActorConfig(name=spec.name, role=MemberKind.CO, seed=actor_seed(seed, spec.name), fraud=spec.fraud))
        for spec in cfg.cloud_owners
    ]
    mo = ModelOwner(
        ActorConfig(name="mo-0", role=MemberKind.MO, seed=actor_seed(seed, "mo-0"),
                    rounds=cfg.rounds, quorum_q=cfg.data_claim_q),
        cfg.features, cfg.training, validation,
    )
    actors: List[Actor] = [do, *cos, mo]
    for actor in actors:
        scheduler.register(actor)
    for actor in actors:
        actor.start()

    scheduler.run_until(lambda: all(a.registered for a in actors) and mo.mod_id is not None,
                        what="member registration")
    do.distribute([co.member_id for co in cos])
    scheduler.run_until(lambda: do.distribution_settled, what="data distribution")
    mo.train(do.ds_id)
    scheduler.run_until(lambda: mo.done, what="training")
    scheduler.run_until(lambda: scheduler.quiescent, what="quiescence")

    result = ScenarioResult(config=cfg, seed=seed, ledger=ledger, store=store, do=do, cos=cos, mo=mo)
    if mo.finished:
        result.oracle = centralized_oracle(result, cfg.training)
    result.reports = verify_suite(ledger, store, [a.cfg.endpoint for a in actors], q=cfg.data_claim_q)
    logger.info(
        f"Scenario {cfg.name} done at t={scheduler.now}: {ledger.height} blocks, "
        f"{len(result.flagged)} flagged, oracle match {result.matches_oracle}"
    )
    return result


def write_artifacts(result: ScenarioResult, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """Write ledger, object store, actor log, model and reports under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "ledger": result.ledger.export(out / "ledger.ndjson"),
        "objects": result.store.dump(out / "objects.json"),
        "actors": out / "actors.ndjson",
        "model": out / "model.json",
        "reports": out / "reports.json",
    }
    with paths["actors"].open("w", encoding="utf-8") as fh:
        for entry in result.actor_log():
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    model = {
        "scenario": result.config.name,
        "seed": result.seed,
        "weights": result.model.weights,
        "oracle": result.oracle.weights if result.oracle else None,
        "matches_oracle": result.matches_oracle,
        "history": result.mo.history,
        "flagged": sorted(result.flagged),
        "quorum_failure": result.mo.failure,
        "data_claim_q": result.config.data_claim_q,
    }
    paths["model"].write_text(json.dumps(model, indent=2), encoding="utf-8")
    paths["reports"].write_text(
        json.dumps([r.model_dump(mode="json") for r in result.reports], indent=2), encoding="utf-8"
    )
    logger.info(f"Artifacts written to {out}")
    return paths
