"""
Model owner actor: registers a model, requests and drives training rounds,
checks every replica's upload and aggregates one consensus model per subset.
"""
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

from ..assets import TJStatus
from ..dataplane import Row
from ..encoding import sha256, sha256_hex
from ..exceptions import QuorumFailure
from ..fedtrain import MaskedModel, ModelParams, TrainingSpec, evaluate, fed_average, mask, model_hash, unmask
from ..ledger.envelope import TxResult, TxType
from ..ledger.events import EventType, LedgerEvent
from ..offchain import open_locator
from .base import Actor, ActorConfig

# Configure logging
logger = logging.getLogger(__name__)


def mo_consensus(entries: Sequence[Tuple[str, bytes]], n: int) -> Tuple[bytes, List[str]]:
    """Pick the model most replicas agree on, byte for byte.

    Args:
        entries: (job id, downloaded model bytes) for one subset and round
        n: Replication factor of the dataset

    Returns:
        (winning model bytes, ids of the jobs outside the winning group)

    Raises:
        QuorumFailure: no group holds more than n/2 of the replicas
    """
    groups: Dict[bytes, List[str]] = {}
    for job_id, data in entries:
        groups.setdefault(data, []).append(job_id)
    if not groups:
        raise QuorumFailure("no models to agree on")
    winner = max(groups, key=lambda data: len(groups[data]))
    if 2 * len(groups[winner]) <= n:
        raise QuorumFailure(f"largest agreeing group has {len(groups[winner])} of {n} replicas")
    minority = [job_id for job_id, data in entries if data != winner]
    return winner, minority


class ModelOwner(Actor):
    create_tx = TxType.CREATE_MO

    def __init__(self, cfg: ActorConfig, features: int, spec: TrainingSpec,
                 validation: Optional[List[Row]] = None):
        super().__init__(cfg)
        self.features = features
        self.spec = spec
        self.validation = validation or []
        self.key = sha256(cfg.seed, b"|mask-key")
        self.global_params = ModelParams.zeros(features)
        self.mod_id: Optional[str] = None
        self.tc_id: Optional[str] = None
        self.ds_id: Optional[str] = None
        self.finished = False
        self.failure: Optional[str] = None
        self.history: List[Dict[str, Any]] = []
        self.flagged: List[str] = []
        self._aggregated: set = set()
        self.on(EventType.TC_APPROVED, self._on_tc_approved)
        self.on(EventType.ROUND_STARTED, self._on_round_started)
        self.on(EventType.ROUND_COMPLETE, self._on_round_closed)
        self.on(EventType.FRAUD_FLAGGED, self._on_round_closed)

    @property
    def done(self) -> bool:
        return self.finished or self.failure is not None

    @property
    def key_ref(self) -> str:
        return f"keys/{self.member_id}"

    # === Model registration ===

    def _registered(self, result: TxResult, tag: Any) -> None:
        super()._registered(result, tag)
        self.store.put(self.key_ref, self.key)
        spec = self.spec.model_copy(update={"mask_key_ref": self.key_ref})
        url, digest = self._publish("init")
        self.submit(
            TxType.CREATE_MOD,
            ["linear-regression", url, spec.model_dump_json(), digest],
            self._mod_created,
        )

    def _mod_created(self, result: TxResult, _tag: Any) -> None:
        self.mod_id = result.value
        if self.ds_id is not None and self.tc_id is None:
            self._request()

    def _publish(self, label: str) -> Tuple[str, str]:
        sealed = mask(self.global_params, self.key)
        url = self.store.put(f"models/{self.member_id}/global/{label}", sealed.to_bytes())
        return url, model_hash(sealed, b"")

    # === Training engagement ===

    def train(self, ds_id: str) -> None:
        """Ask to train on ds_id; rounds run from ledger events from here on."""
        self.ds_id = ds_id
        if self.mod_id is not None:
            self._request()

    def _request(self) -> None:
        self.submit(TxType.REQUEST_TC, [self.ds_id, self.mod_id], self._tc_requested)

    def _tc_requested(self, result: TxResult, _tag: Any) -> None:
        self.tc_id = result.value
        self.record("tc", tc=self.tc_id)

    def handle_rejection(self, result: TxResult, tag: Any) -> None:
        if result.tx_type in (TxType.REQUEST_TC.value, TxType.CREATE_MOD.value):
            self.failure = f"{result.tx_type} rejected: {result.error}"

    def _on_tc_approved(self, event: LedgerEvent) -> None:
        if event.payload["tc"] == self.tc_id:
            self.submit(TxType.START_ROUND, [self.tc_id])

    def _on_round_started(self, event: LedgerEvent) -> None:
        if event.payload["tc"] != self.tc_id:
            return
        self.record("round", round=event.payload["round"], subsets=event.payload["cur_dss_ids"])
        if not event.payload["tj_ids"]:
            self._aggregate()

    def _on_round_closed(self, event: LedgerEvent) -> None:
        payload = event.payload
        if event.event_type == EventType.FRAUD_FLAGGED:
            closed = payload.get("round_complete") and (
                payload.get("tc") == self.tc_id or self.tc_id in payload.get("completed_tcs", [])
            )
        else:
            closed = payload.get("tc") == self.tc_id
        if closed:
            self._aggregate()

    # === Aggregation ===

    def download(self, tj) -> Optional[bytes]:
        """Model bytes behind a job, or None when they do not match its posted hash."""
        try:
            locator = open_locator(tj.enc_model_url, self.key)
        except (ValueError, UnicodeDecodeError):
            return None
        data = self.store.get(locator)
        if data is None or sha256_hex(data, bytes.fromhex(tj.nonce)) != tj.model_hash:
            return None
        return data

    def _aggregate(self) -> None:
        tc = self.ledger.get_asset(f"TC:{self.tc_id}")
        if tc.round in self._aggregated:
            return
        self._aggregated.add(tc.round)
        ds = self.ledger.get_asset(f"DS:{tc.ds}")

        jobs = [self.ledger.get_asset(f"TJ:{tj_id}") for tj_id in tc.cur_tj_ids]
        subset_of = {tj.id: self.ledger.get_asset(f"CI:{tj.ci}").dss for tj in jobs}
        to_flag: List[Tuple[str, str]] = []
        per_subset: List[Tuple[ModelParams, float]] = []
        for dss_id in tc.cur_dss_ids:
            entries = []
            for tj in jobs:
                if tj.status != TJStatus.UPDATED or subset_of[tj.id] != dss_id:
                    continue
                data = self.download(tj)
                if data is None:
                    to_flag.append((tj.id, "downloaded model does not match the posted hash"))
                else:
                    entries.append((tj.id, data))
            if not entries:
                continue
            try:
                winner, minority = mo_consensus(entries, ds.n)
            except QuorumFailure as e:
                self.failure = f"round {tc.round}, subset {dss_id}: {e}"
                logger.error(f"{self.name}: {self.failure}")
                self.record("quorum-failure", round=tc.round, dss=dss_id, error=str(e))
                return
            to_flag.extend((tj_id, "model disagrees with the replica majority") for tj_id in minority)
            sealed = MaskedModel.from_bytes(winner)
            per_subset.append((unmask(sealed, self.key), sealed.sample_count))

        for tj_id, evidence in to_flag:
            self.flagged.append(tj_id)
            logger.warning(f"{self.name}: flagging job {tj_id[:12]}: {evidence}")
            self.submit(TxType.FLAG_FRAUD, [tj_id, evidence])

        if per_subset:
            self.global_params = fed_average(per_subset)
        entry: Dict[str, Any] = {"round": tc.round, "subsets": len(per_subset), "flagged": len(to_flag)}
        if self.validation:
            entry["mse"] = evaluate(self.global_params, self.validation)
        self.history.append(entry)
        self.record("aggregate", **entry)
        logger.info(f"{self.name}: round {tc.round} aggregated over {len(per_subset)} subsets")

        if tc.round < self.cfg.rounds:
            url, digest = self._publish(f"{tc.id}/{tc.round}")
            self.submit(TxType.START_ROUND, [tc.id, url, digest])
        else:
            self.submit(TxType.FINISH_TC, [tc.id], self._finished)

    def _finished(self, result: TxResult, _tag: Any) -> None:
        self.finished = True
        self.record("finished", tc=self.tc_id, rounds=len(self.history))
