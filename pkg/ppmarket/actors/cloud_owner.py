"""
Cloud owner actor: holds replicas, commits to them, trains on them.

Fraud strategies replace honest steps:
  CopyHash   joins honestly, then replays another job's update instead of training
  LazyModel  uploads the incoming model with a little noise instead of training
  WrongData  commits to bytes other than the chunk it received
"""
import logging
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..dataplane import commit, gen_nonce, parse_rows, tamper
from ..encoding import derive_id, seed_int
from ..fedtrain import MaskedModel, ModelParams, local_train, mask, model_hash, unmask
from ..ledger.envelope import TxResult, TxType
from ..ledger.events import EventType, LedgerEvent
from ..offchain import seal_locator
from .base import Actor, ActorConfig, FraudStrategy
from .data_owner import delivery_key

# Configure logging
logger = logging.getLogger(__name__)


def model_locator(tc_id: str, round_no: int, ci_id: str) -> str:
    return f"models/{tc_id}/{round_no}/{ci_id}"


class CloudOwner(Actor):
    create_tx = TxType.CREATE_CO

    def __init__(self, cfg: ActorConfig):
        super().__init__(cfg)
        self.fraud = cfg.fraud
        self.chunks: Dict[str, bytes] = {}
        self.dss_of: Dict[str, str] = {}
        self.jobs_done: Dict[str, str] = {}
        # tj_id -> (tc_id, round, ci_id) waiting for an update to replay
        self._copy_wanted: Dict[str, Tuple[str, int, str]] = {}
        self._rng = np.random.default_rng(seed_int(cfg.seed))
        self.on(EventType.CI_CREATED, self._on_ci_created)
        self.on(EventType.ROUND_STARTED, self._on_round_started)
        self.on(EventType.TJ_UPDATED, self._on_tj_updated)
        self.on(EventType.FRAUD_FLAGGED, self._on_fraud_flagged)

    # === Data distribution ===

    def _on_ci_created(self, event: LedgerEvent) -> None:
        if event.payload["co"] != self.member_id:
            return
        ci_id = event.payload["ci"]
        data = self.store.get(delivery_key(self.member_id, ci_id))
        if data is None:
            self.record("missing-chunk", ci=ci_id)
            return
        self.chunks[ci_id] = data
        self.dss_of[ci_id] = event.payload["dss"]
        nonce = gen_nonce(self.cfg.seed, self.next_nonce_counter())
        committed = tamper(data) if self.fraud == FraudStrategy.WRONG_DATA else data
        c = commit(committed, nonce)
        self.record("join", ci=ci_id, hash=c.hash)
        self.submit(TxType.JOIN_CI, [ci_id, c.hash, c.nonce])

    # === Training ===

    def _on_round_started(self, event: LedgerEvent) -> None:
        tc_id = event.payload["tc"]
        round_no = event.payload["round"]
        mine = set(event.payload["tj_ids"])
        for ci_id in sorted(self.chunks):
            tj_id = derive_id(tc_id, ci_id, str(round_no))
            if tj_id not in mine:
                continue
            if self.fraud == FraudStrategy.COPY_HASH:
                self._copy_wanted[tj_id] = (tc_id, round_no, ci_id)
                self._try_copy(tj_id)
            else:
                self._train(tj_id, tc_id, round_no, ci_id)

    def _train(self, tj_id: str, tc_id: str, round_no: int, ci_id: str) -> None:
        tc = self.ledger.get_asset(f"TC:{tc_id}")
        mod = self.ledger.get_asset(f"Mod:{tc.mod}")
        key = self.store.get(mod.training_method.mask_key_ref)
        incoming = unmask(MaskedModel.from_bytes(self.store.get(mod.model_url)), key)
        rows = parse_rows(self.chunks[ci_id])

        if self.fraud == FraudStrategy.LAZY_MODEL:
            jitter = self._rng.normal(scale=1e-3, size=incoming.dim)
            trained = ModelParams.from_array(incoming.as_array() + jitter)
        else:
            trained = local_train(incoming, rows, mod.training_method)

        sealed = mask(trained, key, sample_count=len(rows))
        locator = self.store.put(model_locator(tc_id, round_no, ci_id), sealed.to_bytes())
        nonce = gen_nonce(self.cfg.seed, self.next_nonce_counter())
        digest = model_hash(sealed, nonce)
        self.record("train", tj=tj_id, round=round_no, model_hash=digest)
        self.submit(
            TxType.UPDATE_TJ,
            [tj_id, digest, nonce.hex(), seal_locator(locator, key)],
            self._updated,
            tag=tj_id,
        )

    def _updated(self, result: TxResult, tj_id: str) -> None:
        self.jobs_done[tj_id] = result.tx_id

    def _on_tj_updated(self, event: LedgerEvent) -> None:
        for tj_id, (tc_id, round_no, _) in list(self._copy_wanted.items()):
            if event.payload["tc"] == tc_id and event.payload["round"] == round_no:
                self._try_copy(tj_id)

    def _try_copy(self, tj_id: str) -> None:
        tc_id, round_no, ci_id = self._copy_wanted[tj_id]
        source = self._copy_source(tc_id, ci_id)
        if source is None:
            return
        del self._copy_wanted[tj_id]
        self.record("copy", tj=tj_id, source=source.id)
        self.submit(TxType.UPDATE_TJ, [tj_id, source.model_hash, source.nonce, source.enc_model_url])

    def _copy_source(self, tc_id: str, ci_id: str) -> Optional[Any]:
        """An updated job of this round, preferably one trained on the same subset."""
        tc = self.ledger.get_asset(f"TC:{tc_id}")
        candidates = []
        for other_id in tc.cur_tj_ids:
            other = self.ledger.get_asset(f"TJ:{other_id}")
            if other.ci == ci_id or other.model_hash is None:
                continue
            same_subset = self.ledger.get_asset(f"CI:{other.ci}").dss == self.dss_of[ci_id]
            candidates.append((not same_subset, other.id, other))
        return min(candidates)[2] if candidates else None

    def handle_rejection(self, result: TxResult, tag: Any) -> None:
        self.record("job-rejected", tj=tag, error=result.error)

    def _on_fraud_flagged(self, event: LedgerEvent) -> None:
        if event.payload.get("co") == self.member_id:
            self.record("flagged", ci=event.payload["ci"], subject=event.payload["subject"])
