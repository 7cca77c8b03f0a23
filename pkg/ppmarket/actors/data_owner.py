"""
Data owner actor: splits its dataset, places replicas on cloud owners,
verifies their commitments and approves training requests.
"""
import logging
from typing import Any, Dict, List, Optional, Tuple

from ..assets import CIStatus
from ..dataplane import Chunk, LabeledDataset, commit, replicate, split, tamper
from ..exceptions import NotEnoughCOs
from ..ledger.envelope import TxResult, TxType
from ..ledger.events import EventType, LedgerEvent
from .base import Actor, ActorConfig

# Configure logging
logger = logging.getLogger(__name__)


def chunk_key(ds_id: str, index: int) -> str:
    """Where the data owner keeps its own copy of a subset."""
    return f"dataset/{ds_id}/{index}"


def delivery_key(co_id: str, ci_id: str) -> str:
    """Off-chain hand-off slot for the chunk behind one cloud instance."""
    return f"offchain/{co_id}/{ci_id}"


class DataOwner(Actor):
    """Owns one dataset, split into m subsets with n replicas each.

    collude_on, when set to (subset, replica), makes this data owner hand a
    corrupted chunk to that cloud owner and then vouch for it anyway.
    """

    create_tx = TxType.CREATE_DO

    def __init__(self, cfg: ActorConfig, data: LabeledDataset, m: int, n: int,
                 collude_on: Optional[Tuple[int, int]] = None, approve: bool = True):
        super().__init__(cfg)
        self.data = data
        self.m = m
        self.n = n
        self.collude_on = collude_on
        self.approve = approve
        self.ds_id: Optional[str] = None
        self.chunks: List[Chunk] = []
        self.dss_ids: Dict[int, str] = {}
        self.ci_plan: Dict[Tuple[int, int], str] = {}
        self.cis: Dict[str, Tuple[int, int]] = {}
        self.delivered: Dict[str, bytes] = {}
        self.verified: Dict[str, bool] = {}
        self.on(EventType.CI_JOINED, self._on_ci_joined)
        self.on(EventType.TC_REQUESTED, self._on_tc_requested)

    # === Distribution ===

    def distribute(self, co_ids: List[str]) -> None:
        """Split the data and register the dataset. Replicas go to co_ids in order.

        Raises:
            NotEnoughCOs: fewer than m*n cloud owners to place replicas on
        """
        if len(co_ids) < self.m * self.n:
            raise NotEnoughCOs(f"need {self.m * self.n} cloud owners, have {len(co_ids)}")
        self.chunks = split(self.data, self.m, self.cfg.seed)
        self._plan = replicate(self.chunks, self.n)
        self._co_ids = list(co_ids)
        self.record("split", sizes=[len(c.rows) for c in self.chunks])
        self.submit(TxType.CREATE_DS, [str(self.m), str(self.n), f"rows={len(self.data.rows)}"], self._ds_created)

    def _ds_created(self, result: TxResult, _tag: Any) -> None:
        self.ds_id = result.value
        for chunk in self.chunks:
            self.store.put(chunk_key(self.ds_id, chunk.subset_index), chunk.chunk_bytes)
        for index in range(self.m):
            self.submit(TxType.CREATE_DSS, [self.ds_id, str(index)], self._dss_created, tag=index)

    def _dss_created(self, result: TxResult, index: int) -> None:
        self.dss_ids[index] = result.value
        if len(self.dss_ids) < self.m:
            return
        for index in range(self.m):
            for replica in range(self.n):
                co_id = self._co_ids[index * self.n + replica]
                self.submit(TxType.CREATE_CI, [self.dss_ids[index], co_id], self._ci_created, tag=(index, replica, co_id))

    def _ci_created(self, result: TxResult, tag: Tuple[int, int, str]) -> None:
        index, replica, co_id = tag
        ci_id = result.value
        self.ci_plan[(index, replica)] = ci_id
        self.cis[ci_id] = (index, replica)
        data = self._plan[index][replica].chunk_bytes
        if self.collude_on == (index, replica):
            data = tamper(data)
            self.record("collude", ci=ci_id, subset=index)
        self.delivered[ci_id] = data
        self.store.put(delivery_key(co_id, ci_id), data)

    # === Verification and approval ===

    def _on_ci_joined(self, event: LedgerEvent) -> None:
        ci_id = event.payload["ci"]
        if ci_id not in self.cis:
            return
        ci = self.ledger.get_asset(f"CI:{ci_id}")
        ok = commit(self.delivered[ci_id], bytes.fromhex(ci.nonce)).hash == ci.hash
        self.verified[ci_id] = ok
        if not ok:
            logger.warning(f"{self.name}: CI {ci_id[:12]} committed to the wrong data")
        self.record("verify", ci=ci_id, ok=ok)
        self.submit(TxType.VERIFY_CI, [ci_id, "true" if ok else "false"])

    def _on_tc_requested(self, event: LedgerEvent) -> None:
        if event.payload.get("ds") != self.ds_id:
            return
        tc_id = event.payload["tc"]
        self.record("tc-requested", tc=tc_id, approve=self.approve)
        if self.approve:
            self.submit(TxType.APPROVE_TC, [tc_id])

    @property
    def distribution_settled(self) -> bool:
        """Every replica placed and every commitment judged on-chain."""
        if len(self.cis) < self.m * self.n:
            return False
        for ci_id in self.cis:
            ci = self.ledger.get_asset(f"CI:{ci_id}")
            if ci is None or ci.status in (CIStatus.FREE, CIStatus.JOINED):
                return False
        return True
