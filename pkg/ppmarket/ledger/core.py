"""
The ledger: pending queue, block cutting, serialized commit and replay.

Stands in for the endorse/order/validate/commit pipeline of a permissioned
blockchain, collapsed into one deterministic commit step inside tick().
Network timing lives in ppmarket.simnet, not here.
"""
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

from pydantic import ValidationError

from ..assets import deserialize
from ..config import LedgerConfig, config
from ..exceptions import ClockRegression, CorruptChain, DuplicateTransaction, MalformedEnvelope, UnknownTxType
from .block import GENESIS_PREV_HASH, Block, BlockTx
from .envelope import Receipt, TransactionEnvelope, TxResult, TxType
from .events import EventType, LedgerEvent, Subscription
from .state import WorldState

# Configure logging
logger = logging.getLogger(__name__)


class Ledger:
    """Append-only hash-chained log with a deterministic world state."""

    def __init__(self, ledger_config: Optional[LedgerConfig] = None, contract=None):
        if contract is None:
            from ..chaincode import contract as default_contract
            contract = default_contract
        self.config = ledger_config or config.ledger
        self.contract = contract
        self.blocks: List[Block] = []
        self.state = WorldState()
        self.events: List[LedgerEvent] = []
        self._pending: List[TransactionEnvelope] = []
        self._seen: set = set()
        self._results: Dict[str, TxResult] = {}
        self._subscriptions: List[Subscription] = []
        self._last_tick: Optional[int] = None

    # === Submission ===

    def submit(self, env: Union[TransactionEnvelope, dict]) -> Receipt:
        """Queue an envelope for the next block.

        Raises:
            MalformedEnvelope: missing or invalid fields, or a reused tx_id
            UnknownTxType: tx_type is not one of the 15 external transactions
        """
        if isinstance(env, dict):
            try:
                env = TransactionEnvelope.model_validate(env)
            except ValidationError as e:
                raise MalformedEnvelope(f"bad envelope: {e}") from e
        if TxType.parse(env.tx_type) is None:
            raise UnknownTxType(f"unknown transaction type {env.tx_type!r}")
        if env.tx_id in self._seen:
            raise DuplicateTransaction(f"tx_id {env.tx_id} already submitted")
        self._seen.add(env.tx_id)
        self._pending.append(env)
        logger.debug(f"Queued {env.tx_type} {env.tx_id[:12]} at t={env.submit_time}")
        return Receipt(tx_id=env.tx_id, accepted=True)

    @property
    def pending_count(self) -> int:
        return len(self._pending)

    @property
    def oldest_pending_time(self) -> Optional[int]:
        return self._pending[0].submit_time if self._pending else None

    # === Block formation ===

    def tick(self, now: int) -> List[Block]:
        """Cut and commit every block the formation rule allows at time now."""
        if self._last_tick is not None and now < self._last_tick:
            raise ClockRegression(f"tick({now}) after tick({self._last_tick})")
        self._last_tick = now
        size = self.config.block_size
        cut: List[Block] = []
        while self._pending:
            full = len(self._pending) >= size
            expired = now - self._pending[0].submit_time >= self.config.block_timeout_ms
            if not (full or expired):
                break
            batch, self._pending = self._pending[:size], self._pending[size:]
            cut.append(self._commit(batch, now))
        return cut

    def _commit(self, batch: List[TransactionEnvelope], now: int) -> Block:
        height = len(self.blocks)
        prev_hash = self.blocks[-1].block_hash if self.blocks else GENESIS_PREV_HASH
        recorded, events = self._execute_block(self.state, batch, prev_hash, height, now)
        block = Block.seal(height, prev_hash, recorded, now)
        self.blocks.append(block)
        self.events.extend(events)
        invalid = sum(1 for t in recorded if not t.valid)
        logger.info(f"Committed block {height} with {len(recorded)} txs ({invalid} invalid) at t={now}")
        for event in events:
            for sub in self._subscriptions:
                sub.deliver(event)
        return block

    def _execute_block(self, state: WorldState, batch: Iterable[TransactionEnvelope], prev_hash: str,
                       height: int, now: int):
        recorded: List[BlockTx] = []
        events: List[LedgerEvent] = []
        for env in batch:
            outcome = self.contract.execute(state, env, prev_hash)
            for key, value in outcome.writes.items():
                state.put(key, value)
            recorded.append(BlockTx(tx=env, valid=outcome.valid, error=outcome.error))
            self._results[env.tx_id] = TxResult(
                tx_id=env.tx_id,
                tx_type=env.tx_type,
                valid=outcome.valid,
                error=outcome.error,
                value=outcome.value,
                block_height=height,
            )
            if not outcome.valid:
                logger.warning(f"{env.tx_type} {env.tx_id[:12]} rejected: {outcome.error}")
            if outcome.event is not None:
                event_type, key, payload = outcome.event
                events.append(LedgerEvent(
                    event_type=event_type,
                    key=key,
                    payload=payload,
                    tx_id=env.tx_id,
                    block_height=height,
                    emit_time=now,
                ))
        return recorded, events

    # === Reads ===

    def get_state(self, key: str) -> Optional[bytes]:
        """Latest committed value for key, or None."""
        return self.state.get(key)

    def get_asset(self, key: str):
        raw = self.state.get(key)
        return deserialize(raw) if raw is not None else None

    def version(self, key: str) -> int:
        return self.state.version(key)

    def result(self, tx_id: str) -> Optional[TxResult]:
        return self._results.get(tx_id)

    @property
    def height(self) -> int:
        return len(self.blocks)

    def subscribe(self, event_types: Optional[Iterable[EventType]] = None) -> Subscription:
        """Receive matching events committed from now on."""
        sub = Subscription(event_types)
        self._subscriptions.append(sub)
        return sub

    # === Verification ===

    def verify_chain(self, blocks: Optional[List[Block]] = None) -> None:
        """Check heights, links and digests. Raises CorruptChain."""
        expected_prev = GENESIS_PREV_HASH
        for i, block in enumerate(self.blocks if blocks is None else blocks):
            if block.height != i:
                raise CorruptChain(f"block {i} records height {block.height}")
            if block.prev_hash != expected_prev:
                raise CorruptChain(f"block {i} prev_hash does not link to block {i - 1}")
            if not block.verify_digest():
                raise CorruptChain(f"block {i} digest mismatch")
            expected_prev = block.block_hash

    def replay(self) -> WorldState:
        """Re-execute the whole log on a fresh state."""
        return self._replay(self.blocks)[0]

    def _replay(self, blocks: List[Block]):
        self.verify_chain(blocks)
        state = WorldState()
        saved = self._results
        self._results = {}
        events: List[LedgerEvent] = []
        try:
            for block in blocks:
                recorded, block_events = self._execute_block(
                    state, [t.tx for t in block.txs], block.prev_hash, block.height, block.cut_time
                )
                if recorded != list(block.txs):
                    raise CorruptChain(f"block {block.height} validity flags differ on replay")
                events.extend(block_events)
            results = self._results
        finally:
            self._results = saved
        return state, results, events

    # === Export / import ===

    def export(self, path: Union[str, Path]) -> Path:
        """Write the block log as newline-delimited JSON."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            for block in self.blocks:
                fh.write(block.to_line() + "\n")
        logger.info(f"Exported {len(self.blocks)} blocks to {path}")
        return path

    @classmethod
    def load(cls, path: Union[str, Path], ledger_config: Optional[LedgerConfig] = None, contract=None) -> "Ledger":
        """Rebuild a ledger from an NDJSON export by verified replay.

        Raises:
            CorruptChain: an unreadable line, a broken link or digest, or a replay mismatch
        """
        blocks: List[Block] = []
        for lineno, line in enumerate(Path(path).read_bytes().split(b"\n"), 1):
            if not line.strip():
                continue
            try:
                blocks.append(Block.from_line(line.decode("utf-8")))
            except (UnicodeDecodeError, ValueError) as e:
                raise CorruptChain(f"line {lineno}: unreadable block: {e}") from e
        ledger = cls(ledger_config, contract)
        state, results, events = ledger._replay(blocks)
        ledger.blocks = blocks
        ledger.state = state
        ledger._results = results
        ledger.events = events
        ledger._seen = set(results)
        if blocks:
            ledger._last_tick = blocks[-1].cut_time
        return ledger
