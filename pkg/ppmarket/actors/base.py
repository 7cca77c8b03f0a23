"""
Common actor machinery: configuration, transaction submission, result routing
and the structured actor log.

Actors talk to each other only through ledger events and the off-chain
object store; the scheduler owns the clock and delivers both.
"""
import logging
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, TYPE_CHECKING

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..assets import MemberKind
from ..ledger.envelope import TxResult, TxType
from ..ledger.events import EventType, LedgerEvent

if TYPE_CHECKING:
    from .scheduler import Scheduler

# Configure logging
logger = logging.getLogger(__name__)


class FraudStrategy(str, Enum):
    COPY_HASH = "CopyHash"
    LAZY_MODEL = "LazyModel"
    WRONG_DATA = "WrongData"


class ActorConfig(BaseModel):
    """Who an actor is and how it behaves."""
    model_config = ConfigDict(frozen=True)

    name: str
    role: MemberKind
    seed: bytes
    fraud: Optional[FraudStrategy] = None
    rounds: int = Field(default=1, ge=1)
    quorum_q: int = Field(default=2, ge=1)

    @model_validator(mode="after")
    def check_fraud_role(self):
        if self.fraud is not None and self.role != MemberKind.CO:
            raise ValueError("fraud strategies only apply to cloud owners")
        return self

    @property
    def endpoint(self) -> str:
        """Where the actor would listen in a deployment. Must never reach the ledger."""
        return f"tcp://{self.name}.ppmarket.internal:7051"


class Actor:
    """Base class for DO, CO and MO actors."""

    create_tx: TxType

    def __init__(self, cfg: ActorConfig):
        self.cfg = cfg
        self.name = cfg.name
        self.member_id: Optional[str] = None
        self.log: List[Dict[str, Any]] = []
        self.scheduler: Optional["Scheduler"] = None
        self._result_handlers: Dict[str, Callable[[TxResult, Any], None]] = {}
        self._event_handlers: Dict[EventType, Callable[[LedgerEvent], None]] = {}
        self._nonce_counter = 0

    # === Wiring ===

    def attach(self, scheduler: "Scheduler") -> None:
        self.scheduler = scheduler

    @property
    def ledger(self):
        return self.scheduler.ledger

    @property
    def store(self):
        return self.scheduler.store

    @property
    def registered(self) -> bool:
        return self.member_id is not None

    def on(self, event_type: EventType, handler: Callable[[LedgerEvent], None]) -> None:
        self._event_handlers[event_type] = handler

    def start(self) -> None:
        """Register as a member; the ledger hands back the pseudo-id."""
        self.record("register", endpoint=self.cfg.endpoint)
        self.submit(self.create_tx, [self.name], self._registered)

    def _registered(self, result: TxResult, _tag: Any) -> None:
        self.member_id = result.value
        self.record("registered", member=self.member_id)

    # === Transactions ===

    def submit(self, tx_type: TxType, args: List[str],
               on_result: Optional[Callable[[TxResult, Any], None]] = None, tag: Any = None) -> str:
        tx_id = self.scheduler.submit(self, tx_type, args, tag)
        if on_result is not None:
            self._result_handlers[tx_id] = on_result
        self.record("submit", tx=tx_type.value, tx_id=tx_id)
        return tx_id

    def deliver_result(self, result: TxResult, tag: Any) -> None:
        if not result.valid:
            self.record("rejected", tx=result.tx_type, tx_id=result.tx_id, error=result.error)
            logger.warning(f"{self.name}: {result.tx_type} rejected with {result.error}")
        handler = self._result_handlers.pop(result.tx_id, None)
        if handler is not None and result.valid:
            handler(result, tag)
        elif handler is not None:
            self.handle_rejection(result, tag)

    def handle_rejection(self, result: TxResult, tag: Any) -> None:
        """Hook for actors that react to their own rejected transactions."""

    def deliver_event(self, event: LedgerEvent) -> None:
        handler = self._event_handlers.get(event.event_type)
        if handler is not None and self.registered:
            handler(event)

    def next_nonce_counter(self) -> int:
        self._nonce_counter += 1
        return self._nonce_counter - 1

    # === Log ===

    def record(self, kind: str, **fields: Any) -> None:
        now = self.scheduler.now if self.scheduler else 0
        entry = {"t": now, "actor": self.name, "role": self.cfg.role.value, "kind": kind}
        entry.update(fields)
        self.log.append(entry)
        logger.debug(f"{self.name} {kind} {fields}")
