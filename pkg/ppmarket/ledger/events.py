"""
Committed-event notification.

Each state-changing transaction emits exactly one event. Subscribers get the
events emitted after they subscribed, in commit order.
"""
from collections import deque
from enum import Enum
from typing import Any, Deque, Dict, FrozenSet, Iterable, List, Optional

from pydantic import BaseModel, ConfigDict, Field


class EventType(str, Enum):
    MEMBER_CREATED = "MemberCreated"
    DS_CREATED = "DSCreated"
    DSS_CREATED = "DSSCreated"
    CI_CREATED = "CICreated"
    CI_JOINED = "CIJoined"
    CI_VERIFIED = "CIVerified"
    MOD_CREATED = "ModCreated"
    TC_REQUESTED = "TCRequested"
    TC_APPROVED = "TCApproved"
    ROUND_STARTED = "RoundStarted"
    TJ_UPDATED = "TJUpdated"
    ROUND_COMPLETE = "RoundComplete"
    TC_FINISHED = "TCFinished"
    FRAUD_FLAGGED = "FraudFlagged"


class LedgerEvent(BaseModel):
    model_config = ConfigDict(frozen=True)

    event_type: EventType
    key: str
    payload: Dict[str, Any] = Field(default_factory=dict)
    tx_id: str
    block_height: int
    emit_time: int


class Subscription:
    """Event stream handle returned by Ledger.subscribe()."""

    def __init__(self, event_types: Optional[Iterable[EventType]] = None):
        self.event_types: Optional[FrozenSet[EventType]] = (
            frozenset(EventType(e) for e in event_types) if event_types else None
        )
        self._queue: Deque[LedgerEvent] = deque()
        self.closed = False

    def matches(self, event: LedgerEvent) -> bool:
        return self.event_types is None or event.event_type in self.event_types

    def deliver(self, event: LedgerEvent) -> None:
        if not self.closed and self.matches(event):
            self._queue.append(event)

    def pending(self) -> int:
        return len(self._queue)

    def next(self) -> Optional[LedgerEvent]:
        return self._queue.popleft() if self._queue else None

    def drain(self) -> List[LedgerEvent]:
        events = list(self._queue)
        self._queue.clear()
        return events

    def close(self) -> None:
        self.closed = True
        self._queue.clear()
