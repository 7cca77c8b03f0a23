"""
Ledger-core: hash-chained transaction log and world state.
"""

from .block import Block, BlockTx, GENESIS_PREV_HASH
from .core import Ledger
from .envelope import MEMBER_CREATES, Receipt, TransactionEnvelope, TxResult, TxType
from .events import EventType, LedgerEvent, Subscription
from .state import WorldState

__all__ = [
    "Block",
    "BlockTx",
    "GENESIS_PREV_HASH",
    "Ledger",
    "MEMBER_CREATES",
    "Receipt",
    "TransactionEnvelope",
    "TxResult",
    "TxType",
    "EventType",
    "LedgerEvent",
    "Subscription",
    "WorldState",
]
