"""
Transaction envelopes, receipts and per-transaction results.
"""
from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field


class TxType(str, Enum):
    """The 15 externally invoked transactions."""
    CREATE_DO = "CreateDO"
    CREATE_CO = "CreateCO"
    CREATE_MO = "CreateMO"
    CREATE_DS = "CreateDS"
    CREATE_DSS = "CreateDSS"
    CREATE_CI = "CreateCI"
    JOIN_CI = "JoinCI"
    VERIFY_CI = "VerifyCI"
    CREATE_MOD = "CreateMod"
    REQUEST_TC = "RequestTC"
    APPROVE_TC = "ApproveTC"
    START_ROUND = "StartRound"
    UPDATE_TJ = "UpdateTJ"
    FINISH_TC = "FinishTC"
    FLAG_FRAUD = "FlagFraud"

    @classmethod
    def parse(cls, name: str) -> Optional["TxType"]:
        try:
            return cls(name)
        except ValueError:
            return None


MEMBER_CREATES = frozenset({TxType.CREATE_DO, TxType.CREATE_CO, TxType.CREATE_MO})


class TransactionEnvelope(BaseModel):
    """One submitted transaction. Args are UTF-8 strings in the documented order."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    tx_id: str = Field(min_length=1)
    tx_type: str = Field(min_length=1)
    caller: str = ""
    args: List[str] = Field(default_factory=list)
    submit_time: int = Field(ge=0)


class Receipt(BaseModel):
    """Synchronous answer to submit()."""
    tx_id: str
    accepted: bool
    reason: Optional[str] = None


class TxResult(BaseModel):
    """Outcome of executing a committed transaction."""
    tx_id: str
    tx_type: str
    valid: bool
    error: Optional[str] = None
    value: Optional[str] = None
    block_height: int
