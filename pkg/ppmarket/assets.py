"""
On-chain asset definitions for the marketplace.

Members and protocol objects are pydantic models serialized to canonical
JSON. World-state keys are "<Kind>:<id>" where Kind is DO/CO/MO for members
and DS/DSS/CI/Mod/TC/TJ/FR for protocol objects.
"""
import json
import logging
import re
from enum import Enum
from typing import Annotated, Dict, FrozenSet, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError, field_validator, model_validator

from .encoding import canonical_bytes
from .exceptions import IllegalTransition, InvariantViolation, ParseError
from .fedtrain import TrainingSpec

# Configure logging
logger = logging.getLogger(__name__)

HEX64 = re.compile(r"^[0-9a-f]{64}$")


class MemberKind(str, Enum):
    DO = "DO"
    CO = "CO"
    MO = "MO"


class CIStatus(str, Enum):
    FREE = "Free"
    JOINED = "Joined"
    VERIFIED = "Verified"
    FRAUD = "Fraud"


class TCStatus(str, Enum):
    REQUESTED = "Requested"
    APPROVED = "Approved"
    TRAINING = "Training"
    ROUND_DONE = "RoundDone"
    TRAINED = "Trained"


class TJStatus(str, Enum):
    PENDING = "Pending"
    UPDATED = "Updated"
    VOIDED = "Voided"


class _Asset(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    id: str

    @property
    def key(self) -> str:
        return f"{self.asset_type}:{self.id}"


class Member(_Asset):
    """A DO, CO or MO. Never carries an endpoint, URL or address."""
    asset_type: Literal["Member"] = "Member"
    kind: MemberKind
    name: Optional[str] = None
    organization: Optional[str] = None
    # Carried verbatim, never read
    how_many: Optional[str] = None

    @field_validator("id")
    @classmethod
    def validate_pseudo_id(cls, v):
        if not HEX64.match(v):
            raise ValueError("member id must be 32-byte lowercase hex")
        return v

    @property
    def key(self) -> str:
        return f"{self.kind.value}:{self.id}"


class Dataset(_Asset):
    asset_type: Literal["DS"] = "DS"
    owner: str
    m: int = Field(ge=1)
    n: int = Field(ge=1)
    dss_ids: List[str] = Field(default_factory=list)
    sample_meta: str = ""

    @model_validator(mode="after")
    def check_subsets(self):
        if len(self.dss_ids) > self.m:
            raise ValueError("dataset lists more subsets than m")
        return self

    @property
    def complete(self) -> bool:
        return len(self.dss_ids) == self.m


class DataSubset(_Asset):
    asset_type: Literal["DSS"] = "DSS"
    ds_id: str
    index: int = Field(ge=0)
    ci_ids: List[str] = Field(default_factory=list)


class CloudInstance(_Asset):
    asset_type: Literal["CI"] = "CI"
    co: str
    dss: Optional[str] = None
    status: CIStatus = CIStatus.FREE
    nonce: Optional[str] = None
    hash: Optional[str] = None
    rounds: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def check_commitment(self):
        committed = self.status != CIStatus.FREE
        if committed != (self.hash is not None and self.nonce is not None):
            raise ValueError("hash and nonce are set iff the CI has joined")
        if self.hash is None and self.nonce is not None:
            raise ValueError("nonce without hash")
        return self


class ModelAsset(_Asset):
    asset_type: Literal["Mod"] = "Mod"
    owner: str
    model_type: str
    model_url: str
    training_method: TrainingSpec
    model_hash: str


class TrainCouple(_Asset):
    asset_type: Literal["TC"] = "TC"
    ds: str
    mod: str
    status: TCStatus = TCStatus.REQUESTED
    rem: int = Field(default=0, ge=0)
    # Carried verbatim, never read
    paid: bool = False
    round: int = Field(default=0, ge=0)
    round_rem: int = Field(default=0, ge=0)
    cur_dss_ids: List[str] = Field(default_factory=list)
    cur_tj_ids: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_counter(self):
        if (self.status == TCStatus.TRAINING) != (self.rem > 0):
            raise ValueError("status is Training iff rem > 0")
        if self.rem > self.round_rem:
            raise ValueError("rem exceeds the round's initial count")
        return self


class TrainJob(_Asset):
    asset_type: Literal["TJ"] = "TJ"
    tc: str
    ci: str
    round: int = Field(ge=1)
    model_hash: Optional[str] = None
    nonce: Optional[str] = None
    enc_model_url: Optional[str] = None
    status: TJStatus = TJStatus.PENDING

    @model_validator(mode="after")
    def check_update(self):
        filled = None not in (self.model_hash, self.nonce, self.enc_model_url)
        if (self.status == TJStatus.UPDATED) != filled:
            raise ValueError("TJ is Updated iff model_hash, nonce and enc_model_url are present")
        return self


class FraudRecord(_Asset):
    """Evidence filed against a CI, stored verbatim."""
    asset_type: Literal["FR"] = "FR"
    subject: str
    subject_kind: Literal["CI", "TJ"]
    ci: str
    flagged_by: str
    evidence: str


Asset = Annotated[
    Union[Member, Dataset, DataSubset, CloudInstance, ModelAsset, TrainCouple, TrainJob, FraudRecord],
    Field(discriminator="asset_type"),
]

_asset_adapter = TypeAdapter(Asset)

KEY_PREFIXES: Dict[str, str] = {
    "DO": "Member",
    "CO": "Member",
    "MO": "Member",
    "DS": "DS",
    "DSS": "DSS",
    "CI": "CI",
    "Mod": "Mod",
    "TC": "TC",
    "TJ": "TJ",
    "FR": "FR",
}


def asset_key(kind: str, asset_id: str) -> str:
    """World-state key for an asset kind and id."""
    if kind not in KEY_PREFIXES:
        raise ValueError(f"unknown asset kind {kind}")
    return f"{kind}:{asset_id}"


def parse_key(key: str) -> Tuple[str, str]:
    """Split a world-state key into (kind, id)."""
    kind, sep, asset_id = key.partition(":")
    if not sep or kind not in KEY_PREFIXES or not asset_id:
        raise ParseError(f"malformed asset key {key!r}")
    return kind, asset_id


def serialize(asset: BaseModel) -> bytes:
    """Canonical bytes for an asset; re-checks every invariant first."""
    try:
        checked = type(asset).model_validate(asset.model_dump())
    except ValidationError as e:
        raise InvariantViolation(f"{type(asset).__name__} {getattr(asset, 'id', '?')}: {e}") from e
    try:
        return canonical_bytes(checked.model_dump(mode="json"))
    except ValueError as e:
        raise InvariantViolation(str(e)) from e


def deserialize(data: bytes):
    """Parse canonical asset bytes back into the matching asset model."""
    try:
        raw = json.loads(data.decode("utf-8"))
        return _asset_adapter.validate_python(raw)
    except (UnicodeDecodeError, json.JSONDecodeError, ValidationError) as e:
        raise ParseError(f"not an asset: {e}") from e


# Edges of each status machine; Fraud and Trained are terminal
TRANSITIONS: Dict[str, Dict[Enum, FrozenSet[Enum]]] = {
    "CI": {
        CIStatus.FREE: frozenset({CIStatus.JOINED}),
        CIStatus.JOINED: frozenset({CIStatus.VERIFIED, CIStatus.FRAUD}),
        CIStatus.VERIFIED: frozenset({CIStatus.FRAUD}),
        CIStatus.FRAUD: frozenset(),
    },
    "TC": {
        TCStatus.REQUESTED: frozenset({TCStatus.APPROVED}),
        TCStatus.APPROVED: frozenset({TCStatus.TRAINING, TCStatus.ROUND_DONE}),
        TCStatus.TRAINING: frozenset({TCStatus.ROUND_DONE}),
        TCStatus.ROUND_DONE: frozenset({TCStatus.TRAINING, TCStatus.TRAINED}),
        TCStatus.TRAINED: frozenset(),
    },
    "TJ": {
        TJStatus.PENDING: frozenset({TJStatus.UPDATED, TJStatus.VOIDED}),
        TJStatus.UPDATED: frozenset(),
        TJStatus.VOIDED: frozenset(),
    },
}


def can_transition(asset: BaseModel, new_status: Enum) -> bool:
    edges = TRANSITIONS.get(getattr(asset, "asset_type", ""))
    if edges is None:
        return False
    return new_status in edges.get(asset.status, frozenset())


def transition(asset, new_status: Enum, **changes):
    """Move an asset along its status machine, optionally updating other fields."""
    if not can_transition(asset, new_status):
        current = getattr(asset, "status", None)
        raise IllegalTransition(
            f"{getattr(asset, 'asset_type', type(asset).__name__)} {asset.id}: "
            f"{getattr(current, 'value', current)} -> {new_status.value}"
        )
    return asset.model_copy(update={"status": new_status, **changes})
