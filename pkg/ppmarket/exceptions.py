"""
Exceptions for the ppmarket marketplace.

Every layer raises a subclass of MarketError. Chaincode errors are special:
they never escape a block commit, the ledger turns them into an invalid
transaction flag carrying the error class name.
"""


class MarketError(Exception):
    """Base exception for marketplace errors."""
    pass


class ConfigError(MarketError):
    """Invalid or unreadable configuration (scenario, sweep or environment)."""
    pass


# === Ledger ===

class LedgerError(MarketError):
    """Base exception for ledger-core errors."""
    pass


class MalformedEnvelope(LedgerError):
    """A submitted envelope is missing fields or carries bad values."""
    pass


class DuplicateTransaction(MalformedEnvelope):
    """A tx_id was already submitted to this ledger."""
    pass


class UnknownTxType(LedgerError):
    """The envelope names a transaction that is not one of the 15 external ones."""
    pass


class ClockRegression(LedgerError):
    """tick() was called with a time earlier than the previous tick."""
    pass


class CorruptChain(LedgerError):
    """The block log does not verify: broken link, digest or replay mismatch."""
    pass


# === Assets ===

class AssetError(MarketError):
    """Base exception for asset definition errors."""
    pass


class InvariantViolation(AssetError):
    """An asset does not satisfy its invariants and cannot be serialized."""
    pass


class ParseError(AssetError):
    """Bytes do not decode into any known asset kind."""
    pass


class IllegalTransition(AssetError):
    """The requested status change is not an edge of the status machine."""
    pass


# === Chaincode ===

class ChaincodeError(MarketError):
    """Base exception for transaction precondition failures."""

    @property
    def code(self) -> str:
        return type(self).__name__


class UnknownCaller(ChaincodeError):
    """The caller is not a registered member."""
    pass


class UnknownAsset(ChaincodeError):
    """A referenced asset does not exist in world state."""
    pass


class BadArguments(ChaincodeError):
    """Transaction arguments do not match the documented positional layout."""
    pass


class NotDataOwner(ChaincodeError):
    pass


class NotCloudOwner(ChaincodeError):
    pass


class NotModelOwner(ChaincodeError):
    pass


class NotOwner(ChaincodeError):
    """The caller does not own the asset the transaction acts on."""
    pass


class NotAssignee(ChaincodeError):
    """The caller is not the cloud owner assigned to the CI."""
    pass


class NotParty(ChaincodeError):
    pass


class BadShape(ChaincodeError):
    """Dataset split/replication parameters out of range."""
    pass


class OutOfOrder(ChaincodeError):
    pass


class TooMany(ChaincodeError):
    pass


class ReplicaQuotaFull(ChaincodeError):
    pass


class WrongStatus(ChaincodeError):
    pass


class WrongRound(ChaincodeError):
    pass


class DuplicateCommitment(ChaincodeError):
    """A hash or nonce was already declared by an earlier committer."""
    pass


class DatasetNotReady(ChaincodeError):
    pass


class NotApproved(ChaincodeError):
    pass


class RoundInProgress(ChaincodeError):
    pass


class UnknownSubject(ChaincodeError):
    pass


# === Data plane ===

class DataPlaneError(MarketError):
    """Base exception for off-chain data handling."""
    pass


class Infeasible(DataPlaneError):
    """The skew constraints cannot be met for this dataset and chunk count."""
    pass


class BadSplit(DataPlaneError):
    """Split parameters out of range (m < 2, fewer than 2 labels, ragged rows)."""
    pass


class BadNonce(DataPlaneError):
    pass


# === Federated training ===

class TrainingError(MarketError):
    """Base exception for the toy federated learning layer."""
    pass


class EmptyChunk(TrainingError):
    pass


class DimensionMismatch(TrainingError):
    pass


class EmptyModelSet(TrainingError):
    pass


class BadWeight(TrainingError):
    """An aggregation weight was zero or negative."""
    pass


class WrongKey(TrainingError):
    """A masked model was opened with a key other than the one that sealed it."""
    pass


# === Protocol / actors ===

class ProtocolError(MarketError):
    """Base exception for actor-level protocol failures."""
    pass


class NotEnoughCOs(ProtocolError):
    pass


class QuorumFailure(ProtocolError):
    """No group of replica models exceeds half the replication factor."""
    pass


class SchedulerStalled(ProtocolError):
    """The deterministic scheduler went quiescent before its goal was reached."""
    pass
