"""
Transaction registry and execution context for the marketplace chaincode.

Handlers register on the global contract with @contract.transaction(TxType)
and receive a TxContext followed by the envelope's positional string args.
Execution never raises a chaincode error: failures become an invalid
Execution carrying the error class name and no writes.
"""
import inspect
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple

from ..assets import MemberKind, deserialize, serialize
from ..encoding import is_hex64, is_nonce_hex, sha256
from ..exceptions import AssetError, BadArguments, ChaincodeError, UnknownAsset, UnknownCaller
from ..ledger.envelope import TransactionEnvelope, TxType
from ..ledger.events import EventType
from ..ledger.state import WorldState

# Configure logging
logger = logging.getLogger(__name__)


@dataclass
class Execution:
    """Outcome of running one envelope against world state."""
    valid: bool
    error: Optional[str] = None
    value: Optional[str] = None
    writes: Dict[str, bytes] = field(default_factory=dict)
    event: Optional[Tuple[EventType, str, Dict[str, Any]]] = None


class TxContext:
    """Read/write handle a transaction sees while it executes.

    Writes are staged and only reach world state if the transaction is valid,
    or if it marked its staged writes as a penalty before failing.
    """

    def __init__(self, world: WorldState, env: TransactionEnvelope, prev_hash: str):
        self.world = world
        self.env = env
        self.tx_id = env.tx_id
        self.caller = env.caller
        self.rng_seed = sha256(bytes.fromhex(prev_hash), env.tx_id.encode("utf-8"))
        self.writes: Dict[str, bytes] = {}
        self.event: Optional[Tuple[EventType, str, Dict[str, Any]]] = None
        self.penalty = False
        self._staged: Dict[str, Any] = {}

    def get(self, key: str):
        """Asset at key including this transaction's staged writes, or None."""
        if key in self._staged:
            return self._staged[key]
        raw = self.world.get(key)
        return deserialize(raw) if raw is not None else None

    def get_required(self, kind: str, asset_id: str, error=UnknownAsset):
        asset = self.get(f"{kind}:{asset_id}")
        if asset is None:
            raise error(f"no {kind} with id {asset_id}")
        return asset

    def put(self, asset) -> None:
        self.writes[asset.key] = serialize(asset)
        self._staged[asset.key] = asset

    def scan(self, prefix: str) -> Iterator[Any]:
        """Assets whose key starts with prefix, in key order."""
        keys = set(self.world.keys(prefix)) | {k for k in self._staged if k.startswith(prefix)}
        for key in sorted(keys):
            yield self.get(key)

    def member_kind(self, member_id: Optional[str] = None) -> Optional[MemberKind]:
        """Which member kind registered the id (the caller by default)."""
        member_id = self.caller if member_id is None else member_id
        if not member_id:
            return None
        for kind in MemberKind:
            if self.world.get(f"{kind.value}:{member_id}") is not None or f"{kind.value}:{member_id}" in self._staged:
                return kind
        return None

    def emit(self, event_type: EventType, key: str, payload: Optional[Dict[str, Any]] = None) -> None:
        if self.event is not None:
            raise RuntimeError(f"{self.env.tx_type} tried to emit a second event")
        self.event = (event_type, key, payload or {})

    def penalize(self) -> None:
        """Keep the staged writes and event even though the transaction will fail."""
        self.penalty = True


@dataclass
class _Handler:
    fn: Callable
    signature: inspect.Signature
    open_to_anyone: bool


class Contract:
    """Dispatch table from external transaction name to handler."""

    def __init__(self, name: str):
        self.name = name
        self._handlers: Dict[TxType, _Handler] = {}

    def transaction(self, tx_type: TxType, open_to_anyone: bool = False):
        """Register a handler for tx_type.

        Args:
            tx_type: External transaction name
            open_to_anyone: Skip the registered-member check on the caller
        """
        def decorator(fn: Callable) -> Callable:
            if tx_type in self._handlers:
                raise ValueError(f"{tx_type.value} registered twice")
            self._handlers[tx_type] = _Handler(fn, inspect.signature(fn), open_to_anyone)
            return fn
        return decorator

    @property
    def tx_types(self) -> List[TxType]:
        return sorted(self._handlers, key=lambda t: t.value)

    def execute(self, world: WorldState, env: TransactionEnvelope, prev_hash: str) -> Execution:
        """Run env against world. Never mutates world and never raises a chaincode error."""
        tx_type = TxType.parse(env.tx_type)
        handler = self._handlers.get(tx_type) if tx_type is not None else None
        if handler is None:
            return Execution(valid=False, error="UnknownTxType")

        ctx = TxContext(world, env, prev_hash)
        try:
            if not handler.open_to_anyone and ctx.member_kind() is None:
                raise UnknownCaller(f"caller {env.caller!r} is not a registered member")
            try:
                bound = handler.signature.bind(ctx, *env.args)
            except TypeError as e:
                raise BadArguments(f"{env.tx_type}: {e}") from e
            value = handler.fn(*bound.args)
        except ChaincodeError as e:
            logger.debug(f"{env.tx_type} {env.tx_id[:12]} failed: {e.code}: {e}")
            if ctx.penalty:
                return Execution(valid=False, error=e.code, writes=ctx.writes, event=ctx.event)
            return Execution(valid=False, error=e.code)
        except AssetError as e:
            logger.error(f"{env.tx_type} {env.tx_id[:12]} produced a bad asset: {e}")
            return Execution(valid=False, error=type(e).__name__)
        return Execution(valid=True, value=value, writes=ctx.writes, event=ctx.event)


contract = Contract("ppmarket")


def int_arg(value: str, name: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise BadArguments(f"{name} must be an integer, got {value!r}")


def bool_arg(value: str, name: str) -> bool:
    lowered = value.strip().lower()
    if lowered not in ("true", "false"):
        raise BadArguments(f"{name} must be 'true' or 'false', got {value!r}")
    return lowered == "true"


def required_arg(value: str, name: str) -> str:
    if not value:
        raise BadArguments(f"{name} must not be empty")
    return value


def hex64_arg(value: str, name: str) -> str:
    if not is_hex64(value):
        raise BadArguments(f"{name} must be 64 lowercase hex characters, got {value!r}")
    return value


def nonce_arg(value: str, name: str = "nonce") -> str:
    if not is_nonce_hex(value):
        raise BadArguments(f"{name} must be 32 lowercase hex characters, got {value!r}")
    return value
