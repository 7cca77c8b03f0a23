"""
Data distribution transactions.

A data owner registers a dataset split into m subsets, each replicated on n
cloud instances. Cloud owners commit SHA-256(chunk ‖ nonce) when they join,
and the data owner verifies each commitment off-chain before marking it.
"""
import logging

from ..assets import CIStatus, CloudInstance, DataSubset, Dataset, MemberKind, transition
from ..encoding import derive_id
from ..exceptions import (
    BadShape,
    DuplicateCommitment,
    NotAssignee,
    NotCloudOwner,
    NotDataOwner,
    NotOwner,
    OutOfOrder,
    ReplicaQuotaFull,
    TooMany,
    WrongStatus,
)
from ..ledger.envelope import TxType
from ..ledger.events import EventType
from .registry import TxContext, bool_arg, contract, hex64_arg, int_arg, nonce_arg

# Configure logging
logger = logging.getLogger(__name__)


def owned_dataset(ctx: TxContext, ds_id: str) -> Dataset:
    ds = ctx.get_required("DS", ds_id)
    if ds.owner != ctx.caller:
        raise NotOwner(f"dataset {ds_id} belongs to another data owner")
    return ds


@contract.transaction(TxType.CREATE_DS)
def create_ds(ctx: TxContext, m: str, n: str, sample_meta: str = "") -> str:
    """Args: [m, n, sample_meta]."""
    if ctx.member_kind() != MemberKind.DO:
        raise NotDataOwner("only a data owner can register a dataset")
    subsets, replicas = int_arg(m, "m"), int_arg(n, "n")
    if subsets < 2 or replicas < 1:
        raise BadShape(f"need m >= 2 and n >= 1, got m={subsets} n={replicas}")
    ds = Dataset(id=derive_id(ctx.tx_id, "DS"), owner=ctx.caller, m=subsets, n=replicas, sample_meta=sample_meta)
    ctx.put(ds)
    ctx.emit(EventType.DS_CREATED, ds.key, {"ds": ds.id, "m": subsets, "n": replicas})
    return ds.id


@contract.transaction(TxType.CREATE_DSS)
def create_dss(ctx: TxContext, ds_id: str, index: str) -> str:
    """Args: [ds_id, index]. Indices are registered in order 0..m-1."""
    ds = owned_dataset(ctx, ds_id)
    idx = int_arg(index, "index")
    if idx >= ds.m:
        raise TooMany(f"dataset {ds_id} has only {ds.m} subsets")
    if idx != len(ds.dss_ids):
        raise OutOfOrder(f"expected subset index {len(ds.dss_ids)}, got {idx}")
    dss = DataSubset(id=derive_id(ctx.tx_id, "DSS"), ds_id=ds.id, index=idx)
    ctx.put(dss)
    ctx.put(ds.model_copy(update={"dss_ids": ds.dss_ids + [dss.id]}))
    ctx.emit(EventType.DSS_CREATED, dss.key, {"dss": dss.id, "ds": ds.id, "index": idx})
    return dss.id


@contract.transaction(TxType.CREATE_CI)
def create_ci(ctx: TxContext, dss_id: str, co_id: str) -> str:
    """Args: [dss_id, co_id]. The CICreated event is the cloud owner's cue to fetch its chunk."""
    dss = ctx.get_required("DSS", dss_id)
    ds = owned_dataset(ctx, dss.ds_id)
    if ctx.member_kind(co_id) != MemberKind.CO:
        raise NotCloudOwner(f"{co_id} is not a registered cloud owner")
    if len(dss.ci_ids) >= ds.n:
        raise ReplicaQuotaFull(f"subset {dss_id} already has {ds.n} cloud instances")
    ci = CloudInstance(id=derive_id(ctx.tx_id, "CI"), co=co_id, dss=dss.id)
    ctx.put(ci)
    ctx.put(dss.model_copy(update={"ci_ids": dss.ci_ids + [ci.id]}))
    ctx.emit(EventType.CI_CREATED, ci.key, {
        "ci": ci.id,
        "co": co_id,
        "dss": dss.id,
        "ds": ds.id,
        "index": dss.index,
    })
    return ci.id


@contract.transaction(TxType.JOIN_CI)
def join_ci(ctx: TxContext, ci_id: str, hash: str, nonce: str) -> str:
    """Args: [ci_id, hash, nonce]. The first CI to declare a hash keeps it."""
    ci = ctx.get_required("CI", ci_id)
    if ci.co != ctx.caller:
        raise NotAssignee(f"CI {ci_id} is assigned to another cloud owner")
    if ci.status != CIStatus.FREE:
        raise WrongStatus(f"CI {ci_id} is {ci.status.value}, expected Free")
    hex64_arg(hash, "hash")
    nonce_arg(nonce)
    for other in ctx.scan("CI:"):
        if other.hash == hash:
            raise DuplicateCommitment(f"hash already declared by CI {other.id}")
    joined = transition(ci, CIStatus.JOINED, hash=hash, nonce=nonce)
    ctx.put(joined)
    ctx.emit(EventType.CI_JOINED, joined.key, {"ci": ci.id, "co": ci.co, "dss": ci.dss})
    return ci.id


@contract.transaction(TxType.VERIFY_CI)
def verify_ci(ctx: TxContext, ci_id: str, ok: str) -> str:
    """Args: [ci_id, "true"|"false"]."""
    ci = ctx.get_required("CI", ci_id)
    dss = ctx.get_required("DSS", ci.dss)
    owned_dataset(ctx, dss.ds_id)
    if ci.status != CIStatus.JOINED:
        raise WrongStatus(f"CI {ci_id} is {ci.status.value}, expected Joined")
    if bool_arg(ok, "ok"):
        verified = transition(ci, CIStatus.VERIFIED)
        ctx.put(verified)
        ctx.emit(EventType.CI_VERIFIED, verified.key, {"ci": ci.id, "co": ci.co, "dss": ci.dss})
    else:
        flagged = transition(ci, CIStatus.FRAUD)
        ctx.put(flagged)
        logger.warning(f"CI {ci_id[:12]} failed data verification")
        ctx.emit(EventType.FRAUD_FLAGGED, flagged.key, {
            "ci": ci.id,
            "co": ci.co,
            "subject": ci.id,
            "tc": None,
            "round_complete": False,
        })
    return ci.id
