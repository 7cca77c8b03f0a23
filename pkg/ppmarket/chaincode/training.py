"""
Training transactions: model registration, train couples and rounds.

A train couple (TC) binds one model to one dataset. Each round selects half of
the subsets and opens one train job (TJ) per verified cloud instance holding
them; the round closes when every job is either updated or voided.
"""
import logging
from typing import Optional, Tuple

from pydantic import ValidationError

from ..assets import (
    CIStatus,
    Dataset,
    FraudRecord,
    MemberKind,
    ModelAsset,
    TCStatus,
    TJStatus,
    TrainCouple,
    TrainJob,
    transition,
)
from ..encoding import derive_id
from ..exceptions import (
    BadArguments,
    DatasetNotReady,
    DuplicateCommitment,
    NotApproved,
    NotAssignee,
    NotModelOwner,
    NotOwner,
    RoundInProgress,
    WrongRound,
    WrongStatus,
)
from ..fedtrain import TrainingSpec
from ..ledger.envelope import TxType
from ..ledger.events import EventType
from .registry import TxContext, contract, hex64_arg, nonce_arg, required_arg
from .selection import select_round

# Configure logging
logger = logging.getLogger(__name__)


def owned_model(ctx: TxContext, mod_id: str) -> ModelAsset:
    mod = ctx.get_required("Mod", mod_id)
    if mod.owner != ctx.caller:
        raise NotOwner(f"model {mod_id} belongs to another model owner")
    return mod


def readiness_problem(ctx: TxContext, ds: Dataset) -> Optional[str]:
    """Why the dataset cannot be trained on yet, or None when it can.

    Every subset needs its n cloud instances, none of them still waiting on
    the data owner, and a strict majority of them verified.
    """
    if not ds.complete:
        return f"{len(ds.dss_ids)} of {ds.m} subsets registered"
    for dss_id in ds.dss_ids:
        dss = ctx.get_required("DSS", dss_id)
        if len(dss.ci_ids) < ds.n:
            return f"subset {dss.index} has {len(dss.ci_ids)} of {ds.n} cloud instances"
        statuses = [ctx.get_required("CI", ci_id).status for ci_id in dss.ci_ids]
        if any(s in (CIStatus.FREE, CIStatus.JOINED) for s in statuses):
            return f"subset {dss.index} has unverified cloud instances"
        verified = sum(1 for s in statuses if s == CIStatus.VERIFIED)
        if 2 * verified <= ds.n:
            return f"subset {dss.index} has only {verified} verified of {ds.n}"
    return None


def close_job(tc: TrainCouple) -> Tuple[TrainCouple, bool]:
    """Decrement rem for a finished or voided job; returns (tc, round_complete)."""
    rem = tc.rem - 1
    if rem == 0:
        return transition(tc, TCStatus.ROUND_DONE, rem=0), True
    return tc.model_copy(update={"rem": rem}), False


@contract.transaction(TxType.CREATE_MOD)
def create_mod(ctx: TxContext, model_type: str, model_url: str, training_method: str, model_hash: str) -> str:
    """Args: [model_type, model_url, training_method as JSON, model_hash]."""
    if ctx.member_kind() != MemberKind.MO:
        raise NotModelOwner("only a model owner can register a model")
    try:
        spec = TrainingSpec.model_validate_json(training_method)
    except ValidationError as e:
        raise BadArguments(f"training_method: {e}") from e
    mod = ModelAsset(
        id=derive_id(ctx.tx_id, "Mod"),
        owner=ctx.caller,
        model_type=required_arg(model_type, "model_type"),
        model_url=required_arg(model_url, "model_url"),
        training_method=spec,
        model_hash=hex64_arg(model_hash, "model_hash"),
    )
    ctx.put(mod)
    ctx.emit(EventType.MOD_CREATED, mod.key, {"mod": mod.id})
    return mod.id


@contract.transaction(TxType.REQUEST_TC)
def request_tc(ctx: TxContext, ds_id: str, mod_id: str) -> str:
    """Args: [ds_id, mod_id]."""
    mod = owned_model(ctx, mod_id)
    ds = ctx.get_required("DS", ds_id)
    problem = readiness_problem(ctx, ds)
    if problem:
        raise DatasetNotReady(f"dataset {ds_id}: {problem}")
    tc = TrainCouple(id=derive_id(ctx.tx_id, "TC"), ds=ds.id, mod=mod.id)
    ctx.put(tc)
    ctx.emit(EventType.TC_REQUESTED, tc.key, {"tc": tc.id, "ds": ds.id, "mod": mod.id, "do": ds.owner})
    return tc.id


@contract.transaction(TxType.APPROVE_TC)
def approve_tc(ctx: TxContext, tc_id: str) -> str:
    """Args: [tc_id]. Blanket approval; whether to approve is the data owner's policy."""
    tc = ctx.get_required("TC", tc_id)
    ds = ctx.get_required("DS", tc.ds)
    if ds.owner != ctx.caller:
        raise NotOwner(f"train couple {tc_id} is on another owner's dataset")
    if tc.status != TCStatus.REQUESTED:
        raise WrongStatus(f"train couple {tc_id} is {tc.status.value}, expected Requested")
    approved = transition(tc, TCStatus.APPROVED)
    ctx.put(approved)
    ctx.emit(EventType.TC_APPROVED, approved.key, {"tc": tc.id, "ds": ds.id, "mod": tc.mod})
    return tc.id


@contract.transaction(TxType.START_ROUND)
def start_round(ctx: TxContext, tc_id: str, model_url: str = "", model_hash: str = "") -> str:
    """Args: [tc_id, model_url, model_hash]; the last two publish the new global model.

    Opens the next round: selects ceil(m/2) subsets and creates one Pending
    job per verified cloud instance on them.
    """
    tc = ctx.get_required("TC", tc_id)
    mod = owned_model(ctx, tc.mod)
    if tc.status == TCStatus.TRAINING:
        raise RoundInProgress(f"round {tc.round} of {tc_id} still has {tc.rem} open jobs")
    if tc.status not in (TCStatus.APPROVED, TCStatus.ROUND_DONE):
        raise NotApproved(f"tc not yet approved ({tc.status.value})")
    if bool(model_url) != bool(model_hash):
        raise BadArguments("model_url and model_hash go together")
    if model_url:
        hex64_arg(model_hash, "model_hash")
        ctx.put(mod.model_copy(update={"model_url": model_url, "model_hash": model_hash}))

    ds = ctx.get_required("DS", tc.ds)
    previous = [ds.dss_ids.index(d) for d in tc.cur_dss_ids] if tc.round > 0 else None
    selected = [ds.dss_ids[i] for i in select_round(ds.m, ctx.rng_seed, previous)]
    round_no = tc.round + 1

    tj_ids = []
    for dss_id in selected:
        for ci_id in ctx.get_required("DSS", dss_id).ci_ids:
            if ctx.get_required("CI", ci_id).status != CIStatus.VERIFIED:
                continue
            tj = TrainJob(id=derive_id(tc.id, ci_id, str(round_no)), tc=tc.id, ci=ci_id, round=round_no)
            ctx.put(tj)
            tj_ids.append(tj.id)

    changes = {
        "rem": len(tj_ids),
        "round": round_no,
        "round_rem": len(tj_ids),
        "cur_dss_ids": selected,
        "cur_tj_ids": tj_ids,
    }
    if tj_ids:
        started = transition(tc, TCStatus.TRAINING, **changes)
    elif tc.status == TCStatus.ROUND_DONE:
        started = tc.model_copy(update=changes)
    else:
        started = transition(tc, TCStatus.ROUND_DONE, **changes)
    ctx.put(started)
    logger.info(f"TC {tc_id[:12]} round {round_no}: {len(selected)} subsets, {len(tj_ids)} jobs")
    ctx.emit(EventType.ROUND_STARTED, started.key, {
        "tc": tc.id,
        "ds": ds.id,
        "mod": tc.mod,
        "round": round_no,
        "cur_dss_ids": selected,
        "tj_ids": tj_ids,
    })
    return tc.id


@contract.transaction(TxType.UPDATE_TJ)
def update_tj(ctx: TxContext, tj_id: str, model_hash: str, nonce: str, enc_model_url: str) -> str:
    """Args: [tj_id, model_hash, nonce, enc_model_url].

    A model hash or nonce already declared by another job of the same round
    marks the later committer as fraudulent: its CI becomes Fraud, its job is
    voided, and the transaction is still rejected.
    """
    tj = ctx.get_required("TJ", tj_id)
    ci = ctx.get_required("CI", tj.ci)
    if ci.co != ctx.caller:
        raise NotAssignee(f"job {tj_id} belongs to another cloud owner")
    tc = ctx.get_required("TC", tj.tc)
    if tj.round != tc.round:
        raise WrongRound(f"job is for round {tj.round}, train couple is in round {tc.round}")
    if tj.status != TJStatus.PENDING:
        raise WrongStatus(f"job {tj_id} is {tj.status.value}, expected Pending")
    hex64_arg(model_hash, "model_hash")
    nonce_arg(nonce)
    required_arg(enc_model_url, "enc_model_url")

    for other_id in tc.cur_tj_ids:
        other = ctx.get_required("TJ", other_id)
        if other.status != TJStatus.UPDATED:
            continue
        if other.model_hash == model_hash or other.nonce == nonce:
            _penalize_copy(ctx, tc, tj, ci, other)
            raise DuplicateCommitment(f"job {tj_id} repeats the commitment of job {other.id}")

    ctx.put(transition(tj, TJStatus.UPDATED, model_hash=model_hash, nonce=nonce, enc_model_url=enc_model_url))
    ctx.put(ci.model_copy(update={"rounds": ci.rounds + 1}))
    closed, round_complete = close_job(tc)
    ctx.put(closed)
    if round_complete:
        logger.info(f"TC {tc.id[:12]} round {tc.round} complete")
        ctx.emit(EventType.ROUND_COMPLETE, closed.key, {
            "tc": tc.id,
            "round": tc.round,
            "tj_ids": tc.cur_tj_ids,
        })
    else:
        ctx.emit(EventType.TJ_UPDATED, tj.key, {
            "tj": tj.id,
            "tc": tc.id,
            "ci": ci.id,
            "dss": ci.dss,
            "round": tc.round,
        })
    return tj.id


def _penalize_copy(ctx: TxContext, tc: TrainCouple, tj: TrainJob, ci, original: TrainJob) -> None:
    ctx.put(transition(ci, CIStatus.FRAUD))
    ctx.put(transition(tj, TJStatus.VOIDED))
    closed, round_complete = close_job(tc)
    ctx.put(closed)
    record = FraudRecord(
        id=derive_id(ctx.tx_id, "FR"),
        subject=tj.id,
        subject_kind="TJ",
        ci=ci.id,
        flagged_by="ledger",
        evidence=f"commitment already declared by job {original.id}",
    )
    ctx.put(record)
    logger.warning(f"CI {ci.id[:12]} repeated the commitment of job {original.id[:12]}")
    ctx.emit(EventType.FRAUD_FLAGGED, ci.key, {
        "ci": ci.id,
        "co": ci.co,
        "subject": tj.id,
        "fr": record.id,
        "tc": tc.id,
        "round": tc.round,
        "round_complete": round_complete,
    })
    ctx.penalize()


@contract.transaction(TxType.FINISH_TC)
def finish_tc(ctx: TxContext, tc_id: str) -> str:
    """Args: [tc_id]."""
    tc = ctx.get_required("TC", tc_id)
    owned_model(ctx, tc.mod)
    if tc.status != TCStatus.ROUND_DONE:
        raise WrongStatus(f"train couple {tc_id} is {tc.status.value}, expected RoundDone")
    finished = transition(tc, TCStatus.TRAINED)
    ctx.put(finished)
    ctx.emit(EventType.TC_FINISHED, finished.key, {"tc": tc.id, "rounds": tc.round, "mod": tc.mod})
    return tc.id
