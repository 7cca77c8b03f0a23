"""
FlagFraud: a data owner or model owner tags a cloud instance as fraudulent.

The subject is a CI or a TJ id. Any job of that CI still pending in its
train couple's current round is voided so the round can still close.
"""
import logging
from typing import List, Optional, Tuple

from ..assets import CIStatus, CloudInstance, FraudRecord, TJStatus, can_transition, transition
from ..encoding import derive_id
from ..exceptions import NotParty, UnknownSubject, WrongStatus
from ..ledger.envelope import TxType
from ..ledger.events import EventType
from .registry import TxContext, contract
from .training import close_job

# Configure logging
logger = logging.getLogger(__name__)


def _resolve_subject(ctx: TxContext, subject: str) -> Tuple[str, CloudInstance, Optional[str]]:
    """Returns (subject_kind, ci, tc_id of the job if the subject is a TJ)."""
    ci = ctx.get(f"CI:{subject}")
    if ci is not None:
        return "CI", ci, None
    tj = ctx.get(f"TJ:{subject}")
    if tj is not None:
        return "TJ", ctx.get_required("CI", tj.ci), tj.tc
    raise UnknownSubject(f"{subject} is neither a CI nor a TJ")


def _is_party(ctx: TxContext, ci: CloudInstance, tc_id: Optional[str]) -> bool:
    dss = ctx.get_required("DSS", ci.dss)
    if ctx.get_required("DS", dss.ds_id).owner == ctx.caller:
        return True
    if tc_id is not None:
        tcs = [ctx.get_required("TC", tc_id)]
    else:
        tcs = [tc for tc in ctx.scan("TC:") if tc.ds == dss.ds_id]
    return any(ctx.get_required("Mod", tc.mod).owner == ctx.caller for tc in tcs)


def _void_open_jobs(ctx: TxContext, ci: CloudInstance) -> List[Tuple[str, bool]]:
    """Void the CI's pending current-round jobs; returns (tc_id, round_complete) per job."""
    closed = []
    for tc in ctx.scan("TC:"):
        for tj_id in tc.cur_tj_ids:
            tj = ctx.get_required("TJ", tj_id)
            if tj.ci != ci.id or tj.status != TJStatus.PENDING:
                continue
            ctx.put(transition(tj, TJStatus.VOIDED))
            tc, round_complete = close_job(tc)
            ctx.put(tc)
            closed.append((tc.id, round_complete))
    return closed


@contract.transaction(TxType.FLAG_FRAUD)
def flag_fraud(ctx: TxContext, subject: str, evidence: str = "") -> str:
    """Args: [subject_id, evidence]. Evidence is stored verbatim."""
    subject_kind, ci, tc_id = _resolve_subject(ctx, subject)
    if not _is_party(ctx, ci, tc_id):
        raise NotParty(f"caller is neither the data owner nor a model owner training on {ci.id}")
    if not can_transition(ci, CIStatus.FRAUD):
        raise WrongStatus(f"CI {ci.id} is {ci.status.value} and cannot be flagged")

    ctx.put(transition(ci, CIStatus.FRAUD))
    closed = _void_open_jobs(ctx, ci)
    record = FraudRecord(
        id=derive_id(ctx.tx_id, "FR"),
        subject=subject,
        subject_kind=subject_kind,
        ci=ci.id,
        flagged_by=ctx.caller,
        evidence=evidence,
    )
    ctx.put(record)
    logger.warning(f"CI {ci.id[:12]} flagged by {ctx.caller[:12]}: {evidence}")

    affected_tc = tc_id or (closed[0][0] if closed else None)
    ctx.emit(EventType.FRAUD_FLAGGED, ci.key, {
        "ci": ci.id,
        "co": ci.co,
        "subject": subject,
        "fr": record.id,
        "tc": affected_tc,
        "round_complete": any(done for _, done in closed),
        "completed_tcs": [tc for tc, done in closed if done],
    })
    return record.id
