"""
Verification suite: every participant check re-run from the ledger plus the
bytes held off-chain.

Each check yields one report per subject (a CI, TJ, DSS, TC or member id).
Reports are reproducible from an exported ledger and object store alone.
"""
import logging
from collections import defaultdict
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from pydantic import BaseModel

from ..assets import CIStatus, TJStatus, parse_key
from ..chaincode.selection import select_round
from ..dataplane import commit
from ..encoding import sha256, sha256_hex
from ..ledger import Ledger, TxType
from ..ledger.events import EventType
from ..offchain import ObjectStore, open_locator
from .cloud_owner import model_locator
from .data_owner import chunk_key, delivery_key

# Configure logging
logger = logging.getLogger(__name__)


class Check(str, Enum):
    DATA_CLAIM = "DataClaim"
    DUPLICATE_COMMIT = "DuplicateCommit"
    RECEIVED_DATA = "ReceivedData"
    CI_VERIFY = "CIVerify"
    MODEL_DOWNLOAD = "ModelDownload"
    MODEL_HASH_COPY = "ModelHashCopy"
    ROUND_SELECTION_INDEPENDENCE = "RoundSelectionIndependence"
    IDENTITY_OPACITY = "IdentityOpacity"


class VerificationReport(BaseModel):
    subject: str
    check: Check
    verdict: str
    evidence: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def _report(subject: str, check: Check, ok: bool, evidence: str) -> VerificationReport:
    return VerificationReport(subject=subject, check=check, verdict="pass" if ok else "fail", evidence=evidence)


class _Suite:
    def __init__(self, ledger: Ledger, store: ObjectStore):
        self.ledger = ledger
        self.store = store
        self._keys: Dict[str, Optional[bytes]] = {}

    def assets(self, prefix: str):
        for key in self.ledger.state.keys(prefix):
            yield self.ledger.get_asset(key)

    def asset(self, kind: str, asset_id: str):
        return self.ledger.get_asset(f"{kind}:{asset_id}")

    def mask_key(self, tc_id: str) -> Optional[bytes]:
        if tc_id not in self._keys:
            mod = self.asset("Mod", self.asset("TC", tc_id).mod)
            self._keys[tc_id] = self.store.get(mod.training_method.mask_key_ref)
        return self._keys[tc_id]

    def locate(self, tc_id: str, enc_model_url: str) -> Optional[str]:
        key = self.mask_key(tc_id)
        if key is None:
            return None
        try:
            return open_locator(enc_model_url, key)
        except (ValueError, UnicodeDecodeError):
            return None

    def commitment_attempts(self, tx_type: TxType) -> Iterable[Tuple[List[str], bool, Optional[str]]]:
        """Args, validity and error of every committed tx of one type, in order."""
        for block in self.ledger.blocks:
            for btx in block.txs:
                if btx.tx.tx_type == tx_type.value:
                    yield btx.tx.args, btx.valid, btx.error

    # === Checks ===

    def data_claim(self, q: int) -> List[VerificationReport]:
        """Enough replicas of each subset produced byte-identical models."""
        groups: Dict[Tuple[str, int, str], List[str]] = defaultdict(list)
        for tj in self.assets("TJ:"):
            if tj.status == TJStatus.UPDATED:
                groups[(tj.tc, tj.round, self.asset("CI", tj.ci).dss)].append(tj.id)
        reports = []
        for (tc_id, round_no, dss_id), tj_ids in sorted(groups.items()):
            ds = self.asset("DS", self.asset("TC", tc_id).ds)
            need = min(q, ds.n)
            counts: Dict[bytes, int] = defaultdict(int)
            for tj_id in tj_ids:
                tj = self.asset("TJ", tj_id)
                locator = self.locate(tc_id, tj.enc_model_url)
                data = self.store.get(locator) if locator else None
                if data is not None:
                    counts[data] += 1
            best = max(counts.values()) if counts else 0
            reports.append(_report(
                dss_id, Check.DATA_CLAIM, best >= need,
                f"round {round_no}: {best} of {len(tj_ids)} replicas agree, need {need}",
            ))
        return reports

    def duplicate_commit(self) -> List[VerificationReport]:
        """No commitment repeats one declared earlier, including rejected attempts."""
        reports = []
        seen_hashes: Dict[str, str] = {}
        for args, valid, error in self.commitment_attempts(TxType.JOIN_CI):
            if len(args) != 3 or not (valid or error == "DuplicateCommitment"):
                continue
            ci_id, digest, _ = args
            first = seen_hashes.setdefault(digest, ci_id)
            reports.append(_report(
                ci_id, Check.DUPLICATE_COMMIT, first == ci_id,
                "unique data commitment" if first == ci_id else f"hash first declared by CI {first}",
            ))

        seen: Dict[Tuple[str, int], Dict[str, str]] = defaultdict(dict)
        for args, valid, error in self.commitment_attempts(TxType.UPDATE_TJ):
            if len(args) != 4 or not (valid or error == "DuplicateCommitment"):
                continue
            tj_id, digest, nonce, _ = args
            tj = self.asset("TJ", tj_id)
            if tj is None:
                continue
            declared = seen[(tj.tc, tj.round)]
            first = declared.get(f"h:{digest}") or declared.get(f"n:{nonce}")
            declared.setdefault(f"h:{digest}", tj_id)
            declared.setdefault(f"n:{nonce}", tj_id)
            ok = first is None or first == tj_id
            reports.append(_report(
                tj_id, Check.DUPLICATE_COMMIT, ok,
                f"round {tj.round}: unique model commitment" if ok else f"commitment first declared by job {first}",
            ))
        return reports

    def received_data(self) -> List[VerificationReport]:
        """Each cloud owner's chunk hashes to its peers' commitments under their nonces."""
        reports = []
        for dss in self.assets("DSS:"):
            held = []
            for ci_id in dss.ci_ids:
                ci = self.asset("CI", ci_id)
                data = self.store.get(delivery_key(ci.co, ci.id))
                if ci.hash is not None and data is not None:
                    held.append((ci, data))
            for ci, data in held:
                agree = sum(
                    1 for peer, _ in held
                    if peer.id != ci.id and commit(data, bytes.fromhex(peer.nonce)).hash == peer.hash
                )
                ok = 2 * (agree + 1) > len(held)
                reports.append(_report(
                    ci.id, Check.RECEIVED_DATA, ok,
                    f"chunk matches {agree} of {len(held) - 1} peer commitments",
                ))
        return reports

    def ci_verify(self) -> List[VerificationReport]:
        """The data owner's own chunk reproduces each cloud instance's commitment."""
        reports = []
        for ci in self.assets("CI:"):
            if ci.hash is None:
                continue
            dss = self.asset("DSS", ci.dss)
            data = self.store.get(chunk_key(dss.ds_id, dss.index))
            ok = data is not None and commit(data, bytes.fromhex(ci.nonce)).hash == ci.hash
            reports.append(_report(ci.id, Check.CI_VERIFY, ok, f"status {ci.status.value}"))
        return reports

    def model_download(self) -> List[VerificationReport]:
        """The model behind each updated job hashes to the posted model hash."""
        reports = []
        for tj in self.assets("TJ:"):
            if tj.status != TJStatus.UPDATED:
                continue
            locator = self.locate(tj.tc, tj.enc_model_url)
            data = self.store.get(locator) if locator else None
            ok = data is not None and sha256_hex(data, bytes.fromhex(tj.nonce)) == tj.model_hash
            reports.append(_report(tj.id, Check.MODEL_DOWNLOAD, ok, "hash recomputed from downloaded model"))
        return reports

    def model_hash_copy(self) -> List[VerificationReport]:
        """Every model update points at the job's own upload, not somebody else's."""
        reports = []
        for args, valid, error in self.commitment_attempts(TxType.UPDATE_TJ):
            if len(args) != 4 or not (valid or error == "DuplicateCommitment"):
                continue
            tj_id, digest, nonce, enc = args
            tj = self.asset("TJ", tj_id)
            if tj is None:
                continue
            locator = self.locate(tj.tc, enc)
            own = model_locator(tj.tc, tj.round, tj.ci)
            data = self.store.get(locator) if locator else None
            hash_ok = data is not None and sha256_hex(data, bytes.fromhex(nonce)) == digest
            ok = hash_ok and locator == own
            evidence = "own upload" if ok else f"update points at {locator}, expected {own}"
            reports.append(_report(tj_id, Check.MODEL_HASH_COPY, ok, evidence))
        return reports

    def round_selection(self) -> List[VerificationReport]:
        """Each round's subsets follow from the block seed alone."""
        origin = {}
        for block in self.ledger.blocks:
            for btx in block.txs:
                origin[btx.tx.tx_id] = (block.prev_hash, btx.tx.args)
        previous: Dict[str, List[str]] = {}
        reports = []
        for event in self.ledger.events:
            if event.event_type != EventType.ROUND_STARTED:
                continue
            tc_id = event.payload["tc"]
            ds = self.asset("DS", event.payload["ds"])
            prev_hash, args = origin[event.tx_id]
            seed = sha256(bytes.fromhex(prev_hash), event.tx_id.encode("utf-8"))
            prior = previous.get(tc_id)
            indices = [ds.dss_ids.index(d) for d in prior] if prior else None
            expected = [ds.dss_ids[i] for i in select_round(ds.m, seed, indices)]
            chosen = list(event.payload["cur_dss_ids"])
            leaked = any(arg in ds.dss_ids for arg in args)
            ok = chosen == expected and not leaked
            reports.append(_report(
                tc_id, Check.ROUND_SELECTION_INDEPENDENCE, ok,
                f"round {event.payload['round']}: selection "
                + ("reproduced from block seed" if ok else "differs from the block-seeded draw"),
            ))
            previous[tc_id] = chosen
        return reports

    def identity_opacity(self, endpoints: Sequence[str]) -> List[VerificationReport]:
        """No world-state entry carries an actor's network endpoint."""
        needles = [e.encode("utf-8") for e in endpoints if e]
        reports = []
        for key in self.ledger.state.keys():
            raw = self.ledger.state.get(key)
            hits = [n.decode("utf-8") for n in needles if n in raw]
            kind, asset_id = parse_key(key)
            if kind in ("DO", "CO", "MO") or hits:
                reports.append(_report(
                    asset_id, Check.IDENTITY_OPACITY, not hits,
                    "no endpoint data" if not hits else f"contains {', '.join(hits)}",
                ))
        return reports


def verify_suite(ledger: Ledger, store: ObjectStore, endpoints: Sequence[str] = (), q: int = 2) -> List[VerificationReport]:
    """Run every check and return all reports, passing and failing."""
    suite = _Suite(ledger, store)
    reports: List[VerificationReport] = []
    reports += suite.data_claim(q)
    reports += suite.duplicate_commit()
    reports += suite.received_data()
    reports += suite.ci_verify()
    reports += suite.model_download()
    reports += suite.model_hash_copy()
    reports += suite.round_selection()
    reports += suite.identity_opacity(endpoints)
    failed = sum(1 for r in reports if not r.passed)
    logger.info(f"Verification: {len(reports)} reports, {failed} failing")
    return reports


def flagged_cis(ledger: Ledger) -> Set[str]:
    return {
        ledger.get_asset(key).id
        for key in ledger.state.keys("CI:")
        if ledger.get_asset(key).status == CIStatus.FRAUD
    }


def attributable(report: VerificationReport, ledger: Ledger, flagged: Set[str]) -> bool:
    """Whether a failing report is explained by a cloud instance already flagged."""
    if report.subject in flagged:
        return True
    tj = ledger.get_asset(f"TJ:{report.subject}")
    if tj is not None:
        return tj.ci in flagged
    dss = ledger.get_asset(f"DSS:{report.subject}")
    if dss is not None:
        return any(ci_id in flagged for ci_id in dss.ci_ids)
    return False
