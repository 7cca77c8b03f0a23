import math
import random
from collections import Counter

import numpy as np
import pytest

from ppmarket.assets import CIStatus, TCStatus, TJStatus, deserialize
from ppmarket.chaincode import contract
from ppmarket.chaincode.selection import permutation, round_size, select_round
from ppmarket.encoding import derive_id, seed_int, sha256, sha256_hex
from ppmarket.ledger import EventType, Ledger, TransactionEnvelope, TxType, WorldState

from conftest import ChainDriver, build_market


def _update(market, tj_id, model_hash, nonce, url="sealed-url"):
    tj = market.chain.asset("TJ", tj_id)
    return market.chain.call(TxType.UPDATE_TJ, market.co_of[tj.ci], tj_id, model_hash, nonce, url)


def _start(market, tc, *model):
    market.chain.ok(TxType.START_ROUND, market.mo, tc, *model)
    return market.chain.asset("TC", tc)


def test_every_external_transaction_is_registered():
    assert set(contract.tx_types) == set(TxType)


# === Members and data distribution ===

def test_member_ids_are_derived_from_the_transaction(chain):
    co = chain.ok(TxType.CREATE_CO, "", "cloud", "org", "3")
    assert co == derive_id("tx-1", "CO")
    member = chain.asset("CO", co)
    assert member.name == "cloud" and member.how_many == "3"


def test_create_ds_checks_role_and_shape(market):
    chain = market.chain
    assert chain.call(TxType.CREATE_DS, market.cos[0], "2", "3").error == "NotDataOwner"
    assert chain.call(TxType.CREATE_DS, market.do, "1", "3").error == "BadShape"
    assert chain.call(TxType.CREATE_DS, market.do, "2", "0").error == "BadShape"
    assert chain.call(TxType.CREATE_DS, market.do, "two", "3").error == "BadArguments"
    assert chain.call(TxType.CREATE_DS, market.do).error == "BadArguments"


def test_create_dss_in_order(market):
    chain = market.chain
    ds = chain.ok(TxType.CREATE_DS, market.do, "2", "1")
    assert chain.call(TxType.CREATE_DSS, market.do, ds, "1").error == "OutOfOrder"
    other_do = chain.ok(TxType.CREATE_DO, "", "mallory")
    assert chain.call(TxType.CREATE_DSS, other_do, ds, "0").error == "NotOwner"
    chain.ok(TxType.CREATE_DSS, market.do, ds, "0")
    chain.ok(TxType.CREATE_DSS, market.do, ds, "1")
    assert chain.call(TxType.CREATE_DSS, market.do, ds, "2").error == "TooMany"
    assert chain.asset("DS", ds).complete


def test_create_ci_checks_owner_role_and_quota(market):
    chain = market.chain
    dss = market.dss[0]
    assert chain.call(TxType.CREATE_CI, market.do, dss, market.cos[0]).error == "ReplicaQuotaFull"
    assert chain.call(TxType.CREATE_CI, market.do, dss, market.mo).error == "NotCloudOwner"
    assert chain.call(TxType.CREATE_CI, market.mo, dss, market.cos[0]).error == "NotOwner"
    assert chain.call(TxType.CREATE_CI, market.do, "missing", market.cos[0]).error == "UnknownAsset"


def test_join_ci_rules(chain):
    market = build_market(chain, verify=False)
    ci = market.cis[market.dss[0]][0]
    owner, stranger = market.co_of[ci], market.cos[-1]
    assert chain.call(TxType.JOIN_CI, stranger, ci, "ff" * 32, "00" * 16).error == "NotAssignee"
    assert chain.call(TxType.JOIN_CI, owner, ci, "ff" * 32, "00" * 16).error == "WrongStatus"

    ds = chain.ok(TxType.CREATE_DS, market.do, "2", "1")
    dss = chain.ok(TxType.CREATE_DSS, market.do, ds, "0")
    fresh = chain.ok(TxType.CREATE_CI, market.do, dss, owner)
    reused = sha256_hex(f"chunk|{ci}".encode())
    assert chain.call(TxType.JOIN_CI, owner, fresh, reused, "11" * 16).error == "DuplicateCommitment"
    assert chain.asset("CI", fresh).status == CIStatus.FREE
    assert chain.call(TxType.JOIN_CI, owner, fresh, "", "11" * 16).error == "BadArguments"
    chain.ok(TxType.JOIN_CI, owner, fresh, "ee" * 32, "11" * 16)
    assert chain.asset("CI", fresh).status == CIStatus.JOINED


MALFORMED_COMMITMENTS = [
    ("", "11" * 16),
    ("ee" * 31, "11" * 16),
    ("ee" * 33, "11" * 16),
    ("EE" * 32, "11" * 16),
    ("zz" * 32, "11" * 16),
    ("ee" * 32, ""),
    ("ee" * 32, "not-hex"),
    ("ee" * 32, "11" * 15),
    ("ee" * 32, "11" * 17),
    ("ee" * 32, "AB" * 16),
    ("ee" * 32, "1" * 31),
]


@pytest.mark.parametrize("digest, nonce", MALFORMED_COMMITMENTS)
def test_join_ci_rejects_malformed_commitments(market, digest, nonce):
    chain = market.chain
    owner = market.cos[0]
    ds = chain.ok(TxType.CREATE_DS, market.do, "2", "1")
    dss = chain.ok(TxType.CREATE_DSS, market.do, ds, "0")
    fresh = chain.ok(TxType.CREATE_CI, market.do, dss, owner)
    events = len(chain.ledger.events)

    assert chain.call(TxType.JOIN_CI, owner, fresh, digest, nonce).error == "BadArguments"
    ci = chain.asset("CI", fresh)
    assert ci.status == CIStatus.FREE and ci.nonce is None and ci.hash is None
    assert len(chain.ledger.events) == events


@pytest.mark.parametrize("digest, nonce", MALFORMED_COMMITMENTS)
def test_update_tj_rejects_malformed_commitments(market, digest, nonce):
    chain = market.chain
    tc = market.train_couple()
    tj = _start(market, tc).cur_tj_ids[0]

    assert _update(market, tj, digest, nonce).error == "BadArguments"
    job = chain.asset("TJ", tj)
    assert job.status == TJStatus.PENDING and job.nonce is None
    assert chain.asset("CI", job.ci).status == CIStatus.VERIFIED
    assert chain.asset("TC", tc).rem == 3


def test_malformed_nonce_is_rejected_before_the_duplicate_check(market):
    chain = market.chain
    tc = market.train_couple()
    a, b, _ = _start(market, tc).cur_tj_ids
    assert _update(market, a, "11" * 32, "22" * 16).valid
    assert _update(market, b, "11" * 32, "not-hex").error == "BadArguments"
    assert chain.asset("TJ", b).status == TJStatus.PENDING
    assert chain.asset("CI", chain.asset("TJ", b).ci).status == CIStatus.VERIFIED
    assert not any(event.event_type == EventType.FRAUD_FLAGGED for event in chain.ledger.events)


def test_model_hashes_must_be_digests(market):
    chain = market.chain
    spec = chain.asset("Mod", market.mod).training_method.model_dump_json()
    result = chain.call(TxType.CREATE_MOD, market.mo, "linear-regression", "models/x", spec, "not-a-digest")
    assert result.error == "BadArguments"

    tc = market.train_couple()
    for k, tj in enumerate(_start(market, tc).cur_tj_ids):
        _update(market, tj, f"{k:064x}", f"{k:032x}")
    assert chain.call(TxType.START_ROUND, market.mo, tc, "models/next", "cd" * 31).error == "BadArguments"
    assert chain.asset("TC", tc).status == TCStatus.ROUND_DONE


def test_verify_ci_false_flags_fraud(chain):
    market = build_market(chain, verify=False)
    good, bad = market.cis[market.dss[0]][:2]
    assert chain.call(TxType.VERIFY_CI, market.mo, good, "true").error == "NotOwner"
    assert chain.call(TxType.VERIFY_CI, market.do, good, "maybe").error == "BadArguments"
    chain.ok(TxType.VERIFY_CI, market.do, good, "true")
    chain.ok(TxType.VERIFY_CI, market.do, bad, "false")
    assert chain.asset("CI", good).status == CIStatus.VERIFIED
    assert chain.asset("CI", bad).status == CIStatus.FRAUD
    event = chain.ledger.events[-1]
    assert event.event_type == EventType.FRAUD_FLAGGED
    assert event.payload["ci"] == bad and event.payload["tc"] is None
    assert chain.call(TxType.VERIFY_CI, market.do, bad, "true").error == "WrongStatus"


# === Train couples ===

def test_request_tc_needs_a_majority_of_verified_replicas(chain):
    market = build_market(chain, verify=False)
    assert chain.call(TxType.REQUEST_TC, market.mo, market.ds, market.mod).error == "DatasetNotReady"
    first, second = market.dss
    for k, ci in enumerate(market.cis[first]):
        chain.ok(TxType.VERIFY_CI, market.do, ci, "true" if k else "false")
    for k, ci in enumerate(market.cis[second]):
        chain.ok(TxType.VERIFY_CI, market.do, ci, "true" if k == 0 else "false")
    assert chain.call(TxType.REQUEST_TC, market.mo, market.ds, market.mod).error == "DatasetNotReady"
    assert chain.call(TxType.REQUEST_TC, market.cos[0], market.ds, market.mod).error == "NotOwner"


def test_minority_fraud_does_not_block_training(chain):
    market = build_market(chain, verify=False)
    for dss in market.dss:
        for k, ci in enumerate(market.cis[dss]):
            chain.ok(TxType.VERIFY_CI, market.do, ci, "false" if k == 0 else "true")
    tc = market.train_couple()
    state = _start(market, tc)
    assert state.rem == 2
    jobs = [chain.asset("TJ", tj) for tj in state.cur_tj_ids]
    assert all(chain.asset("CI", tj.ci).status == CIStatus.VERIFIED for tj in jobs)


def test_start_round_lifecycle(market):
    chain = market.chain
    tc = chain.ok(TxType.REQUEST_TC, market.mo, market.ds, market.mod)
    assert chain.asset("TC", tc).status == TCStatus.REQUESTED
    assert chain.call(TxType.START_ROUND, market.mo, tc).error == "NotApproved"
    assert chain.call(TxType.APPROVE_TC, market.mo, tc).error == "NotOwner"
    chain.ok(TxType.APPROVE_TC, market.do, tc)
    assert chain.call(TxType.APPROVE_TC, market.do, tc).error == "WrongStatus"
    assert chain.call(TxType.START_ROUND, market.do, tc).error == "NotOwner"

    state = _start(market, tc)
    assert state.status == TCStatus.TRAINING
    assert state.round == 1 and state.rem == state.round_rem == 3
    assert len(state.cur_dss_ids) == 1
    expected = [derive_id(tc, ci, "1") for ci in market.cis[state.cur_dss_ids[0]]]
    assert state.cur_tj_ids == expected
    assert chain.call(TxType.START_ROUND, market.mo, tc).error == "RoundInProgress"

    started = chain.ledger.events[-1]
    assert started.event_type == EventType.ROUND_STARTED
    assert started.payload["tj_ids"] == expected


def test_round_closes_after_every_job_updates(market):
    chain = market.chain
    tc = market.train_couple()
    state = _start(market, tc)
    first_round = state.cur_dss_ids
    for k, tj in enumerate(state.cur_tj_ids):
        assert _update(market, tj, f"{k:064x}", f"{k:032x}").valid
    assert chain.ledger.events[-1].event_type == EventType.ROUND_COMPLETE
    done = chain.asset("TC", tc)
    assert done.status == TCStatus.ROUND_DONE and done.rem == 0
    assert all(chain.asset("TJ", tj).status == TJStatus.UPDATED for tj in state.cur_tj_ids)
    assert _update(market, state.cur_tj_ids[0], "aa" * 32, "bb" * 16).error == "WrongStatus"

    second = _start(market, tc)
    assert set(second.cur_dss_ids) | set(first_round) == set(market.dss)
    assert _update(market, state.cur_tj_ids[0], "aa" * 32, "bb" * 16).error == "WrongRound"


def test_update_tj_checks_assignee_first(market):
    tc = market.train_couple()
    tj = _start(market, tc).cur_tj_ids[0]
    result = market.chain.call(TxType.UPDATE_TJ, market.do, tj, "aa" * 32, "bb" * 16, "url")
    assert result.error == "NotAssignee"
    assert _update(market, tj, "", "bb" * 16).error == "BadArguments"


@pytest.mark.parametrize("reuse", ["hash", "nonce"])
def test_repeated_model_commitment_is_penalized(market, reuse):
    chain = market.chain
    tc = market.train_couple()
    a, b, c = _start(market, tc).cur_tj_ids
    assert _update(market, a, "11" * 32, "22" * 16).valid
    copied = ("11" * 32, "33" * 16) if reuse == "hash" else ("44" * 32, "22" * 16)
    result = _update(market, b, *copied)
    assert not result.valid and result.error == "DuplicateCommitment"

    copier = chain.asset("TJ", b)
    assert copier.status == TJStatus.VOIDED
    assert chain.asset("CI", copier.ci).status == CIStatus.FRAUD
    assert chain.asset("TC", tc).rem == 1
    event = chain.ledger.events[-1]
    assert event.event_type == EventType.FRAUD_FLAGGED
    assert event.payload["subject"] == b and not event.payload["round_complete"]
    record = chain.asset("FR", event.payload["fr"])
    assert record.flagged_by == "ledger" and record.ci == copier.ci

    assert _update(market, c, "55" * 32, "66" * 16).valid
    assert chain.asset("TC", tc).status == TCStatus.ROUND_DONE


def test_start_round_publishes_new_model(market):
    chain = market.chain
    tc = market.train_couple()
    for k, tj in enumerate(_start(market, tc).cur_tj_ids):
        _update(market, tj, f"{k:064x}", f"{k:032x}")
    assert chain.call(TxType.START_ROUND, market.mo, tc, "models/next").error == "BadArguments"
    _start(market, tc, "models/next", "cd" * 32)
    mod = chain.asset("Mod", market.mod)
    assert mod.model_url == "models/next" and mod.model_hash == "cd" * 32


def test_finish_tc(market):
    chain = market.chain
    tc = market.train_couple()
    jobs = _start(market, tc).cur_tj_ids
    assert chain.call(TxType.FINISH_TC, market.mo, tc).error == "WrongStatus"
    for k, tj in enumerate(jobs):
        _update(market, tj, f"{k:064x}", f"{k:032x}")
    assert chain.call(TxType.FINISH_TC, market.do, tc).error == "NotOwner"
    chain.ok(TxType.FINISH_TC, market.mo, tc)
    assert chain.asset("TC", tc).status == TCStatus.TRAINED
    assert chain.call(TxType.START_ROUND, market.mo, tc).error == "NotApproved"


# === FlagFraud ===

def test_flag_fraud_parties_and_subjects(market):
    chain = market.chain
    tc = market.train_couple()
    jobs = _start(market, tc).cur_tj_ids
    assert chain.call(TxType.FLAG_FRAUD, market.cos[0], jobs[0], "x").error == "NotParty"
    assert chain.call(TxType.FLAG_FRAUD, market.mo, "nothing", "x").error == "UnknownSubject"

    fr = chain.ok(TxType.FLAG_FRAUD, market.mo, jobs[0], "model disagrees")
    record = chain.asset("FR", fr)
    assert record.evidence == "model disagrees" and record.subject_kind == "TJ"
    job = chain.asset("TJ", jobs[0])
    assert job.status == TJStatus.VOIDED
    assert chain.asset("CI", job.ci).status == CIStatus.FRAUD
    assert chain.asset("TC", tc).rem == 2
    assert chain.call(TxType.FLAG_FRAUD, market.do, job.ci, "again").error == "WrongStatus"


def test_flagging_the_last_pending_job_completes_the_round(market):
    chain = market.chain
    tc = market.train_couple()
    a, b, c = _start(market, tc).cur_tj_ids
    _update(market, a, "01" * 32, "01" * 16)
    _update(market, b, "02" * 32, "02" * 16)
    ci = chain.asset("TJ", c).ci
    chain.ok(TxType.FLAG_FRAUD, market.do, ci, "offline")
    event = chain.ledger.events[-1]
    assert event.payload["round_complete"] is True
    assert event.payload["completed_tcs"] == [tc]
    assert chain.asset("TC", tc).status == TCStatus.ROUND_DONE


def test_model_owner_may_flag_a_cloud_instance_of_its_dataset(market):
    market.train_couple()
    ci = market.cis[market.dss[1]][2]
    market.chain.ok(TxType.FLAG_FRAUD, market.mo, ci, "no response")
    assert market.chain.asset("CI", ci).status == CIStatus.FRAUD


def test_randomized_commitment_replays_never_slip_through():
    for seed in range(25):
        rng = random.Random(seed)
        chain = ChainDriver(Ledger())
        market = build_market(chain)
        tc = market.train_couple()
        jobs = _start(market, tc).cur_tj_ids
        rng.shuffle(jobs)
        declared = []
        for k, tj in enumerate(jobs):
            fresh = (f"{seed:04x}{k:060x}", f"{seed:04x}{k:028x}")
            if declared and rng.random() < 0.6:
                source = rng.choice(declared)
                replay = (source[0], fresh[1]) if rng.random() < 0.5 else (fresh[0], source[1])
                result = _update(market, tj, *replay)
                assert result.error == "DuplicateCommitment"
                assert chain.asset("TJ", tj).status == TJStatus.VOIDED
            else:
                assert _update(market, tj, *fresh).valid
                declared.append(fresh)
        updated = [chain.asset("TJ", tj) for tj in jobs if chain.asset("TJ", tj).status == TJStatus.UPDATED]
        assert len({tj.model_hash for tj in updated}) == len(updated)
        assert len({tj.nonce for tj in updated}) == len(updated)
        assert chain.asset("TC", tc).status == TCStatus.ROUND_DONE


@pytest.fixture(scope="module")
def replay_base():
    """A market with a started round and a second dataset of unjoined instances."""
    chain = ChainDriver(Ledger())
    market = build_market(chain)
    tc = market.train_couple()
    jobs = _start(market, tc).cur_tj_ids
    ds = chain.ok(TxType.CREATE_DS, market.do, "2", "2")
    free = []
    for i in range(2):
        dss = chain.ok(TxType.CREATE_DSS, market.do, ds, str(i))
        for r in range(2):
            co = market.cos[2 * i + r]
            free.append((chain.ok(TxType.CREATE_CI, market.do, dss, co), co))
    declared = [chain.asset("CI", ci).hash for ci in market.all_cis()]
    prev_hash = chain.ledger.blocks[-1].block_hash
    return market, tc, jobs, free, declared, prev_hash


def _fork(state):
    world = WorldState()
    world.entries = dict(state.entries)
    world.versions = dict(state.versions)
    return world


def _read(world, kind, asset_id):
    return deserialize(world.get(f"{kind}:{asset_id}"))


@pytest.mark.slow
def test_mixed_commitment_sequences_never_accept_a_replay(replay_base):
    market, tc, jobs, free, base_hashes, prev_hash = replay_base
    base = market.chain.ledger.state
    before = base.digest()
    replays = 0
    for seed in range(10_000):
        rng = random.Random(seed)
        world = _fork(base)

        def run(tx_type, caller, *args):
            env = TransactionEnvelope(tx_id=f"seq-{seed}-{rng.random()}", tx_type=tx_type.value,
                                      caller=caller, args=list(args), submit_time=0)
            outcome = contract.execute(world, env, prev_hash)
            for key, value in outcome.writes.items():
                world.put(key, value)
            return outcome

        ops = [("join", ci, co) for ci, co in free] + [("update", tj, None) for tj in jobs]
        rng.shuffle(ops)
        hashes = list(base_hashes)
        updated = []
        for k, (kind, subject, co) in enumerate(ops):
            fresh = (sha256_hex(f"{seed}|{k}".encode()), f"{seed:016x}{k:016x}")
            if kind == "join":
                if rng.random() < 0.5:
                    replays += 1
                    outcome = run(TxType.JOIN_CI, co, subject, rng.choice(hashes), fresh[1])
                    assert outcome.error == "DuplicateCommitment"
                    assert _read(world, "CI", subject).status == CIStatus.FREE
                    continue
                assert run(TxType.JOIN_CI, co, subject, *fresh).valid
                hashes.append(fresh[0])
                if rng.random() < 0.5:
                    assert run(TxType.VERIFY_CI, market.do, subject, rng.choice(["true", "false"])).valid
                continue
            owner = market.co_of[_read(world, "TJ", subject).ci]
            if updated and rng.random() < 0.5:
                replays += 1
                source = rng.choice(updated)
                replay = rng.choice([(source[0], fresh[1]), (fresh[0], source[1]), source])
                outcome = run(TxType.UPDATE_TJ, owner, subject, *replay, "sealed-url")
                assert outcome.error == "DuplicateCommitment"
                assert _read(world, "TJ", subject).status == TJStatus.VOIDED
                assert _read(world, "CI", _read(world, "TJ", subject).ci).status == CIStatus.FRAUD
                continue
            assert run(TxType.UPDATE_TJ, owner, subject, *fresh, "sealed-url").valid
            updated.append(fresh)

        cis = [deserialize(world.get(key)) for key in world.keys("CI:")]
        joined = [ci.hash for ci in cis if ci.hash is not None]
        assert len(joined) == len(set(joined))
        done = [_read(world, "TJ", tj) for tj in jobs]
        done = [tj for tj in done if tj.status == TJStatus.UPDATED]
        assert len(done) == len(updated)
        assert len({tj.model_hash for tj in done}) == len(done)
        assert len({tj.nonce for tj in done}) == len(done)
        assert _read(world, "TC", tc).status == TCStatus.ROUND_DONE
        assert _read(world, "TC", tc).rem == 0
    assert base.digest() == before
    assert replays > 10_000


# === Selection ===

@pytest.mark.parametrize("m", range(2, 17))
def test_two_consecutive_rounds_cover_every_subset(m):
    for s in range(20):
        seeds = [sha256(f"{m}|{s}|{r}".encode()) for r in range(4)]
        rounds = [select_round(m, seeds[0])]
        for seed in seeds[1:]:
            rounds.append(select_round(m, seed, rounds[-1]))
        for chosen in rounds:
            assert len(chosen) == round_size(m) == math.ceil(m / 2)
            assert chosen == sorted(set(chosen))
            assert all(0 <= i < m for i in chosen)
        for prev, cur in zip(rounds, rounds[1:]):
            assert set(prev) | set(cur) == set(range(m))
        assert select_round(m, seeds[1], rounds[0]) == rounds[1]


def test_permutation_is_a_seeded_shuffle():
    seed = sha256(b"seed")
    perm = permutation(seed, range(10))
    assert sorted(perm) == list(range(10))
    assert permutation(seed, range(10)) == perm
    assert permutation(sha256(b"other"), range(10)) != perm
    assert perm == [int(i) for i in np.random.default_rng(seed_int(seed)).permutation(10)]
    assert sorted(permutation(seed, ["a", "b", "c"])) == ["a", "b", "c"]


def test_permutation_has_no_position_bias():
    firsts = Counter(permutation(sha256(f"bias|{s}".encode()), range(3))[0] for s in range(3000))
    assert set(firsts) == {0, 1, 2}
    assert all(850 < count < 1150 for count in firsts.values())


def test_selection_ignores_model_owner_inputs():
    chosen = []
    for model in ((), ("models/elsewhere", "ef" * 32)):
        chain = ChainDriver(Ledger())
        market = build_market(chain, m=6, n=1)
        tc = market.train_couple()
        chosen.append(_start(market, tc, *model).cur_dss_ids)
    assert chosen[0] == chosen[1]
