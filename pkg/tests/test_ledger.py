import pytest

from ppmarket.config import LedgerConfig
from ppmarket.exceptions import ClockRegression, CorruptChain, DuplicateTransaction, MalformedEnvelope, UnknownTxType
from ppmarket.ledger import GENESIS_PREV_HASH, Block, BlockTx, EventType, Ledger, TransactionEnvelope, TxType


def _env(tx_id, tx_type=TxType.CREATE_DO, caller="", args=None, t=0):
    return TransactionEnvelope(tx_id=tx_id, tx_type=tx_type.value, caller=caller, args=args or [], submit_time=t)


def test_submit_rejects_malformed_envelopes(ledger):
    with pytest.raises(MalformedEnvelope):
        ledger.submit({"tx_type": "CreateDO", "submit_time": 0})
    with pytest.raises(UnknownTxType):
        ledger.submit({"tx_id": "a", "tx_type": "Transfer", "submit_time": 0})
    ledger.submit(_env("a"))
    with pytest.raises(DuplicateTransaction):
        ledger.submit(_env("a"))
    assert ledger.pending_count == 1


def test_clock_never_runs_backwards(ledger):
    ledger.tick(10)
    with pytest.raises(ClockRegression):
        ledger.tick(9)


def test_blocks_cut_when_full_or_expired():
    ledger = Ledger(LedgerConfig(block_size=3, block_timeout_ms=1000))
    for i in range(7):
        ledger.submit(_env(f"tx-{i}"))
    blocks = ledger.tick(0)
    assert [len(b.txs) for b in blocks] == [3, 3]
    assert ledger.pending_count == 1
    assert ledger.tick(999) == []
    blocks = ledger.tick(1000)
    assert [len(b.txs) for b in blocks] == [1]
    assert ledger.oldest_pending_time is None


def test_hash_chain_links_and_replays(market):
    ledger = market.chain.ledger
    assert ledger.blocks[0].prev_hash == GENESIS_PREV_HASH
    for prev, block in zip(ledger.blocks, ledger.blocks[1:]):
        assert block.prev_hash == prev.block_hash
        assert block.height == prev.height + 1
    ledger.verify_chain()
    assert ledger.replay().snapshot() == ledger.state.snapshot()


def test_invalid_transaction_is_recorded_without_state_change(chain):
    before = chain.ledger.state.snapshot()
    result = chain.call(TxType.CREATE_DS, "nobody", "2", "3")
    assert not result.valid
    assert result.error == "UnknownCaller"
    assert chain.ledger.state.snapshot() == before
    btx = chain.ledger.blocks[-1].txs[0]
    assert btx.valid is False and btx.error == "UnknownCaller"


def test_one_event_per_state_changing_transaction(chain):
    sub = chain.ledger.subscribe([EventType.MEMBER_CREATED])
    first = chain.ok(TxType.CREATE_DO, "", "a")
    second = chain.ok(TxType.CREATE_CO, "", "b")
    chain.call(TxType.CREATE_DS, "nobody", "2", "3")
    events = sub.drain()
    assert [e.payload["member"] for e in events] == [first, second]
    assert len(chain.ledger.events) == 2


def test_result_reports_value_and_height(chain):
    member = chain.ok(TxType.CREATE_MO, "", "m")
    result = chain.ledger.result("tx-1")
    assert result.value == member
    assert result.block_height == 0
    assert chain.ledger.result("missing") is None


def test_export_load_round_trip(market, tmp_path):
    ledger = market.chain.ledger
    path = ledger.export(tmp_path / "ledger.ndjson")
    loaded = Ledger.load(path, ledger.config)
    assert loaded.state.snapshot() == ledger.state.snapshot()
    assert loaded.height == ledger.height
    assert loaded.result("tx-1") == ledger.result("tx-1")
    assert [e.event_type for e in loaded.events] == [e.event_type for e in ledger.events]


def test_single_byte_tamper_is_detected(market, tmp_path):
    path = market.chain.ledger.export(tmp_path / "ledger.ndjson")
    original = path.read_bytes()
    positions = sorted(set(range(0, len(original), max(1, len(original) // 150))) | {len(original) - 1})
    for pos in positions:
        tampered = bytearray(original)
        tampered[pos] = (tampered[pos] + 1) % 256
        target = tmp_path / "tampered.ndjson"
        target.write_bytes(bytes(tampered))
        with pytest.raises(CorruptChain):
            Ledger.load(target, market.chain.ledger.config)


def test_replay_detects_forged_validity_flags(market, tmp_path):
    ledger = market.chain.ledger
    blocks = list(ledger.blocks)
    head = blocks[0]
    forged_txs = [BlockTx(tx=t.tx, valid=not t.valid, error="Forged") for t in head.txs]
    blocks[0] = Block.seal(0, head.prev_hash, forged_txs, head.cut_time)
    path = tmp_path / "forged.ndjson"
    path.write_text("".join(b.to_line() + "\n" for b in blocks[:1]), encoding="utf-8")
    with pytest.raises(CorruptChain):
        Ledger.load(path, ledger.config)


def test_verify_chain_rejects_broken_link(market):
    blocks = list(market.chain.ledger.blocks)
    blocks[1], blocks[2] = blocks[2], blocks[1]
    with pytest.raises(CorruptChain):
        market.chain.ledger.verify_chain(blocks)
