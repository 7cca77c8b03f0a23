import numpy as np
import pytest

from ppmarket.actors.scenario import actor_seed
from ppmarket.dataplane import (
    NONCE_BYTES,
    LabeledDataset,
    commit,
    gen_nonce,
    make_dataset,
    parse_rows,
    replicate,
    serialize_rows,
    skew_violations,
    split,
    tamper,
    verify_commitment,
)
from ppmarket.encoding import sha256
from ppmarket.exceptions import BadNonce, BadSplit, Infeasible


def test_random_splits_keep_the_label_skew():
    rng = np.random.default_rng(2024)
    for trial in range(100):
        C = int(rng.integers(3, 7))
        m = int(rng.integers(C, 2 * C + 1))
        rows = int(rng.integers(200, 401))
        data = make_dataset(rows, 3, C, seed=trial)
        chunks = split(data, m, sha256(f"split|{trial}".encode()))

        assert len(chunks) == m
        assert skew_violations(data, chunks) == []
        for chunk in chunks:
            assert len(chunk.labels()) < C
            assert (chunk.subset_index % C) not in chunk.labels()
        assigned = sorted(i for chunk in chunks for i in chunk.row_indices)
        assert assigned == list(range(rows))


def test_chunks_keep_dataset_order():
    data = make_dataset(120, 2, 3, seed=5)
    for chunk in split(data, 4, b"seed"):
        assert chunk.row_indices == sorted(chunk.row_indices)
        assert chunk.rows == [data.rows[i] for i in chunk.row_indices]


def test_split_is_deterministic_per_seed():
    data = make_dataset(200, 2, 4, seed=1)
    first = split(data, 5, b"a")
    assert split(data, 5, b"a") == first
    others = [split(data, 5, seed) for seed in (b"b", b"c", b"d", b"e")]
    assert any([c.row_indices for c in o] != [c.row_indices for c in first] for o in others)


def test_split_rejects_impossible_shapes():
    two_labels = make_dataset(50, 2, 2, seed=0)
    with pytest.raises(Infeasible):
        split(two_labels, 2, b"seed")
    with pytest.raises(Infeasible):
        split(make_dataset(60, 2, 3, seed=0), 2, b"seed")
    with pytest.raises(BadSplit):
        split(two_labels, 1, b"seed")
    with pytest.raises(BadSplit):
        split(LabeledDataset(rows=[([1.0], 0), ([2.0], 0)], label_count=1), 2, b"seed")


def test_skew_violations_reports_a_chunk_with_every_label():
    data = make_dataset(30, 2, 3, seed=3)
    whole = split(data, 4, b"seed")[0].model_copy(update={"rows": data.rows})
    problems = skew_violations(data, [whole])
    assert any("every label" in p for p in problems)


def test_dataset_validation():
    with pytest.raises(ValueError):
        LabeledDataset(rows=[([1.0, 2.0], 0), ([1.0], 1)], label_count=2)
    with pytest.raises(ValueError):
        LabeledDataset(rows=[([1.0], 2)], label_count=2)


def test_chunk_file_format():
    rows = [([0.1, -2.5e-300], 1), ([1.0 / 3.0, 7.0], 0)]
    data = serialize_rows(rows)
    assert data.endswith(b"\n")
    assert parse_rows(data) == rows
    assert serialize_rows([]) == b""


def test_replicas_are_identical_copies():
    chunks = split(make_dataset(80, 2, 3, seed=2), 4, b"seed")
    plan = replicate(chunks, 3)
    assert sorted(plan) == [0, 1, 2, 3]
    for index, copies in plan.items():
        assert len(copies) == 3
        assert len({c.chunk_bytes for c in copies}) == 1
    with pytest.raises(BadSplit):
        replicate(chunks, 0)


def test_commitment_binds_chunk_and_nonce():
    chunk = serialize_rows([([1.0, 2.0], 1)])
    nonce = gen_nonce(b"actor", 0)
    c = commit(chunk, nonce)
    assert len(c.hash) == 64 and c.nonce == nonce.hex()
    assert verify_commitment(c, chunk, nonce)
    assert not verify_commitment(c, tamper(chunk), nonce)
    assert not verify_commitment(c, chunk, gen_nonce(b"actor", 1))
    assert not verify_commitment(c, chunk, b"short")
    with pytest.raises(BadNonce):
        commit(chunk, b"\x00" * (NONCE_BYTES - 1))


def test_nonces_are_deterministic_and_distinct():
    nonces = [gen_nonce(b"co-1", k) for k in range(50)]
    assert all(len(n) == NONCE_BYTES for n in nonces)
    assert len(set(nonces)) == 50
    assert gen_nonce(b"co-1", 7) == nonces[7]
    assert gen_nonce(b"co-2", 7) != nonces[7]


def test_nonces_never_collide_across_actors():
    seeds = [actor_seed(7, f"co-{i}") for i in range(10)]
    drawn = [gen_nonce(seed, k) for seed in seeds for k in range(1000)]
    assert len(drawn) == 10_000
    assert len(set(drawn)) == len(drawn)


def test_tamper_always_changes_the_bytes():
    chunk = serialize_rows([([0.5], 0), ([1.5], 2)])
    assert tamper(chunk) != chunk
    assert tamper(b"") != b""


def test_make_dataset_is_reproducible():
    a = make_dataset(100, 4, 3, seed=11)
    assert a == make_dataset(100, 4, 3, seed=11)
    assert a != make_dataset(100, 4, 3, seed=12)
    assert {label for _, label in a.rows} == {0, 1, 2}
    assert a.features == 4
