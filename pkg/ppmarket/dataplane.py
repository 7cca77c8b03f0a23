"""
Off-chain data handling for data owners and cloud owners.

Splits a labeled dataset into m skewed subsets so no subset reveals the whole
class structure, replicates them, and computes the hash commitments cloud
owners declare on-chain.
"""
import logging
import math
from collections import Counter
from typing import Dict, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .encoding import NONCE_BYTES, seed_int, sha256
from .exceptions import BadNonce, BadSplit, Infeasible

# Configure logging
logger = logging.getLogger(__name__)

Row = Tuple[List[float], int]


class LabeledDataset(BaseModel):
    """Feature rows with small non-negative integer labels below label_count."""
    model_config = ConfigDict(frozen=True)

    rows: List[Row]
    label_count: int = Field(ge=1)

    @model_validator(mode="after")
    def check_rows(self):
        widths = {len(x) for x, _ in self.rows}
        if len(widths) > 1:
            raise ValueError(f"ragged feature vectors: widths {sorted(widths)}")
        for _, label in self.rows:
            if not 0 <= label < self.label_count:
                raise ValueError(f"label {label} outside 0..{self.label_count - 1}")
        return self

    @property
    def features(self) -> int:
        return len(self.rows[0][0]) if self.rows else 0


class Chunk(BaseModel):
    """One data subset, rows kept in original dataset order."""
    model_config = ConfigDict(frozen=True)

    subset_index: int = Field(ge=0)
    rows: List[Row]
    row_indices: List[int] = Field(default_factory=list)

    @property
    def chunk_bytes(self) -> bytes:
        return serialize_rows(self.rows)

    def labels(self) -> set:
        return {label for _, label in self.rows}


class Commitment(BaseModel):
    model_config = ConfigDict(frozen=True)

    hash: str
    nonce: str


# === Chunk files ===

def serialize_rows(rows: Sequence[Row]) -> bytes:
    """CSV, one row per line, 17 significant digits, label last."""
    lines = []
    for x, label in rows:
        lines.append(",".join([f"{v:.17g}" for v in x] + [str(int(label))]))
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


def parse_rows(data: bytes) -> List[Row]:
    """Inverse of serialize_rows."""
    rows: List[Row] = []
    for line in data.decode("utf-8").splitlines():
        if not line:
            continue
        *features, label = line.split(",")
        rows.append(([float(v) for v in features], int(label)))
    return rows


# === Splitting and replication ===

def split(data: LabeledDataset, m: int, seed: bytes) -> List[Chunk]:
    """Partition rows into m chunks with structural label skew.

    Chunk i never holds label (i mod C), and each label's rows are dealt
    round-robin over the chunks that allow it, starting at a seeded offset.
    So every chunk misses at least one label and no chunk holds more than
    half (rounded up) of any label.

    Raises:
        BadSplit: m < 2 or fewer than 2 labels
        Infeasible: a label with 2 or more rows has fewer than 2 allowed
            chunks, or some chunk ends up empty
    """
    C = data.label_count
    if m < 2:
        raise BadSplit(f"need at least 2 subsets, got {m}")
    if C < 2:
        raise BadSplit("need at least 2 labels")

    by_label: Dict[int, List[int]] = {label: [] for label in range(C)}
    for i, (_, label) in enumerate(data.rows):
        by_label[label].append(i)

    rng = np.random.default_rng(seed_int(b"split|" + seed))
    assignment: List[List[int]] = [[] for _ in range(m)]
    for label in range(C):
        indices = by_label[label]
        if not indices:
            continue
        allowed = [i for i in range(m) if i % C != label]
        if not allowed or (len(indices) >= 2 and len(allowed) < 2):
            raise Infeasible(f"label {label} can only be placed in {len(allowed)} of {m} subsets")
        start = int(rng.integers(len(allowed)))
        for k, row_index in enumerate(indices):
            assignment[allowed[(start + k) % len(allowed)]].append(row_index)

    chunks = []
    for i, indices in enumerate(assignment):
        if not indices:
            raise Infeasible(f"subset {i} would be empty")
        indices.sort()
        chunks.append(Chunk(subset_index=i, rows=[data.rows[j] for j in indices], row_indices=indices))
    logger.debug(f"Split {len(data.rows)} rows into {m} subsets: {[len(c.rows) for c in chunks]}")
    return chunks


def skew_violations(data: LabeledDataset, chunks: Sequence[Chunk]) -> List[str]:
    """Human-readable list of skew constraint breaches, empty when the split is sound."""
    problems = []
    totals = Counter(label for _, label in data.rows)
    for chunk in chunks:
        if len(chunk.labels()) >= data.label_count:
            problems.append(f"subset {chunk.subset_index} holds every label")
        for label, count in Counter(label for _, label in chunk.rows).items():
            if count > math.ceil(totals[label] / 2):
                problems.append(f"subset {chunk.subset_index} holds {count} of {totals[label]} rows of label {label}")
    return problems


def replicate(chunks: Sequence[Chunk], n: int) -> Dict[int, List[Chunk]]:
    """Assignment plan: subset index to its n byte-identical copies."""
    if n < 1:
        raise BadSplit(f"replication factor must be at least 1, got {n}")
    return {chunk.subset_index: [chunk] * n for chunk in chunks}


# === Commitments ===

def gen_nonce(actor_seed: bytes, counter: int) -> bytes:
    """First 16 bytes of SHA-256(actor_seed ‖ counter as 8-byte big-endian)."""
    return sha256(actor_seed, counter.to_bytes(8, "big"))[:NONCE_BYTES]


def commit(chunk_bytes: bytes, nonce: bytes) -> Commitment:
    """SHA-256(chunk_bytes ‖ nonce) as lowercase hex."""
    if len(nonce) != NONCE_BYTES:
        raise BadNonce(f"nonce must be {NONCE_BYTES} bytes, got {len(nonce)}")
    return Commitment(hash=sha256(chunk_bytes, nonce).hex(), nonce=nonce.hex())


def verify_commitment(c: Commitment, chunk_bytes: bytes, nonce: bytes) -> bool:
    try:
        return commit(chunk_bytes, nonce) == c
    except BadNonce:
        return False


# === Synthetic data ===

def make_dataset(rows: int, features: int, label_count: int, seed: int, noise: float = 0.1) -> LabeledDataset:
    """Gaussian features, labels from quantile bins of a noisy linear score."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(rows, features))
    true_w = rng.normal(size=features)
    score = X @ true_w + noise * rng.normal(size=rows)
    edges = np.quantile(score, np.linspace(0, 1, label_count + 1)[1:-1])
    labels = np.digitize(score, edges)
    return LabeledDataset(
        rows=[([float(v) for v in X[i]], int(labels[i])) for i in range(rows)],
        label_count=label_count,
    )


def tamper(data: bytes) -> bytes:
    """Bump the label of the last row. Any change at all breaks a commitment."""
    rows = parse_rows(data)
    if not rows:
        return b"0\n"
    x, label = rows[-1]
    rows[-1] = (x, label + 1)
    return serialize_rows(rows)
