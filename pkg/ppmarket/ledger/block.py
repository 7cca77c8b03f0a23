"""
Blocks of the hash-chained transaction log.
"""
import json
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field

from ..encoding import ZERO_HASH, canonical_bytes, sha256
from .envelope import TransactionEnvelope

GENESIS_PREV_HASH = ZERO_HASH.hex()


class BlockTx(BaseModel):
    """A transaction as recorded in a block, with its validity flag."""
    model_config = ConfigDict(frozen=True)

    tx: TransactionEnvelope
    valid: bool
    error: Optional[str] = None


class Block(BaseModel):
    model_config = ConfigDict(frozen=True)

    height: int = Field(ge=0)
    prev_hash: str
    txs: List[BlockTx]
    cut_time: int = Field(ge=0)
    block_hash: str

    @staticmethod
    def digest(prev_hash: str, txs: List[BlockTx], height: int) -> str:
        """SHA-256(prev_hash ‖ canonical txs ‖ height as 8-byte big-endian), hex."""
        body = canonical_bytes([t.model_dump(mode="json") for t in txs])
        return sha256(bytes.fromhex(prev_hash), body, height.to_bytes(8, "big")).hex()

    @classmethod
    def seal(cls, height: int, prev_hash: str, txs: List[BlockTx], cut_time: int) -> "Block":
        return cls(
            height=height,
            prev_hash=prev_hash,
            txs=txs,
            cut_time=cut_time,
            block_hash=cls.digest(prev_hash, txs, height),
        )

    def verify_digest(self) -> bool:
        return self.block_hash == self.digest(self.prev_hash, self.txs, self.height)

    def to_line(self) -> str:
        """One NDJSON line for the block log export.

        The line carries a digest of the whole block so fields outside
        block_hash (cut_time) are tamper-evident too.
        """
        body = self.model_dump(mode="json")
        return canonical_bytes({"block": body, "line_hash": sha256(canonical_bytes(body)).hex()}).decode("utf-8")

    @classmethod
    def from_line(cls, line: str) -> "Block":
        """Parse an export line. Raises ValueError when the line digest does not match."""
        raw = json.loads(line)
        if not isinstance(raw, dict) or set(raw) != {"block", "line_hash"}:
            raise ValueError("not a block line")
        if sha256(canonical_bytes(raw["block"])).hex() != raw["line_hash"]:
            raise ValueError("line digest mismatch")
        block = cls.model_validate(raw["block"])
        if block.to_line() != line:
            raise ValueError("line is not in canonical form")
        return block
