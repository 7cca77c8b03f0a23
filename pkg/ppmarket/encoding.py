"""
Canonical encodings and digests.

Everything hashed or replayed goes through canonical_bytes(): field-name
sorted JSON, no insignificant whitespace, UTF-8, no NaN/Infinity.
"""
import hashlib
import json
import re
from typing import Any

ZERO_HASH = bytes(32)
NONCE_BYTES = 16

HEX64 = re.compile(r"[0-9a-f]{64}")
NONCE_HEX = re.compile(r"[0-9a-f]{%d}" % (2 * NONCE_BYTES))


def canonical_bytes(obj: Any) -> bytes:
    """Serialize a JSON-compatible object deterministically."""
    return json.dumps(
        obj,
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
        allow_nan=False,
    ).encode("utf-8")


def sha256(*parts: bytes) -> bytes:
    """SHA-256 over the concatenation of parts."""
    h = hashlib.sha256()
    for part in parts:
        h.update(part)
    return h.digest()


def sha256_hex(*parts: bytes) -> str:
    return sha256(*parts).hex()


def derive_id(*parts: str) -> str:
    """Ledger-assigned identifier: SHA-256 hex of the UTF-8 parts."""
    return sha256_hex(*(p.encode("utf-8") for p in parts))


def seed_int(seed: bytes) -> int:
    """Map arbitrary seed bytes to a 64-bit integer for numpy generators."""
    return int.from_bytes(sha256(seed)[:8], "big")


def is_hex64(value: str) -> bool:
    """True for a lowercase hex SHA-256 digest."""
    return isinstance(value, str) and HEX64.fullmatch(value) is not None


def is_nonce_hex(value: str) -> bool:
    """True for a lowercase hex encoding of exactly NONCE_BYTES bytes."""
    return isinstance(value, str) and NONCE_HEX.fullmatch(value) is not None
