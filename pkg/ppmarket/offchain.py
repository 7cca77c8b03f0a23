"""
In-simulator off-chain storage.

Stands in for the cloud storage where chunks and model files live. Only
locators and hashes ever reach the ledger; the bytes stay here.
"""
import base64
import json
import logging
from pathlib import Path
from typing import Dict, Iterator, Optional, Union

from .encoding import sha256

# Configure logging
logger = logging.getLogger(__name__)


class ObjectStore:
    """Flat key to bytes store, dumpable to JSON for later verification."""

    def __init__(self):
        self._objects: Dict[str, bytes] = {}

    def put(self, key: str, data: bytes) -> str:
        self._objects[key] = bytes(data)
        logger.debug(f"Stored {len(data)} bytes at {key}")
        return key

    def get(self, key: str) -> Optional[bytes]:
        return self._objects.get(key)

    def keys(self, prefix: str = "") -> Iterator[str]:
        return (k for k in sorted(self._objects) if k.startswith(prefix))

    def __contains__(self, key: str) -> bool:
        return key in self._objects

    def __len__(self) -> int:
        return len(self._objects)

    def dump(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        encoded = {k: base64.b64encode(v).decode("ascii") for k, v in sorted(self._objects.items())}
        path.write_text(json.dumps(encoded, indent=1, sort_keys=True), encoding="utf-8")
        logger.info(f"Dumped {len(self._objects)} objects to {path}")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ObjectStore":
        store = cls()
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        for key, value in raw.items():
            store._objects[key] = base64.b64decode(value)
        return store


def _keystream(key: bytes, length: int) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < length:
        out += sha256(key, counter.to_bytes(8, "big"))
        counter += 1
    return bytes(out[:length])


def seal_locator(locator: str, key: bytes) -> str:
    """Hide a model locator from everyone but the key holder (hex output).

    XOR with a SHA-256 keystream: not encryption, only keeps the locator off
    the ledger in plain text.
    """
    raw = locator.encode("utf-8")
    return bytes(a ^ b for a, b in zip(raw, _keystream(key, len(raw)))).hex()


def open_locator(sealed: str, key: bytes) -> str:
    raw = bytes.fromhex(sealed)
    return bytes(a ^ b for a, b in zip(raw, _keystream(key, len(raw)))).decode("utf-8")
