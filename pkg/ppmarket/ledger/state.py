"""
World state: the key-value materialization of the block log.
"""
from typing import Dict, Iterator, Optional

from ..encoding import canonical_bytes, sha256_hex


class WorldState:
    """Latest committed asset bytes per key, with a per-key write counter."""

    def __init__(self):
        self.entries: Dict[str, bytes] = {}
        self.versions: Dict[str, int] = {}

    def get(self, key: str) -> Optional[bytes]:
        return self.entries.get(key)

    def version(self, key: str) -> int:
        return self.versions.get(key, 0)

    def put(self, key: str, value: bytes) -> None:
        self.entries[key] = value
        self.versions[key] = self.versions.get(key, 0) + 1

    def keys(self, prefix: str = "") -> Iterator[str]:
        """Keys in sorted order, optionally restricted to a prefix."""
        for key in sorted(self.entries):
            if key.startswith(prefix):
                yield key

    def snapshot(self) -> bytes:
        """Canonical bytes of the whole state, used for byte-identical comparison."""
        return canonical_bytes({
            key: {"value": self.entries[key].decode("utf-8"), "version": self.versions[key]}
            for key in self.entries
        })

    def digest(self) -> str:
        return sha256_hex(self.snapshot())

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, WorldState):
            return NotImplemented
        return self.entries == other.entries and self.versions == other.versions
