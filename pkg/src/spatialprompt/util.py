"""Small shared helpers: checksums, canonical JSON, warning tallies."""
from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from pathlib import Path

log = logging.getLogger("spatialprompt")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def stable_json(obj) -> str:
    """Serialize with a fixed key order so equal inputs give equal bytes."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ": "), indent=2)


def stable_json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


class WarningTally:
    """Counts recoverable oddities (zero-norm vectors, skipped records, ...).

    Aborting a whole corpus build over one degenerate cell is worse than
    counting and continuing, so operations record here instead of raising.
    """

    def __init__(self) -> None:
        self.counts: Counter[str] = Counter()

    def count(self, key: str, message: str | None = None) -> None:
        self.counts[key] += 1
        if message and self.counts[key] == 1:
            log.warning("%s: %s (further occurrences counted silently)", key, message)

    def merge(self, other: "WarningTally") -> None:
        self.counts.update(other.counts)

    def total(self) -> int:
        return sum(self.counts.values())

    def as_dict(self) -> dict[str, int]:
        return dict(sorted(self.counts.items()))
