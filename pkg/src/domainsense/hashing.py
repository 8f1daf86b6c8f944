"""Content fingerprints used to chain artifacts together."""

from __future__ import annotations

import hashlib
import json
from typing import Any


def canonical_json(obj: Any) -> str:
    """Serialize *obj* deterministically (sorted keys, no whitespace)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def content_hash(*parts: bytes | str) -> str:
    """sha256 hex digest over the concatenation of *parts*.

    Each part is length-prefixed so that part boundaries cannot alias.
    """
    h = hashlib.sha256()
    for part in parts:
        data = part.encode("utf-8") if isinstance(part, str) else part
        h.update(str(len(data)).encode("ascii"))
        h.update(b":")
        h.update(data)
    return h.hexdigest()


def stage_seed(root_seed: int, stage: str) -> int:
    """Derive a named 31-bit sub-seed from a root seed.

    Every source of randomness in a run draws from one of these, so that
    re-running a single stage with the same root seed reproduces it exactly.
    """
    digest = hashlib.sha256(f"{root_seed}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big") & 0x7FFFFFFF
