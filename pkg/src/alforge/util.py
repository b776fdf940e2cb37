"""Shared helpers: stable hashing, canonical JSON, reporting-grade rounding.

Everything determinism-critical goes through blake2b rather than Python's
process-randomized hash().
"""

from __future__ import annotations

import hashlib
import json
import random
from decimal import ROUND_HALF_UP, Decimal
from typing import Any

_SEP = b"\x1f"


def stable_u64(*parts: Any) -> int:
    """Deterministic 64-bit integer from arbitrary parts, stable across processes."""
    payload = _SEP.join(str(p).encode("utf-8") for p in parts)
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


def stable_rng(*parts: Any) -> random.Random:
    """random.Random seeded from a stable hash of the given parts."""
    return random.Random(stable_u64(*parts))


def stable_unit(*parts: Any) -> float:
    """Deterministic float in [0, 1) derived from the given parts."""
    return stable_u64(*parts) / 2**64


def canonical_json(obj: Any) -> str:
    """Serialize with sorted keys and no whitespace; byte-stable for equal inputs."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_json_bytes(obj: Any) -> bytes:
    return (canonical_json(obj) + "\n").encode("utf-8")


def round_half_up(value: float, ndigits: int = 1) -> float:
    """Round half away from zero (contract for reported percentages)."""
    q = Decimal(1).scaleb(-ndigits)
    return float(Decimal(repr(value)).quantize(q, rounding=ROUND_HALF_UP))
