"""Small shared helpers."""

from __future__ import annotations

import hashlib


def derive_seed(master: int, *parts: object) -> int:
    """Deterministic child seed from a master seed and a role path.

    SHA-256 over ``"<master>:<part>:..."``, first 8 bytes little-endian.
    Every seeded stage of the pipeline (per-patient synthesis, splits,
    bootstraps, searches) derives its seed this way so one master seed fixes
    the whole run.
    """
    payload = ":".join([str(int(master))] + [str(p) for p in parts])
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
