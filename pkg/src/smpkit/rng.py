"""Deterministic random substreams.

Path ``k`` of a run seeded with ``seed`` always draws from the same
independent stream, so results do not depend on batch boundaries, execution
order or the number of worker threads.
"""
from __future__ import annotations

import os

import numpy as np


def substream(seed: int, k: int) -> np.random.Generator:
    """Independent generator for path ``k`` under a 64-bit ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(k),))))


def substreams(seed: int, first: int, count: int) -> list[np.random.Generator]:
    return [substream(seed, k) for k in range(first, first + count)]


def worker_count() -> int:
    """Worker cap from ``SMPKIT_THREADS`` (0 or unset means one per CPU)."""
    raw = os.environ.get("SMPKIT_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError("SMPKIT_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)
