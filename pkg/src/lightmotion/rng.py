"""Counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by the
user seed plus a tuple of integer counters (purpose, frame, timestep, ...).
Draws therefore do not depend on evaluation order or on how work is split
across threads.
"""

import os
import zlib

import numpy as np

__all__ = ["stream", "purpose_id", "thread_count"]


def purpose_id(name):
    """Stable 32-bit id for a stream label."""
    return zlib.crc32(name.encode("utf-8"))


def stream(seed, purpose, *counters):
    """Return an independent generator for ``(seed, purpose, *counters)``.

    ``purpose`` is a short label such as ``"init"`` or ``"resample"``.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, purpose_id(purpose)]
    entropy.extend(int(c) for c in counters)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def thread_count():
    """Parallelism cap from ``LIGHTMOTION_THREADS`` (0 or unset means auto)."""
    raw = os.environ.get("LIGHTMOTION_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return n
