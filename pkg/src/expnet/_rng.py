"""Deterministic counter-based random streams.

Every stochastic routine in the package derives its generators from a base
seed plus a tuple of key words (replicate index, entity ids, purpose tags).
Streams with distinct keys are independent and reproducible regardless of
evaluation order, which is what makes common-random-number coupling, resumable
experiments, and parallel replication safe.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def _mix(state: int, word: int) -> int:
    """Fold one 64-bit word into a running splitmix64-style hash state."""
    state = (state + 0x9E3779B97F4A7C15 + (word & _MASK64)) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _words(key: tuple) -> list[int]:
    """Flatten a key tuple of ints / strings into 64-bit words."""
    words: list[int] = []
    for part in key:
        if isinstance(part, str):
            data = part.encode("utf-8")
            for i in range(0, len(data), 8):
                words.append(int.from_bytes(data[i : i + 8], "little"))
            words.append(len(data) | (1 << 63))  # length tag avoids collisions
        elif isinstance(part, (bool, int, np.integer)):
            words.append(int(part) & _MASK64)
        else:
            raise TypeError(f"stream key parts must be int or str, got {type(part)!r}")
    return words


def stream_key(seed: int, *key) -> int:
    """Return a 128-bit integer key derived from (seed, *key)."""
    a = _mix(0, seed)
    b = _mix(0x6A09E667F3BCC909, seed)
    for word in _words(key):
        a = _mix(a, word)
        b = _mix(b, word ^ 0xD6E8FEB86659FD93)
    return (a << 64) | b


def stream(seed: int, *key) -> np.random.Generator:
    """Return an independent Generator for the stream named by (seed, *key)."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *key)))
