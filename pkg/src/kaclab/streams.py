"""Reproducible random streams.

Every stochastic routine draws from a Philox4x64-10 counter-based bit
generator. A stream is identified by ``(seed, experiment, replica)``; the
128-bit Philox key is::

    key[0] = seed mod 2**64
    key[1] = (crc32(experiment) << 32) | (replica mod 2**32)

and the counter starts at zero. Ports to other languages only need a
Philox4x64-10 implementation and CRC-32 to reproduce the raw 64-bit words.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def experiment_id(name: str) -> int:
    return zlib.crc32(name.encode("utf-8")) & 0xFFFFFFFF


def philox_key(seed: int, experiment: str = "", replica: int = 0) -> np.ndarray:
    if seed < 0:
        raise ValueError("seed must be non-negative")
    k1 = (experiment_id(experiment) << 32) | (int(replica) & 0xFFFFFFFF)
    return np.array([int(seed) & _MASK64, k1], dtype=np.uint64)


def stream(seed: int, experiment: str = "", replica: int = 0) -> np.random.Generator:
    """Independent generator for one replica of one experiment."""
    return np.random.Generator(np.random.Philox(key=philox_key(seed, experiment, replica)))


def child(rng: np.random.Generator, tag: int) -> np.random.Generator:
    """Derive a sub-stream from an existing generator without advancing it much.

    Used when a routine receives a generator but needs shared-nothing
    sub-streams (one per chain or batch).
    """
    base = int(rng.integers(0, 2**63))
    return stream(base, "child", tag)
