"""Deterministic seed derivation and counter-based uniform streams.

All randomness in an experiment flows from one 64-bit seed. Monte Carlo work
is split into fixed-size chunks; chunk c draws from a Philox stream whose
counter high word is c, so the values for sample index i depend only on
(seed, i) and are identical no matter how chunks are scheduled or batched.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

__all__ = ["CHUNK_SAMPLES", "derive_seed", "chunk_uniforms", "chunk_bounds"]

CHUNK_SAMPLES = 1 << 16  # protocol constant; changing it changes every stream


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from a tuple of ints/strings (SHA-256 based)."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, str):
            data = b"s" + part.encode("utf-8")
        elif isinstance(part, (int, np.integer)):
            data = b"i" + struct.pack(">q", int(part) & 0x7FFFFFFFFFFFFFFF)
        else:
            raise TypeError(f"unsupported seed part {type(part).__name__}")
        h.update(struct.pack(">I", len(data)))
        h.update(data)
    return int.from_bytes(h.digest()[:8], "big")


def chunk_uniforms(seed: int, chunk_index: int, rows: int, cols: int) -> np.ndarray:
    """Uniforms for one chunk: shape (rows, cols), stream fixed by (seed, chunk)."""
    bitgen = np.random.Philox(key=seed, counter=[0, 0, 0, chunk_index])
    return np.random.Generator(bitgen).random((rows, cols))


def chunk_bounds(samples: int):
    """Yield (chunk_index, start, stop) covering range(samples) in fixed chunks."""
    start = 0
    chunk = 0
    while start < samples:
        stop = min(samples, start + CHUNK_SAMPLES)
        yield chunk, start, stop
        chunk += 1
        start = stop
