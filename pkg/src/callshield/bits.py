"""Bit-array helpers shared by every layer.

Bits travel between layers as 1-D numpy arrays of dtype uint8 holding 0/1,
in transmission order (index 0 goes on the air first).  Byte and hex
conversions are MSB-first within each byte.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "as_bits",
    "bits_from_bytes",
    "bits_to_bytes",
    "bits_from_hex",
    "bits_to_hex",
    "bits_from_int",
    "bits_to_int",
    "random_bits",
    "hamming_distance",
]


def as_bits(values) -> np.ndarray:
    """Coerce an iterable of 0/1 values (or a '0101' string) to a bit array."""
    if isinstance(values, str):
        values = [int(c) for c in values if c in "01"]
    bits = np.asarray(values, dtype=np.uint8)
    if bits.ndim != 1:
        raise ValueError("bitstream must be one-dimensional")
    if bits.size and bits.max() > 1:
        raise ValueError("bitstream values must be 0 or 1")
    return bits


def bits_from_bytes(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def bits_to_bytes(bits) -> bytes:
    bits = as_bits(bits)
    if bits.size % 8:
        raise ValueError(f"bit length {bits.size} is not a whole number of bytes")
    return np.packbits(bits).tobytes()


def bits_from_hex(text: str) -> np.ndarray:
    return bits_from_bytes(bytes.fromhex(text))


def bits_to_hex(bits) -> str:
    return bits_to_bytes(bits).hex()


def bits_from_int(value: int, width: int) -> np.ndarray:
    if value < 0 or value >> width:
        raise ValueError(f"value does not fit in {width} bits")
    return as_bits([(value >> (width - 1 - i)) & 1 for i in range(width)])


def bits_to_int(bits) -> int:
    out = 0
    for b in as_bits(bits):
        out = (out << 1) | int(b)
    return out


def random_bits(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, size=n, dtype=np.uint8)


def hamming_distance(a, b) -> int:
    a = as_bits(a)
    b = as_bits(b)
    if a.size != b.size:
        raise ValueError("length mismatch")
    return int(np.count_nonzero(a != b))
