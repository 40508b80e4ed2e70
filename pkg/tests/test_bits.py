import numpy as np
import pytest

from callshield.bits import (
    as_bits,
    bits_from_bytes,
    bits_from_hex,
    bits_from_int,
    bits_to_bytes,
    bits_to_hex,
    bits_to_int,
    hamming_distance,
    random_bits,
)


def test_string_and_list_coercion():
    assert np.array_equal(as_bits("10110010"), [1, 0, 1, 1, 0, 0, 1, 0])
    assert np.array_equal(as_bits([0, 1, 1]), [0, 1, 1])


def test_rejects_non_binary():
    with pytest.raises(ValueError):
        as_bits([0, 2, 1])


def test_byte_round_trip_msb_first():
    bits = bits_from_bytes(b"\xb2")
    assert np.array_equal(bits, [1, 0, 1, 1, 0, 0, 1, 0])
    assert bits_to_bytes(bits) == b"\xb2"


def test_hex_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(50):
        bits = random_bits(8 * int(rng.integers(1, 20)), rng)
        assert np.array_equal(bits_from_hex(bits_to_hex(bits)), bits)


def test_int_round_trip():
    for value, width in [(0, 1), (0xB2, 8), (12345, 16)]:
        assert bits_to_int(bits_from_int(value, width)) == value
    with pytest.raises(ValueError):
        bits_from_int(256, 8)


def test_hamming():
    assert hamming_distance("0101", "0110") == 2
    with pytest.raises(ValueError):
        hamming_distance("01", "011")
