import numpy as np
import pytest

from callshield.gf import PRIMITIVE_POLYS, GaloisField


def schoolbook_mul(a: int, b: int, primitive: int, m: int) -> int:
    """Carry-less multiply then reduce mod the primitive polynomial."""
    prod = 0
    while b:
        if b & 1:
            prod ^= a
        a <<= 1
        b >>= 1
    dm = primitive.bit_length()
    while prod.bit_length() >= dm:
        prod ^= primitive << (prod.bit_length() - dm)
    return prod


@pytest.mark.parametrize("m", range(2, 9))
def test_multiplication_matches_schoolbook_exhaustively(m):
    fld = GaloisField(m)
    size = 1 << m
    for a in range(size):
        for b in range(size):
            assert fld.mul(a, b) == schoolbook_mul(a, b, fld.primitive_poly, m)


@pytest.mark.parametrize("m", [2, 5, 9, 12, 16])
def test_log_antilog_inverse_each_other(m):
    fld = GaloisField(m)
    for x in range(1, 1 << m):
        assert fld.pow_alpha(fld.log(x)) == x


@pytest.mark.parametrize("m", [3, 5, 9])
def test_generator_order(m):
    fld = GaloisField(m)
    # alpha^k walks through every nonzero element exactly once
    seen = {fld.pow_alpha(k) for k in range(fld.order)}
    assert len(seen) == fld.order
    assert fld.pow_alpha(fld.order) == 1


def test_inverse():
    fld = GaloisField(5)
    for x in range(1, 32):
        assert fld.mul(x, fld.inv(x)) == 1
    with pytest.raises(ZeroDivisionError):
        fld.inv(0)


def test_non_primitive_poly_rejected():
    # x^4 + x^3 + x^2 + x + 1 is irreducible but has order 5, not 15
    with pytest.raises(ValueError):
        GaloisField(4, 0b11111)


def test_conventional_polys_cover_range():
    assert set(PRIMITIVE_POLYS) == set(range(2, 17))
    assert PRIMITIVE_POLYS[5] == 0b100101   # x^5 + x^2 + 1
    assert PRIMITIVE_POLYS[9] == 0b1000010001  # x^9 + x^4 + 1


def test_poly_eval():
    fld = GaloisField(3)
    # p(x) = x^2 + 1 at alpha: alpha^2 + 1
    expected = fld.pow_alpha(2) ^ 1
    assert fld.poly_eval([1, 0, 1], fld.pow_alpha(1)) == expected
