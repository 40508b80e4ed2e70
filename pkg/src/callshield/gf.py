"""Binary extension fields GF(2^m) backed by log/antilog tables.

Field elements are Python ints in [0, 2^m) interpreted as polynomials over
GF(2) (bit i is the coefficient of x^i).  Addition is XOR; multiplication
goes through discrete-log tables built from a primitive polynomial, so all
scalar operations are table lookups.  Numpy copies of the tables are kept
for the vectorised syndrome/root-search paths in the BCH decoder.
"""
from __future__ import annotations

import numpy as np

__all__ = ["GaloisField", "PRIMITIVE_POLYS"]

# Conventional primitive polynomial per extension degree: the
# lexicographically smallest one, matching published code tables.
PRIMITIVE_POLYS: dict[int, int] = {
    2: 0b111,                # x^2 + x + 1
    3: 0b1011,               # x^3 + x + 1
    4: 0b10011,              # x^4 + x + 1
    5: 0b100101,             # x^5 + x^2 + 1
    6: 0b1000011,            # x^6 + x + 1
    7: 0b10001001,           # x^7 + x^3 + 1
    8: 0b100011101,          # x^8 + x^4 + x^3 + x^2 + 1
    9: 0b1000010001,         # x^9 + x^4 + 1
    10: 0b10000001001,       # x^10 + x^3 + 1
    11: 0b100000000101,      # x^11 + x^2 + 1
    12: 0b1000001010011,     # x^12 + x^6 + x^4 + x + 1
    13: 0b10000000011011,    # x^13 + x^4 + x^3 + x + 1
    14: 0b100010001000011,   # x^14 + x^10 + x^6 + x + 1
    15: 0b1000000000000011,  # x^15 + x + 1
    16: 0b10001000000001011, # x^16 + x^12 + x^3 + x + 1
}


class GaloisField:
    """GF(2^m) with alpha = x as the multiplicative generator.

    Immutable after construction; safe to share across threads.
    """

    def __init__(self, m: int, primitive_poly: int | None = None):
        if not 2 <= m <= 16:
            raise ValueError(f"extension degree m={m} outside supported range 2..16")
        if primitive_poly is None:
            primitive_poly = PRIMITIVE_POLYS[m]
        if primitive_poly.bit_length() != m + 1:
            raise ValueError("primitive polynomial degree must equal m")
        self.m = m
        self.primitive_poly = primitive_poly
        self.order = (1 << m) - 1  # size of the multiplicative group

        antilog = [0] * self.order
        log = [0] * (1 << m)
        x = 1
        for i in range(self.order):
            antilog[i] = x
            log[x] = i
            x <<= 1
            if x >> m:
                x ^= primitive_poly
        if x != 1:
            raise ValueError(f"0x{primitive_poly:x} is not primitive for m={m}")
        seen = set(antilog)
        if len(seen) != self.order:
            raise ValueError(f"0x{primitive_poly:x} generates a short cycle; not primitive")

        self._antilog = antilog
        self._log = log
        # numpy mirrors for vectorised decoding
        self.antilog_np = np.asarray(antilog, dtype=np.int64)
        self.log_np = np.asarray(log, dtype=np.int64)

    # -- scalar arithmetic -------------------------------------------------

    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        return self._antilog[(self._log[a] + self._log[b]) % self.order]

    def inv(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("inverse of 0 in GF(2^m)")
        return self._antilog[(self.order - self._log[a]) % self.order]

    def div(self, a: int, b: int) -> int:
        return self.mul(a, self.inv(b))

    def pow_alpha(self, e: int) -> int:
        """alpha**e for any integer exponent."""
        return self._antilog[e % self.order]

    def log(self, a: int) -> int:
        if a == 0:
            raise ValueError("log of 0 is undefined")
        return self._log[a]

    # -- polynomial evaluation over the field --------------------------------

    def poly_eval(self, coeffs: list[int], x: int) -> int:
        """Evaluate sum(coeffs[i] * x^i) with coeffs[0] the constant term."""
        acc = 0
        for c in reversed(coeffs):
            acc = self.mul(acc, x) ^ c
        return acc

    def __repr__(self) -> str:  # pragma: no cover
        return f"GaloisField(m={self.m}, primitive_poly=0x{self.primitive_poly:x})"
