"""Binary BCH codes over GF(2^m): construction, systematic encoding, decoding.

Codewords are length n = 2^m - 1 and correct up to t random bit errors.
The generator polynomial is the LCM of the minimal polynomials of
alpha^1 .. alpha^2t.  Encoding is systematic and message-first: the k
message bits appear verbatim, followed by n - k parity bits.  Decoding is
syndrome computation, Berlekamp-Massey error-locator solving, and a root
search over the field (Chien-style, vectorised with numpy).

Bit order convention: transmission index j carries the coefficient of
x^(n-1-j), so the first bit on the air is the highest-order coefficient.
Polynomials over GF(2) are bit-packed Python ints (bit i = coeff of x^i).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bits import as_bits
from .gf import GaloisField

__all__ = ["BchCode", "Codeword", "build_code", "BchConstructionError", "PayloadTooLargeError"]


class BchConstructionError(ValueError):
    pass


class PayloadTooLargeError(ValueError):
    pass


# -- GF(2) polynomial arithmetic on bit-packed ints --------------------------

def poly_mul_gf2(a: int, b: int) -> int:
    out = 0
    while b:
        if b & 1:
            out ^= a
        a <<= 1
        b >>= 1
    return out


def poly_mod_gf2(a: int, mod: int) -> int:
    dm = mod.bit_length()
    da = a.bit_length()
    while da >= dm:
        a ^= mod << (da - dm)
        da = a.bit_length()
    return a


def poly_divmod_gf2(a: int, mod: int) -> tuple[int, int]:
    dm = mod.bit_length()
    q = 0
    da = a.bit_length()
    while da >= dm:
        shift = da - dm
        a ^= mod << shift
        q |= 1 << shift
        da = a.bit_length()
    return q, a


def _cyclotomic_coset(s: int, n: int) -> tuple[int, ...]:
    coset = []
    c = s
    while True:
        coset.append(c)
        c = (c * 2) % n
        if c == s:
            break
    return tuple(sorted(coset))


def _minimal_polynomial(field: GaloisField, coset: tuple[int, ...]) -> int:
    """Product of (x - alpha^i) over a conjugacy class; lands in GF(2)[x]."""
    # coeffs[i] is the x^i coefficient, as a field element
    coeffs = [1]
    for e in coset:
        root = field.pow_alpha(e)
        nxt = [0] * (len(coeffs) + 1)
        for i, c in enumerate(coeffs):
            nxt[i + 1] ^= c               # c * x
            nxt[i] ^= field.mul(c, root)  # c * root
        coeffs = nxt
    packed = 0
    for i, c in enumerate(coeffs):
        if c not in (0, 1):
            raise BchConstructionError("minimal polynomial has a coefficient outside GF(2)")
        packed |= c << i
    return packed


@dataclass(frozen=True)
class BchCode:
    """A (n, k, t) binary BCH code instance; immutable and shareable."""

    field: GaloisField
    n: int
    k: int
    t: int
    generator_poly: int  # bit-packed over GF(2)

    @property
    def parity_bits(self) -> int:
        return self.n - self.k

    # -- encoding ------------------------------------------------------------

    def encode(self, message) -> "Codeword":
        """Systematic encode; messages shorter than k are zero-padded to k."""
        message = as_bits(message)
        if message.size > self.k:
            raise PayloadTooLargeError(
                f"message of {message.size} bits exceeds k={self.k}"
            )
        if message.size < self.k:
            message = np.concatenate(
                [message, np.zeros(self.k - message.size, dtype=np.uint8)]
            )
        # message bit j is the coefficient of x^(n-1-j)
        msg_int = 0
        for b in message:
            msg_int = (msg_int << 1) | int(b)
        shifted = msg_int << self.parity_bits
        parity = poly_mod_gf2(shifted, self.generator_poly)
        cw_int = shifted | parity
        bits = np.fromiter(
            ((cw_int >> (self.n - 1 - j)) & 1 for j in range(self.n)),
            dtype=np.uint8,
            count=self.n,
        )
        return Codeword(bits=bits, code=self)

    # -- decoding ------------------------------------------------------------

    def _syndromes(self, received: np.ndarray) -> np.ndarray:
        """S_j = r(alpha^j) for j = 1..2t, via the one-positions of r."""
        positions = np.flatnonzero(received)
        n2t = 2 * self.t
        if positions.size == 0:
            return np.zeros(n2t, dtype=np.int64)
        exps = (self.n - 1 - positions).astype(np.int64)
        js = np.arange(1, n2t + 1, dtype=np.int64)
        idx = (js[:, None] * exps[None, :]) % self.field.order
        vals = self.field.antilog_np[idx]
        return np.bitwise_xor.reduce(vals, axis=1)

    def _berlekamp_massey(self, syn: list[int]) -> list[int]:
        """Error-locator sigma(x) from the syndrome sequence S_1..S_2t.

        For binary codes S_2i = S_i^2, so the discrepancy vanishes on every
        second step; those steps only advance the shift register.
        """
        log = self.field._log
        antilog = self.field._antilog
        order = self.field.order

        sigma = [1]
        prev = [1]      # B(x), the last copy before a length change
        ell = 0         # current register length
        gap = 1         # steps since the copy
        b = 1           # discrepancy at the copy

        for r in range(2 * self.t):
            if r & 1:
                # even-indexed syndrome (S_2, S_4, ...): discrepancy is 0
                gap += 1
                continue
            d = syn[r]
            for i in range(1, min(ell, r) + 1):
                ci = sigma[i]
                sj = syn[r - i]
                if ci and sj:
                    d ^= antilog[(log[ci] + log[sj]) % order]
            if d == 0:
                gap += 1
                continue
            # sigma' = sigma - (d/b) x^gap prev
            scale = antilog[(log[d] - log[b]) % order]
            update = sigma.copy()
            need = gap + len(prev)
            if len(update) < need:
                update.extend([0] * (need - len(update)))
            for i, pc in enumerate(prev):
                if pc:
                    update[gap + i] ^= antilog[(log[scale] + log[pc]) % order]
            if 2 * ell <= r:
                prev = sigma
                ell = r + 1 - ell
                b = d
                gap = 1
            else:
                gap += 1
            sigma = update
        # trim trailing zeros
        while len(sigma) > 1 and sigma[-1] == 0:
            sigma.pop()
        return sigma if len(sigma) - 1 <= self.t else []

    def _locator_roots(self, sigma: list[int]) -> np.ndarray | None:
        """Bit indices of the errors, or None if the root count is wrong."""
        deg = len(sigma) - 1
        coeffs = np.asarray(sigma, dtype=np.int64)
        nz = np.flatnonzero(coeffs)
        logs = self.field.log_np[coeffs[nz]]
        j = np.arange(self.field.order, dtype=np.int64)
        # evaluate sigma(alpha^j) for all j at once
        terms = self.field.antilog_np[(logs[:, None] + nz[:, None] * j[None, :]) % self.field.order]
        evals = np.bitwise_xor.reduce(terms, axis=0)
        roots = np.flatnonzero(evals == 0)
        if roots.size != deg:
            return None
        error_exps = (self.field.order - roots) % self.field.order
        if np.any(error_exps >= self.n):
            return None
        return self.n - 1 - error_exps

    def decode(self, received) -> tuple[np.ndarray, int] | None:
        """Correct up to t errors; (message, corrected_count) or None.

        None means the error-locator step found no consistent root set,
        i.e. more than t errors were detected.  Beyond t errors a silent
        miscorrection to a different codeword is also possible; callers
        that need content integrity must validate the payload themselves.
        """
        received = as_bits(received)
        if received.size != self.n:
            raise ValueError(f"received word must be {self.n} bits, got {received.size}")
        syn = self._syndromes(received)
        if not syn.any():
            return received[: self.k].copy(), 0
        sigma = self._berlekamp_massey([int(s) for s in syn])
        if not sigma:
            return None
        positions = self._locator_roots(sigma)
        if positions is None:
            return None
        corrected = received.copy()
        corrected[positions] ^= 1
        if self._syndromes(corrected).any():
            return None
        return corrected[: self.k], int(positions.size)

    def __repr__(self) -> str:  # pragma: no cover
        return f"BchCode(n={self.n}, k={self.k}, t={self.t})"


@dataclass(frozen=True)
class Codeword:
    bits: np.ndarray
    code: BchCode = field(repr=False)

    def __post_init__(self):
        if self.bits.size != self.code.n:
            raise ValueError("codeword length does not match the code")


def build_code(m: int, t: int, primitive_poly: int | None = None) -> BchCode:
    """Construct the (2^m - 1, k, t) binary BCH code.

    k falls out of the generator-polynomial construction and is
    deterministic for fixed (m, t, primitive_poly).
    """
    if not 2 <= m <= 16:
        raise BchConstructionError(f"m={m} outside supported range 2..16")
    n = (1 << m) - 1
    if not 1 <= t < (1 << (m - 1)):
        raise BchConstructionError(f"t={t} invalid for m={m}")
    fld = GaloisField(m, primitive_poly)
    generator = 1
    seen: set[tuple[int, ...]] = set()
    for s in range(1, 2 * t + 1):
        coset = _cyclotomic_coset(s, n)
        if coset in seen:
            continue
        seen.add(coset)
        generator = poly_mul_gf2(generator, _minimal_polynomial(fld, coset))
    k = n - (generator.bit_length() - 1)
    if k <= 0:
        raise BchConstructionError(f"(m={m}, t={t}) leaves no message bits (k={k})")
    return BchCode(field=fld, n=n, k=k, t=t, generator_poly=generator)
