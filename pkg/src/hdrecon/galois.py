"""Arithmetic in GF(2^v) for 1 <= v <= 8.

Elements are integers in ``[0, q)`` whose bits are the polynomial
coefficients, so addition is XOR and the binary image of a symbol is just
its bit pattern.  Multiplication and division go through exp/log tables
built from a fixed primitive polynomial per ``v``; full ``q x q`` product
and quotient tables are also materialised because the decoder permutes
message vectors by whole rows of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Bitmask of the defining polynomial per v, including the leading term.
PRIMITIVE_POLYS = {
    1: 0b11,  # x + 1 (degenerate, GF(2))
    2: 0b111,  # x^2 + x + 1
    3: 0b1011,  # x^3 + x + 1
    4: 0b10011,  # x^4 + x + 1
    5: 0b100101,  # x^5 + x^2 + 1
    6: 0b1000011,  # x^6 + x + 1
    7: 0b10000011,  # x^7 + x + 1
    8: 0b100011101,  # x^8 + x^4 + x^3 + x^2 + 1
}


class InvalidOrderError(ValueError):
    """Raised for a field order that is not a power of two in [2, 256]."""


def bits_per_symbol(q: int) -> int:
    if not isinstance(q, (int, np.integer)) or q < 2 or q > 256 or q & (q - 1):
        raise InvalidOrderError(f"field order must be a power of two in [2, 256], got {q!r}")
    return int(q).bit_length() - 1


@dataclass(frozen=True, eq=False)
class GfContext:
    """Lookup tables for GF(q).  Immutable once built."""

    q: int
    v: int
    primitive_poly: int
    exp_table: np.ndarray = field(repr=False)
    log_table: np.ndarray = field(repr=False)
    mul_table: np.ndarray = field(repr=False)
    div_table: np.ndarray = field(repr=False)
    inv_table: np.ndarray = field(repr=False)

    def add(self, a: int, b: int) -> int:
        return int(a) ^ int(b)

    sub = add

    def mul(self, a: int, b: int) -> int:
        return int(self.mul_table[a, b])

    def div(self, a: int, b: int) -> int:
        if b == 0:
            raise ZeroDivisionError("division by zero in GF(%d)" % self.q)
        return int(self.div_table[a, b])

    def inv(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("zero has no inverse")
        return int(self.inv_table[a])

    def pow(self, a: int, k: int) -> int:
        if a == 0:
            return 0 if k > 0 else 1
        return int(self.exp_table[(int(self.log_table[a]) * k) % (self.q - 1)])


_CACHE: dict[int, GfContext] = {}


def gf_new(q: int) -> GfContext:
    """Build (or fetch the cached) context for GF(q)."""
    v = bits_per_symbol(q)
    if q in _CACHE:
        return _CACHE[q]
    poly = PRIMITIVE_POLYS[v]
    order = q - 1
    exp_table = np.zeros(2 * order, dtype=np.int64)
    log_table = np.full(q, -1, dtype=np.int64)
    x = 1
    for i in range(order):
        exp_table[i] = x
        log_table[x] = i
        x <<= 1
        if x & q:
            x ^= poly
    exp_table[order:] = exp_table[:order]

    elems = np.arange(q)
    la = log_table[elems[1:]]
    mul = np.zeros((q, q), dtype=np.int64)
    mul[1:, 1:] = exp_table[(la[:, None] + la[None, :]) % order]
    div = np.zeros((q, q), dtype=np.int64)
    div[1:, 1:] = exp_table[(la[:, None] - la[None, :]) % order]
    inv = np.zeros(q, dtype=np.int64)
    inv[1:] = div[1, 1:]

    for arr in (exp_table, log_table, mul, div, inv):
        arr.setflags(write=False)
    ctx = GfContext(q, v, poly, exp_table, log_table, mul, div, inv)
    _CACHE[q] = ctx
    return ctx


def gf_add(ctx: GfContext, a: int, b: int) -> int:
    return ctx.add(a, b)


def gf_sub(ctx: GfContext, a: int, b: int) -> int:
    return ctx.sub(a, b)


def gf_mul(ctx: GfContext, a: int, b: int) -> int:
    return ctx.mul(a, b)


def gf_div(ctx: GfContext, a: int, b: int) -> int:
    return ctx.div(a, b)

