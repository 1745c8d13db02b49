"""GF(2^m) arithmetic on log/antilog tables, for BCH parity-check construction.

Polynomials over GF(2) are held as int bitmasks: bit i is the coefficient
of x^i, e.g. x^4 + x + 1 == 0b10011.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InvalidParameters, NotPrimitive

# Conventional primitive polynomials, one per extension degree.
PRIMITIVE_POLYS = {
    2: 0b111,            # x^2 + x + 1
    3: 0b1011,           # x^3 + x + 1
    4: 0b10011,          # x^4 + x + 1
    5: 0b100101,         # x^5 + x^2 + 1
    6: 0b1000011,        # x^6 + x + 1
    7: 0b10001001,       # x^7 + x^3 + 1
    8: 0b100011101,      # x^8 + x^4 + x^3 + x^2 + 1
    9: 0b1000010001,     # x^9 + x^4 + 1
    10: 0b10000001001,   # x^10 + x^3 + 1
}


def poly_degree(p: int) -> int:
    return p.bit_length() - 1


def poly_mul(a: int, b: int) -> int:
    """Carry-less product of two GF(2)[x] polynomials."""
    out = 0
    while b:
        if b & 1:
            out ^= a
        a <<= 1
        b >>= 1
    return out


def poly_mod(a: int, m: int) -> int:
    """Remainder of a(x) modulo m(x) over GF(2)."""
    dm = poly_degree(m)
    while poly_degree(a) >= dm:
        a ^= m << (poly_degree(a) - dm)
    return a


@dataclass(frozen=True)
class Gf2mField:
    """GF(2^m) represented in the polynomial basis of a primitive element."""

    m: int
    primitive_poly: int
    antilog: tuple[int, ...] = field(repr=False)  # antilog[i] = alpha^i
    log: tuple[int, ...] = field(repr=False)      # log[x] for x in 1..2^m-1

    @property
    def order(self) -> int:
        return (1 << self.m) - 1

    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        return self.antilog[(self.log[a] + self.log[b]) % self.order]

    def pow_alpha(self, e: int) -> int:
        return self.antilog[e % self.order]


def gf2m_new(m: int, primitive_poly: int | None = None) -> Gf2mField:
    """Build GF(2^m) tables from a degree-m primitive polynomial.

    Raises NotPrimitive when the generated element has order below 2^m - 1.
    """
    if not 2 <= m <= 10:
        raise InvalidParameters(f"extension degree m={m} outside [2, 10]")
    if primitive_poly is None:
        primitive_poly = PRIMITIVE_POLYS[m]
    if poly_degree(primitive_poly) != m:
        raise InvalidParameters(
            f"polynomial degree {poly_degree(primitive_poly)} != m={m}"
        )
    order = (1 << m) - 1
    antilog = [0] * order
    log = [0] * (1 << m)
    x = 1
    for i in range(order):
        if x == 1 and i > 0:
            raise NotPrimitive(
                f"polynomial {primitive_poly:#b} generates a group of order {i} < {order}"
            )
        antilog[i] = x
        log[x] = i
        x <<= 1
        if x & (1 << m):
            x ^= primitive_poly
    if x != 1:  # alpha^order must close the cycle
        raise NotPrimitive(f"polynomial {primitive_poly:#b} is not primitive")
    return Gf2mField(m=m, primitive_poly=primitive_poly,
                     antilog=tuple(antilog), log=tuple(log))


def minimal_polynomial(fld: Gf2mField, exponent: int) -> int:
    """Minimal polynomial over GF(2) of alpha^exponent, as a bitmask.

    Formed as the product of (x - beta) over the conjugacy class
    {alpha^(exponent * 2^i)}; the result always has 0/1 coefficients.
    """
    order = fld.order
    conjugates = []
    e = exponent % order
    while e not in conjugates:
        conjugates.append(e)
        e = (e * 2) % order
    # poly coefficients live in GF(2^m) during the product
    coeffs = [1]  # coefficients of prod (x + alpha^c), lowest degree last
    for c in conjugates:
        beta = fld.pow_alpha(c)
        nxt = [0] * (len(coeffs) + 1)
        for i, a in enumerate(coeffs):
            nxt[i] ^= fld.mul(a, beta)   # multiply by beta (== -beta in GF(2^m))
            nxt[i + 1] ^= a              # multiply by x
        coeffs = nxt
    mask = 0
    for i, a in enumerate(coeffs):
        if a not in (0, 1):
            raise InvalidParameters("minimal polynomial has non-binary coefficient")
        if a:
            mask |= 1 << i
    return mask
