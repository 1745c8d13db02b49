"""Linear block codes: construction, encoding, and membership tests.

Codewords are laid out systematically: message bits occupy positions
0..k-1 and parity bits positions k..n-1, so G = [I_k | P] and
H = [P^T | I_{n-k}] (checks by variables).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import gf2
from .errors import InvalidParameters, LengthMismatch, TooLarge
from .fields import (
    PRIMITIVE_POLYS,
    gf2m_new,
    minimal_polynomial,
    poly_degree,
    poly_mod,
    poly_mul,
)
from .tanner import TannerGraph, build_tanner


@dataclass(frozen=True, eq=False)  # identity hashing; ndarray fields
class LinearCode:
    """An (n, k) binary linear code with explicit G and H matrices."""

    name: str
    n: int
    k: int
    H: np.ndarray = field(repr=False)
    G: np.ndarray = field(repr=False)

    def __post_init__(self):
        h = gf2.as_gf2(self.H)
        g = gf2.as_gf2(self.G)
        if h.shape != (self.n - self.k, self.n):
            raise InvalidParameters(f"H shape {h.shape} != {(self.n - self.k, self.n)}")
        if g.shape != (self.k, self.n):
            raise InvalidParameters(f"G shape {g.shape} != {(self.k, self.n)}")
        if gf2.mat_mul(g, h.T).any():
            raise InvalidParameters("G @ H^T != 0")
        if gf2.rank(h) != self.n - self.k:
            raise InvalidParameters("H is not full rank")
        if gf2.rank(g) != self.k:
            raise InvalidParameters("G is not full rank")
        object.__setattr__(self, "H", h)
        object.__setattr__(self, "G", g)

    @property
    def rate(self) -> float:
        return self.k / self.n

    @cached_property
    def graph(self) -> TannerGraph:
        return build_tanner(self.H)

    @cached_property
    def codewords(self) -> np.ndarray:
        """All 2^k codewords as a (2^k, n) uint8 matrix (k <= 20 only)."""
        if self.k > 20:
            raise TooLarge(f"k={self.k} too large to enumerate 2^k codewords")
        messages = (
            (np.arange(1 << self.k)[:, None] >> np.arange(self.k)[None, :]) & 1
        ).astype(np.uint8)
        return gf2.mat_mul(messages, self.G).astype(np.uint8)


def encode(code: LinearCode, message) -> np.ndarray:
    """Multiply a length-k message (or a batch of them) by G over GF(2)."""
    msg = np.atleast_2d(np.asarray(message, dtype=np.uint8))
    if msg.shape[-1] != code.k:
        raise LengthMismatch(f"message length {msg.shape[-1]} != k={code.k}")
    out = gf2.mat_mul(msg, code.G).astype(np.uint8)
    return out[0] if np.asarray(message).ndim == 1 else out


def is_codeword(code: LinearCode, word) -> bool:
    """True iff H @ word^T = 0 over GF(2)."""
    w = np.asarray(word, dtype=np.uint8)
    if w.shape != (code.n,):
        raise LengthMismatch(f"word length {w.shape} != n={code.n}")
    return not gf2.mat_mul(code.H, w[:, None]).any()


def syndromes(code: LinearCode, words: np.ndarray) -> np.ndarray:
    """Batch syndrome H @ w^T for a (B, n) bit matrix; shape (B, n-k)."""
    return gf2.mat_mul(np.atleast_2d(words), code.H.T)


def _systematic_from_generator_poly(name: str, n: int, gen_poly: int) -> LinearCode:
    """Systematic code from a degree-(n-k) generator polynomial.

    Row i of G encodes message bit i as x^(n-k+i) plus its remainder mod
    the generator polynomial; parity position k+s carries the coefficient
    of x^s.
    """
    r = poly_degree(gen_poly)
    k = n - r
    if k <= 0:
        raise InvalidParameters(f"generator polynomial degree {r} >= n={n}")
    p = np.zeros((k, r), dtype=np.uint8)
    for i in range(k):
        rem = poly_mod(1 << (r + i), gen_poly)
        p[i] = [(rem >> s) & 1 for s in range(r)]
    g = np.hstack([np.eye(k, dtype=np.uint8), p])
    h = np.hstack([p.T, np.eye(r, dtype=np.uint8)])
    return LinearCode(name=name, n=n, k=k, H=h, G=g)


def bch_code(m: int, t: int) -> LinearCode:
    """Narrow-sense binary BCH code of length 2^m - 1 correcting t errors.

    The generator polynomial is the LCM of the minimal polynomials of
    alpha^1 .. alpha^2t; H is the systematic form derived from it.
    """
    if not 3 <= m <= 10:
        raise InvalidParameters(f"m={m} outside [3, 10]")
    if t < 1:
        raise InvalidParameters(f"t={t} must be >= 1")
    fld = gf2m_new(m, PRIMITIVE_POLYS[m])
    gen = 1
    seen: set[int] = set()
    for j in range(1, 2 * t + 1):
        e = j % fld.order
        if e in seen:
            continue
        # mark the whole conjugacy class of alpha^j as covered
        c = e
        while c not in seen:
            seen.add(c)
            c = (c * 2) % fld.order
        gen = poly_mul(gen, minimal_polynomial(fld, j))
    n = fld.order
    if poly_degree(gen) >= n:
        raise InvalidParameters(f"designed t={t} leaves no message bits at m={m}")
    return _systematic_from_generator_poly(f"bch{n}_{n - poly_degree(gen)}", n, gen)


def hamming_7_4() -> LinearCode:
    """The (7, 4) Hamming code, systematic form, minimum distance 3."""
    # parity rows for message bits: remainders of x^3..x^6 modulo x^3+x+1
    p = np.array(
        [
            [1, 1, 0],  # x^3 -> x + 1
            [0, 1, 1],  # x^4 -> x^2 + x
            [1, 1, 1],  # x^5 -> x^2 + x + 1
            [1, 0, 1],  # x^6 -> x^2 + 1
        ],
        dtype=np.uint8,
    )
    g = np.hstack([np.eye(4, dtype=np.uint8), p])
    h = np.hstack([p.T, np.eye(3, dtype=np.uint8)])
    return LinearCode(name="hamming7_4", n=7, k=4, H=h, G=g)


_BUILTIN = {
    "hamming7_4": hamming_7_4,
    "bch15_11": lambda: bch_code(4, 1),
    "bch63_45": lambda: bch_code(6, 3),
}


def code_by_name(name: str) -> LinearCode:
    """Look up a built-in code by its CLI name."""
    try:
        return _BUILTIN[name]()
    except KeyError:
        raise InvalidParameters(
            f"unknown code {name!r}; built-ins: {sorted(_BUILTIN)}"
        ) from None
