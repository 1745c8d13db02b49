"""Dense GF(2) linear algebra on 0/1 uint8 matrices."""

from __future__ import annotations

import numpy as np

from .errors import RankDeficient


def as_gf2(a) -> np.ndarray:
    """Validate and convert to a 2-D uint8 matrix with entries in {0, 1}."""
    m = np.asarray(a)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    if not np.isin(m, (0, 1)).all():
        raise ValueError("matrix entries must be 0 or 1")
    return m.astype(np.uint8)


def mat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product over GF(2)."""
    return (a.astype(np.int64) @ b.astype(np.int64)) % 2


def rref(m) -> tuple[np.ndarray, list[int]]:
    """Reduced row-echelon form over GF(2).

    Returns the reduced matrix and the pivot column indices. The row space
    is preserved; an all-zero matrix is returned unchanged with no pivots.
    """
    r = as_gf2(m).copy()
    n_rows, n_cols = r.shape
    pivots: list[int] = []
    row = 0
    for col in range(n_cols):
        if row >= n_rows:
            break
        hits = np.nonzero(r[row:, col])[0]
        if hits.size == 0:
            continue
        pivot = row + hits[0]
        if pivot != row:
            r[[row, pivot]] = r[[pivot, row]]
        others = np.nonzero(r[:, col])[0]
        for i in others:
            if i != row:
                r[i, :] ^= r[row, :]
        pivots.append(col)
        row += 1
    return r, pivots


def rank(m) -> int:
    return len(rref(m)[1])


def nullspace_basis(m) -> np.ndarray:
    """Rows form a basis of the right null space of ``m`` over GF(2).

    Returns a (dim, n_cols) matrix; dim may be zero.
    """
    r, pivots = rref(m)
    n_cols = r.shape[1]
    free = [c for c in range(n_cols) if c not in pivots]
    basis = np.zeros((len(free), n_cols), dtype=np.uint8)
    for i, f in enumerate(free):
        basis[i, f] = 1
        for row_idx, p in enumerate(pivots):
            basis[i, p] = r[row_idx, f]
    return basis


def generator_from_parity(h) -> np.ndarray:
    """Generator matrix for the code with parity-check matrix ``h``.

    ``h`` must have full row rank (n - k independent checks); the result G
    is k x n with G @ h.T = 0 and rank k.
    """
    h = as_gf2(h)
    r = rank(h)
    if r < h.shape[0]:
        raise RankDeficient(
            f"parity-check matrix has rank {r} < {h.shape[0]} rows"
        )
    g = nullspace_basis(h)
    if g.shape[0] != h.shape[1] - r:
        raise RankDeficient("null space dimension does not match n - rank(H)")
    return g
