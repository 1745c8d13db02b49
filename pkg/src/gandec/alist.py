"""Reader/writer for the alist sparse binary matrix format.

Layout: line 1 "n m" (columns then rows), line 2 max column/row degree,
then the per-column and per-row degree lists, then 1-based row indices
per column and column indices per row. Zero padding in the index lists
is accepted on input; the writer emits unpadded lists.
"""

from __future__ import annotations

import numpy as np

from .errors import InconsistentDegrees, ParseError


def load_alist(text: str | bytes) -> np.ndarray:
    """Parse alist text into an (m, n) uint8 parity-check matrix."""
    if isinstance(text, bytes):
        text = text.decode("ascii")
    lines = text.splitlines()

    def ints(line_no: int) -> list[int]:
        if line_no >= len(lines):
            raise ParseError("unexpected end of file", line=line_no + 1)
        try:
            return [int(tok) for tok in lines[line_no].split()]
        except ValueError:
            raise ParseError(f"non-integer token in {lines[line_no]!r}",
                             line=line_no + 1) from None

    head = ints(0)
    if len(head) != 2:
        raise ParseError("expected 'n m' on line 1", line=1)
    n, m = head
    if n < 1 or m < 1:
        raise ParseError(f"bad dimensions n={n} m={m}", line=1)
    if len(ints(1)) != 2:
        raise ParseError("expected max column/row degrees", line=2)
    col_deg = ints(2)
    row_deg = ints(3)
    if len(col_deg) != n:
        raise ParseError(f"expected {n} column degrees, got {len(col_deg)}", line=3)
    if len(row_deg) != m:
        raise ParseError(f"expected {m} row degrees, got {len(row_deg)}", line=4)

    h = np.zeros((m, n), dtype=np.uint8)
    for j in range(n):
        entries = [x for x in ints(4 + j) if x != 0]
        if len(entries) != col_deg[j]:
            raise InconsistentDegrees(
                f"column {j + 1} lists {len(entries)} rows, degree says {col_deg[j]}"
            )
        for r in entries:
            if not 1 <= r <= m:
                raise ParseError(f"row index {r} out of range", line=5 + j)
            h[r - 1, j] = 1
    for i in range(m):
        entries = [x for x in ints(4 + n + i) if x != 0]
        if len(entries) != row_deg[i]:
            raise InconsistentDegrees(
                f"row {i + 1} lists {len(entries)} columns, degree says {row_deg[i]}"
            )
        for c in entries:
            if not 1 <= c <= n:
                raise ParseError(f"column index {c} out of range", line=5 + n + i)
            if not h[i, c - 1]:
                raise InconsistentDegrees(
                    f"row {i + 1} lists column {c} absent from the column lists"
                )
    if int(h.sum()) != sum(col_deg) or int(h.sum()) != sum(row_deg):
        raise InconsistentDegrees("degree totals disagree with the index lists")
    return h


def save_alist(h: np.ndarray) -> str:
    """Serialize an (m, n) binary matrix to canonical (unpadded) alist text."""
    h = np.asarray(h, dtype=np.uint8)
    m, n = h.shape
    col_deg = h.sum(axis=0).astype(int)
    row_deg = h.sum(axis=1).astype(int)
    out = [
        f"{n} {m}",
        f"{int(col_deg.max(initial=0))} {int(row_deg.max(initial=0))}",
        " ".join(str(d) for d in col_deg),
        " ".join(str(d) for d in row_deg),
    ]
    for j in range(n):
        out.append(" ".join(str(i + 1) for i in np.nonzero(h[:, j])[0]))
    for i in range(m):
        out.append(" ".join(str(j + 1) for j in np.nonzero(h[i, :])[0]))
    return "\n".join(out) + "\n"
