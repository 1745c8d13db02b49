"""Tanner graph with a stable edge indexing shared by all decoders.

Edges are numbered in (check, variable) sort order, so message vectors,
trained weights, and serialized models all agree on layout for a given H.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)  # identity hashing; ndarray fields
class TannerGraph:
    n_var: int
    n_chk: int
    edge_var: np.ndarray = field(repr=False)  # (E,) variable index per edge
    edge_chk: np.ndarray = field(repr=False)  # (E,) check index per edge
    var_adjacency: tuple[tuple[int, ...], ...] = field(repr=False)
    chk_adjacency: tuple[tuple[int, ...], ...] = field(repr=False)

    @property
    def n_edges(self) -> int:
        return int(self.edge_var.size)

    @property
    def edges(self) -> list[tuple[int, int]]:
        """Edge list as (variable, check) pairs in edge-index order."""
        return list(zip(self.edge_var.tolist(), self.edge_chk.tolist()))

    def var_degree(self, v: int) -> int:
        return len(self.var_adjacency[v])

    def chk_degree(self, c: int) -> int:
        return len(self.chk_adjacency[c])


def build_tanner(h: np.ndarray) -> TannerGraph:
    """One edge per nonzero H entry, ordered by (check, variable)."""
    h = np.asarray(h)
    n_chk, n_var = h.shape
    chk_idx, var_idx = np.nonzero(h)  # row-major scan == (check, variable) order
    var_adj: list[list[int]] = [[] for _ in range(n_var)]
    chk_adj: list[list[int]] = [[] for _ in range(n_chk)]
    for e, (v, c) in enumerate(zip(var_idx.tolist(), chk_idx.tolist())):
        var_adj[v].append(e)
        chk_adj[c].append(e)
    return TannerGraph(
        n_var=n_var,
        n_chk=n_chk,
        edge_var=var_idx.astype(np.int64),
        edge_chk=chk_idx.astype(np.int64),
        var_adjacency=tuple(tuple(a) for a in var_adj),
        chk_adjacency=tuple(tuple(a) for a in chk_adj),
    )
