"""Flooding-schedule belief propagation: sum-product, min-sum, offset min-sum.

All messages live in the log P(bit=1)/P(bit=0) domain and are truncated to
[-clamp, +clamp] after every half-iteration. The check update is the
product/min form applied verbatim to that orientation; hard decisions are
bit = 1 iff the output marginal is positive, ties decoding to 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .base import ParamsMixin, check_llr_frames
from .codes import LinearCode
from .errors import InvalidParameters
from .tanner import TannerGraph

SUM_PRODUCT = "sum-product"
MIN_SUM = "min-sum"
OFFSET_MIN_SUM = "offset-min-sum"
_VARIANTS = (SUM_PRODUCT, MIN_SUM, OFFSET_MIN_SUM)


@dataclass(frozen=True)
class BpConfig:
    iterations: int = 100
    clamp: float = 10.0
    variant: str = SUM_PRODUCT
    offset: float = 0.0
    atanh_eps: float = 1e-7
    early_exit: bool = False
    normalize: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidParameters("iterations must be >= 1")
        if not self.clamp > 0:
            raise InvalidParameters("clamp must be positive")
        if not 0 < self.atanh_eps < 0.1:
            raise InvalidParameters("atanh_eps must lie in (0, 0.1)")
        if self.variant not in _VARIANTS:
            raise InvalidParameters(f"variant must be one of {_VARIANTS}")
        if self.offset < 0:
            raise InvalidParameters("offset must be >= 0")


@dataclass
class BpResult:
    bits: np.ndarray
    soft: np.ndarray
    converged_at: int | None


@lru_cache(maxsize=64)
def _contributor_index(graph: TannerGraph) -> tuple[np.ndarray, int]:
    """(E, d_max-1) matrix of same-check contributor edges, padded with E.

    Row e lists the other edges on e's check; the pad value E points at a
    sentinel column the check update fills with its identity element.
    Cached per graph (graphs are immutable and identity-hashed).
    """
    e_count = graph.n_edges
    d_max = max((len(a) for a in graph.chk_adjacency), default=1)
    idx = np.full((e_count, max(d_max - 1, 1)), e_count, dtype=np.int64)
    for edges in graph.chk_adjacency:
        for e in edges:
            others = [o for o in edges if o != e]
            idx[e, : len(others)] = others
    return idx, e_count


def _normalize(msgs: np.ndarray, clamp: float) -> np.ndarray:
    """Scale messages so their mean magnitude stays below clamp / 2."""
    mean_abs = np.mean(np.abs(msgs), axis=-1, keepdims=True)
    scale = np.minimum(1.0, (clamp / 2.0) / np.maximum(mean_abs, 1e-300))
    return msgs * scale


def variable_update(graph: TannerGraph, llr: np.ndarray, chk_to_var: np.ndarray,
                    clamp: float = 10.0) -> np.ndarray:
    """Per-edge l_v plus the incoming check messages excluding the edge's own."""
    llr = np.atleast_2d(np.asarray(llr, dtype=np.float64))
    msgs = np.atleast_2d(np.asarray(chk_to_var, dtype=np.float64))
    totals = np.zeros((msgs.shape[0], graph.n_var))
    np.add.at(totals, (slice(None), graph.edge_var), msgs)
    out = llr[:, graph.edge_var] + totals[:, graph.edge_var] - msgs
    return np.clip(out, -clamp, clamp)


def check_update_sumproduct(graph: TannerGraph, var_to_chk: np.ndarray,
                            clamp: float = 10.0, atanh_eps: float = 1e-7) -> np.ndarray:
    """2 atanh of the product of tanh(x/2) over the check's other edges."""
    msgs = np.atleast_2d(np.asarray(var_to_chk, dtype=np.float64))
    idx, pad = _contributor_index(graph)
    t = np.concatenate(
        [np.tanh(msgs / 2.0), np.ones((msgs.shape[0], 1))], axis=1
    )
    prod = np.prod(t[:, idx], axis=2)
    prod = np.clip(prod, -(1.0 - atanh_eps), 1.0 - atanh_eps)
    return np.clip(2.0 * np.arctanh(prod), -clamp, clamp)


def check_update_minsum(graph: TannerGraph, var_to_chk: np.ndarray,
                        clamp: float = 10.0, offset: float = 0.0) -> np.ndarray:
    """Sign product times the offset-floored minimum magnitude; sign(0) = +1."""
    msgs = np.atleast_2d(np.asarray(var_to_chk, dtype=np.float64))
    idx, pad = _contributor_index(graph)
    mag = np.concatenate(
        [np.abs(msgs), np.full((msgs.shape[0], 1), np.inf)], axis=1
    )
    sgn = np.concatenate(
        [np.where(msgs < 0, -1.0, 1.0), np.ones((msgs.shape[0], 1))], axis=1
    )
    min_mag = np.min(mag[:, idx], axis=2)
    min_mag = np.where(np.isinf(min_mag), 0.0, min_mag)  # degree-1 checks
    sign_prod = np.prod(sgn[:, idx], axis=2)
    out = np.maximum(min_mag - offset, 0.0) * sign_prod
    return np.clip(out, -clamp, clamp)


def marginal_output(graph: TannerGraph, llr: np.ndarray,
                    chk_to_var: np.ndarray) -> np.ndarray:
    """Output marginal o_v = l_v + sum of all incoming check messages."""
    llr = np.atleast_2d(np.asarray(llr, dtype=np.float64))
    msgs = np.atleast_2d(np.asarray(chk_to_var, dtype=np.float64))
    totals = np.zeros((msgs.shape[0], graph.n_var))
    np.add.at(totals, (slice(None), graph.edge_var), msgs)
    return llr + totals


def _check_update(graph, var_to_chk, cfg: BpConfig) -> np.ndarray:
    if cfg.variant == SUM_PRODUCT:
        return check_update_sumproduct(graph, var_to_chk, cfg.clamp, cfg.atanh_eps)
    offset = cfg.offset if cfg.variant == OFFSET_MIN_SUM else 0.0
    return check_update_minsum(graph, var_to_chk, cfg.clamp, offset)


def decode_bp(code: LinearCode, llr, cfg: BpConfig = BpConfig()) -> BpResult:
    """Run L flooding iterations; also reports the first iteration whose
    hard decision satisfied every parity check (None if none did)."""
    arr = np.asarray(llr, dtype=np.float64)
    single = arr.ndim == 1
    frames = check_llr_frames(arr, code.n)
    graph = code.graph
    b = frames.shape[0]
    chk_to_var = np.zeros((b, graph.n_edges))
    converged = np.full(b, -1, dtype=np.int64)
    h = code.H.astype(np.int64)
    for it in range(1, cfg.iterations + 1):
        var_to_chk = variable_update(graph, frames, chk_to_var, cfg.clamp)
        if cfg.normalize:
            var_to_chk = _normalize(var_to_chk, cfg.clamp)
        chk_to_var = _check_update(graph, var_to_chk, cfg)
        if cfg.normalize:
            chk_to_var = _normalize(chk_to_var, cfg.clamp)
        soft = marginal_output(graph, frames, chk_to_var)
        bits = (soft > 0).astype(np.uint8)
        ok = ((bits @ h.T) % 2 == 0).all(axis=1)
        converged = np.where((converged < 0) & ok, it, converged)
        if cfg.early_exit and (converged > 0).all():
            break
    soft = marginal_output(graph, frames, chk_to_var)
    bits = (soft > 0).astype(np.uint8)
    conv: int | None
    if single:
        conv = int(converged[0]) if converged[0] > 0 else None
        return BpResult(bits=bits[0], soft=soft[0], converged_at=conv)
    return BpResult(bits=bits, soft=soft,
                    converged_at=None)  # per-frame detail dropped for batches


def bp_iteration_residual(graph: TannerGraph, llr, var_to_chk, chk_to_var,
                          cfg: BpConfig = BpConfig()) -> float:
    """Max absolute change of one further BP iteration from the given state.

    Zero (within tolerance) certifies a fixed point of the update pair.
    """
    new_vc = variable_update(graph, llr, chk_to_var, cfg.clamp)
    new_cv = _check_update(graph, new_vc, cfg)
    return float(
        max(
            np.max(np.abs(new_vc - np.atleast_2d(var_to_chk))),
            np.max(np.abs(new_cv - np.atleast_2d(chk_to_var))),
        )
    )


def bp_message_state(code: LinearCode, llr, cfg: BpConfig) -> tuple[np.ndarray, np.ndarray]:
    """(var_to_chk, chk_to_var) messages after cfg.iterations iterations."""
    graph = code.graph
    frames = np.atleast_2d(np.asarray(llr, dtype=np.float64))
    chk_to_var = np.zeros((frames.shape[0], graph.n_edges))
    var_to_chk = np.zeros_like(chk_to_var)
    for _ in range(cfg.iterations):
        var_to_chk = variable_update(graph, frames, chk_to_var, cfg.clamp)
        chk_to_var = _check_update(graph, var_to_chk, cfg)
    return var_to_chk, chk_to_var


class BpDecoder(ParamsMixin):
    """Classic BP as a predict-style decoder object."""

    def __init__(self, code: LinearCode, iterations: int = 100,
                 variant: str = SUM_PRODUCT, clamp: float = 10.0,
                 offset: float = 0.0, early_exit: bool = False,
                 normalize: bool = False, tag: str | None = None):
        self.code = code
        self.iterations = iterations
        self.variant = variant
        self.clamp = clamp
        self.offset = offset
        self.early_exit = early_exit
        self.normalize = normalize
        self.tag = tag if tag is not None else f"bp{iterations}"

    def _config(self) -> BpConfig:
        return BpConfig(iterations=self.iterations, clamp=self.clamp,
                        variant=self.variant, offset=self.offset,
                        early_exit=self.early_exit, normalize=self.normalize)

    def decode(self, llr) -> BpResult:
        return decode_bp(self.code, llr, self._config())

    def predict(self, llr_frames) -> np.ndarray:
        """Hard decisions for a (B, n) LLR matrix."""
        frames = check_llr_frames(llr_frames, self.code.n)
        return decode_bp(self.code, frames, self._config()).bits

    def predict_soft(self, llr_frames) -> np.ndarray:
        frames = check_llr_frames(llr_frames, self.code.n)
        return decode_bp(self.code, frames, self._config()).soft
