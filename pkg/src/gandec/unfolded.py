"""Trainable unfolded decoder networks.

An L-iteration decoder unfolds into 2L message layers plus a sigmoid
output layer. Odd layers are weighted variable-to-check sums, even
layers are the usual check-to-variable update, and everything records
onto an autodiff tape so the weights can be trained.

Three parameterizations:

* ``full``        - one weight per (layer, variable) channel term and one
                    per (layer, edge, contributing edge) pair, plus the
                    weighted output layer.
* ``simplified``  - a single scalar per layer multiplying the whole
                    variable update; exactly L trainable values.
* ``offset-min-sum`` - plain unweighted odd layers; even layers run
                    min-sum with one trainable non-negative offset per
                    (layer, edge), reparameterized through relu.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Node, Tape, adam_step, backward
from .base import ParamsMixin, check_bit_frames, check_llr_frames
from .channel import Rng
from .codes import LinearCode
from .errors import InvalidParameters, LayoutMismatch
from .tanner import TannerGraph

FULL = "full"
SIMPLIFIED = "simplified"
OFFSET_MIN_SUM = "offset-min-sum"
_MODES = (FULL, SIMPLIFIED, OFFSET_MIN_SUM)
_MODE_TAGS = {FULL: 0, SIMPLIFIED: 1, OFFSET_MIN_SUM: 2}

CLAMP = 10.0
_MIN_PAD = 1e30  # finite stand-in for +inf under the NaN/inf tape guard


@dataclass(frozen=True, eq=False)
class UnfoldingLayout:
    """Index arrays tying weight vectors to a Tanner graph."""

    edge_var: np.ndarray
    pair_dst: np.ndarray      # (P,) destination edge per (edge, contributor) pair
    pair_src: np.ndarray      # (P,) contributing edge per pair
    contrib_idx: np.ndarray   # (E, K) same-check contributors, padded with E
    has_contrib: np.ndarray   # (E,) 1.0 where a check has other edges

    @property
    def n_edges(self) -> int:
        return int(self.edge_var.size)

    @property
    def n_pairs(self) -> int:
        return int(self.pair_dst.size)


def _build_layout(graph: TannerGraph) -> UnfoldingLayout:
    pair_dst: list[int] = []
    pair_src: list[int] = []
    for e in range(graph.n_edges):
        for other in graph.var_adjacency[int(graph.edge_var[e])]:
            if other != e:
                pair_dst.append(e)
                pair_src.append(other)
    k = max((len(a) for a in graph.chk_adjacency), default=1)
    contrib = np.full((graph.n_edges, max(k - 1, 1)), graph.n_edges, dtype=np.int64)
    has = np.zeros(graph.n_edges)
    for edges in graph.chk_adjacency:
        for e in edges:
            others = [o for o in edges if o != e]
            contrib[e, : len(others)] = others
            has[e] = 1.0 if others else 0.0
    return UnfoldingLayout(
        edge_var=graph.edge_var.copy(),
        pair_dst=np.asarray(pair_dst, dtype=np.int64),
        pair_src=np.asarray(pair_src, dtype=np.int64),
        contrib_idx=contrib,
        has_contrib=has,
    )


@lru_cache(maxsize=32)
def _layout_for(code: LinearCode) -> UnfoldingLayout:
    return _build_layout(code.graph)


@dataclass
class UnfoldedWeights:
    """Weight set for one unfolded network instance."""

    code_name: str
    n: int
    k: int
    n_layers: int
    mode: str
    values: dict[str, np.ndarray] = field(default_factory=dict)

    def trainable_keys(self) -> list[str]:
        return sorted(self.values)

    def n_parameters(self) -> int:
        return sum(v.size for v in self.values.values())

    def copy(self) -> "UnfoldedWeights":
        return UnfoldedWeights(
            code_name=self.code_name, n=self.n, k=self.k,
            n_layers=self.n_layers, mode=self.mode,
            values={k: v.copy() for k, v in self.values.items()},
        )


@dataclass
class DecoderOutput:
    """Soft probabilities, their pre-sigmoid values, and hard decisions.

    ``soft`` and ``pre_sigmoid`` are tape nodes when a tape recorded the
    forward pass; ``bits`` is always a plain uint8 array.
    """

    soft: Node
    pre_sigmoid: Node
    bits: np.ndarray

    @property
    def soft_values(self) -> np.ndarray:
        return self.soft.value

    @property
    def pre_sigmoid_values(self) -> np.ndarray:
        return self.pre_sigmoid.value


def init_unfolded(code: LinearCode, n_layers: int, mode: str = FULL,
                  rng: Rng | None = None, jitter: bool = False) -> UnfoldedWeights:
    """Unit multiplicative weights (zero offsets), optionally jittered
    by Uniform(-0.01, 0.01)."""
    if n_layers < 1:
        raise InvalidParameters("n_layers must be >= 1")
    if mode not in _MODES:
        raise InvalidParameters(f"mode must be one of {_MODES}")
    layout = _layout_for(code)
    values: dict[str, np.ndarray] = {}
    if mode == FULL:
        for i in range(n_layers):
            values[f"w_ch.{i:04d}"] = np.ones(code.n)
            values[f"w_edge.{i:04d}"] = np.ones(layout.n_pairs)
        values["w_out_ch"] = np.ones(code.n)
        values["w_out_edge"] = np.ones(layout.n_edges)
    elif mode == SIMPLIFIED:
        values["w_layer"] = np.ones(n_layers)
    else:
        for i in range(n_layers):
            values[f"offset_raw.{i:04d}"] = np.zeros(layout.n_edges)
    if jitter:
        if rng is None:
            raise InvalidParameters("jitter requires an rng")
        for key in sorted(values):
            arr = values[key]
            flat = arr.reshape(-1)
            for j in range(flat.size):
                flat[j] += rng.uniform() * 0.02 - 0.01
    return UnfoldedWeights(code_name=code.name, n=code.n, k=code.k,
                           n_layers=n_layers, mode=mode, values=values)


def _bind(tape: Tape, weights: UnfoldedWeights,
          param_prefix: str | None) -> dict[str, Node]:
    if param_prefix is None:
        return {k: tape.const(v) for k, v in weights.values.items()}
    return {k: tape.param(v, param_prefix + k) for k, v in weights.values.items()}


def _check_sumproduct(tape: Tape, x_vc: Node, layout: UnfoldingLayout) -> Node:
    t = ad.tanh(x_vc * 0.5)
    t_ext = _pad_ones(tape, t)
    prod = ad.prod_last(ad.gather_last(t_ext, layout.contrib_idx))
    return ad.clamp(2.0 * ad.atanh(prod), -CLAMP, CLAMP)


def _check_offset_minsum(tape: Tape, x_vc: Node, layout: UnfoldingLayout,
                         offset_raw: Node) -> Node:
    mag = ad.abs_(x_vc)
    mag_ext = _pad_const(tape, mag, _MIN_PAD)
    min_mag = ad.min_last(ad.gather_last(mag_ext, layout.contrib_idx))
    min_mag = ad.minimum2(min_mag, tape.const(np.asarray(CLAMP)))  # mask the pad
    sgn_ext = _pad_const(tape, ad.sign_detached(x_vc), 1.0)
    sign_prod = ad.prod_last(ad.gather_last(sgn_ext, layout.contrib_idx))
    floored = ad.relu(min_mag - ad.relu(offset_raw))
    out = floored * sign_prod * layout.has_contrib
    return ad.clamp(out, -CLAMP, CLAMP)


def _pad_ones(tape: Tape, node: Node) -> Node:
    return _pad_const(tape, node, 1.0)


def _pad_const(tape: Tape, node: Node, value: float) -> Node:
    """Append one constant column along the last axis (the gather pad target)."""
    pad_shape = node.value.shape[:-1] + (1,)
    pad = tape.const(np.full(pad_shape, value))
    return _concat_last(node, pad)


def _concat_last(a: Node, b: Node) -> Node:
    tape = a.tape
    val = np.concatenate([a.value, b.value], axis=-1)
    out = ad._record(tape, val, (a, b), None)
    split = a.value.shape[-1]
    out.backward_fn = lambda g: (
        ad._accum(a, g[..., :split]),
        ad._accum(b, g[..., split:]),
    )
    return out


def _variable_bracket(params: dict[str, Node], layer: int, mode: str,
                      l_edges: Node, x_cv: Node,
                      layout: UnfoldingLayout) -> Node:
    """w_ch * l plus the weighted sum of other-check incoming messages."""
    contrib = ad.gather_last(x_cv, layout.pair_src)
    if mode == FULL:
        w_ch = ad.gather_last(params[f"w_ch.{layer:04d}"], layout.edge_var)
        w_edge = params[f"w_edge.{layer:04d}"]
        summed = ad.scatter_sum_last(contrib * w_edge, layout.pair_dst,
                                     layout.n_edges)
        return w_ch * l_edges + summed
    summed = ad.scatter_sum_last(contrib, layout.pair_dst, layout.n_edges)
    bracket = l_edges + summed
    if mode == SIMPLIFIED:
        w_i = ad.gather_last(params["w_layer"], np.asarray(layer, dtype=np.int64))
        return w_i * bracket
    return bracket  # offset-min-sum: unweighted odd layers


def _output_layer(params: dict[str, Node], mode: str, llr_node: Node,
                  x_cv: Node, layout: UnfoldingLayout, n: int) -> Node:
    if mode == FULL:
        weighted = x_cv * params["w_out_edge"]
        total = ad.scatter_sum_last(weighted, layout.edge_var, n)
        return params["w_out_ch"] * llr_node + total
    total = ad.scatter_sum_last(x_cv, layout.edge_var, n)
    return llr_node + total


def forward(weights: UnfoldedWeights, code: LinearCode, llr, tape: Tape,
            param_prefix: str | None = None,
            initial_chk_to_var: np.ndarray | None = None,
            message_log: list | None = None) -> DecoderOutput:
    """Run the unfolded network on (B, n) LLR frames.

    With ``param_prefix`` set, the weights are recorded as trainable tape
    parameters under prefixed keys; otherwise they enter as constants.
    ``message_log``, when given, collects (var_to_chk, chk_to_var) value
    pairs per unfolded iteration.
    """
    frames = check_llr_frames(llr, code.n)
    layout = _layout_for(code)
    params = _bind(tape, weights, param_prefix)
    llr_node = tape.const(frames)
    l_edges = ad.gather_last(llr_node, layout.edge_var)
    if initial_chk_to_var is None:
        x_cv = tape.const(np.zeros((frames.shape[0], layout.n_edges)))
    else:
        x_cv = tape.const(np.broadcast_to(
            np.asarray(initial_chk_to_var, dtype=np.float64),
            (frames.shape[0], layout.n_edges),
        ).copy())
    for layer in range(weights.n_layers):
        bracket = _variable_bracket(params, layer, weights.mode,
                                    l_edges, x_cv, layout)
        x_vc = ad.clamp(bracket, -CLAMP, CLAMP)
        if weights.mode == OFFSET_MIN_SUM:
            x_cv = _check_offset_minsum(tape, x_vc, layout,
                                        params[f"offset_raw.{layer:04d}"])
        else:
            x_cv = _check_sumproduct(tape, x_vc, layout)
        if message_log is not None:
            message_log.append((x_vc.value.copy(), x_cv.value.copy()))
    pre = _output_layer(params, weights.mode, llr_node, x_cv, layout, code.n)
    soft = ad.sigmoid(pre)
    bits = (pre.value > 0).astype(np.uint8)
    return DecoderOutput(soft=soft, pre_sigmoid=pre, bits=bits)


def forward_variant(weights: UnfoldedWeights, code: LinearCode, llr, tape: Tape,
                    param_prefix: str | None = None,
                    initial_var_to_chk: np.ndarray | None = None,
                    initial_chk_to_var: np.ndarray | None = None,
                    message_log: list | None = None) -> DecoderOutput:
    """Fixed-point-preserving variant.

    Odd layers compute (bp_update - previous_bp_update) * weighted_bracket
    + previous_bp_update, where bp_update is the plain unweighted variable
    update of the incoming state. Seeding both initial message directions
    with a BP fixed point therefore reproduces it under any weights.
    """
    if weights.mode == OFFSET_MIN_SUM:
        raise InvalidParameters("variant applies to weighted odd layers only")
    frames = check_llr_frames(llr, code.n)
    layout = _layout_for(code)
    params = _bind(tape, weights, param_prefix)
    llr_node = tape.const(frames)
    l_edges = ad.gather_last(llr_node, layout.edge_var)
    b = frames.shape[0]

    def expand(arr):
        return np.broadcast_to(
            np.asarray(arr, dtype=np.float64), (b, layout.n_edges)
        ).copy()

    x_cv = tape.const(
        expand(initial_chk_to_var) if initial_chk_to_var is not None
        else np.zeros((b, layout.n_edges))
    )
    xbar_prev = tape.const(
        expand(initial_var_to_chk) if initial_var_to_chk is not None
        else np.zeros((b, layout.n_edges))
    )
    for layer in range(weights.n_layers):
        contrib = ad.gather_last(x_cv, layout.pair_src)
        plain = ad.clamp(
            l_edges + ad.scatter_sum_last(contrib, layout.pair_dst, layout.n_edges),
            -CLAMP, CLAMP,
        )
        bracket = _variable_bracket(params, layer, weights.mode,
                                    l_edges, x_cv, layout)
        x_vc = ad.clamp((plain - xbar_prev) * bracket + xbar_prev, -CLAMP, CLAMP)
        xbar_prev = plain
        x_cv = _check_sumproduct(tape, x_vc, layout)
        if message_log is not None:
            message_log.append((x_vc.value.copy(), x_cv.value.copy()))
    pre = _output_layer(params, weights.mode, llr_node, x_cv, layout, code.n)
    soft = ad.sigmoid(pre)
    bits = (pre.value > 0).astype(np.uint8)
    return DecoderOutput(soft=soft, pre_sigmoid=pre, bits=bits)


def supervised_loss(output: DecoderOutput, codewords, tape: Tape) -> Node:
    """Mean binary cross-entropy between soft outputs and the sent bits."""
    bits = check_bit_frames(codewords, output.soft.value.shape[-1])
    if bits.shape != output.soft.value.shape:
        bits = np.broadcast_to(bits, output.soft.value.shape)
    b = bits.astype(np.float64)
    term = b * ad.log(output.soft) + (1.0 - b) * ad.log(1.0 - output.soft)
    return ad.neg(ad.mean_all(term))


# ---------------------------------------------------------------------------
# serialization: "GDEC" header + little-endian f64 arrays in sorted key order

_MAGIC = b"GDEC"
_VERSION = 1


def serialize_weights(weights: UnfoldedWeights) -> bytes:
    name = weights.code_name.encode("utf-8")
    head = struct.pack(
        "<4sIH", _MAGIC, _VERSION, len(name)
    ) + name + struct.pack(
        "<IIIB", weights.n, weights.k, weights.n_layers, _MODE_TAGS[weights.mode]
    )
    chunks = [head]
    for key in weights.trainable_keys():
        arr = np.ascontiguousarray(weights.values[key], dtype="<f8")
        chunks.append(struct.pack("<I", arr.size))
        chunks.append(arr.tobytes())
    return b"".join(chunks)


def read_weights_section(blob: bytes, code: LinearCode,
                         offset: int = 0) -> tuple[UnfoldedWeights, int]:
    """Parse one GDEC section starting at ``offset``.

    Returns the weights and the offset one past the section, so several
    sections (e.g. a trailing discriminator) can share a checkpoint file.
    """
    try:
        magic, version, name_len = struct.unpack_from("<4sIH", blob, offset)
        off = offset + 10
        name = blob[off: off + name_len].decode("utf-8")
        off += name_len
        n, k, n_layers, tag = struct.unpack_from("<IIIB", blob, off)
        off += 13
    except (struct.error, UnicodeDecodeError) as exc:
        raise LayoutMismatch(f"corrupt weight blob: {exc}") from None
    if magic != _MAGIC:
        raise LayoutMismatch(f"bad magic {magic!r}")
    if version != _VERSION:
        raise LayoutMismatch(f"unsupported version {version}")
    mode = {v: m for m, v in _MODE_TAGS.items()}.get(tag)
    if mode is None:
        raise LayoutMismatch(f"unknown mode tag {tag}")
    if (n, k) != (code.n, code.k):
        raise LayoutMismatch(
            f"weights are for an ({n}, {k}) code, target is ({code.n}, {code.k})"
        )
    reference = init_unfolded(code, n_layers, mode)
    values = {}
    for key in reference.trainable_keys():
        expected = reference.values[key].size
        if off + 4 > len(blob):
            raise LayoutMismatch("weight blob truncated")
        (size,) = struct.unpack_from("<I", blob, off)
        off += 4
        if size != expected:
            raise LayoutMismatch(
                f"{key}: expected {expected} values, found {size} "
                f"(edge layout differs)"
            )
        if off + 8 * size > len(blob):
            raise LayoutMismatch("weight blob truncated")
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=off).copy()
        off += 8 * size
        values[key] = arr.reshape(reference.values[key].shape)
    weights = UnfoldedWeights(code_name=name, n=n, k=k, n_layers=n_layers,
                              mode=mode, values=values)
    return weights, off


def deserialize_weights(blob: bytes, code: LinearCode) -> UnfoldedWeights:
    """Parse a standalone weight blob, rejecting trailing bytes."""
    weights, off = read_weights_section(blob, code)
    if off != len(blob):
        raise LayoutMismatch(f"{len(blob) - off} trailing bytes in weight blob")
    return weights


# ---------------------------------------------------------------------------


class UnfoldedBpDecoder(ParamsMixin):
    """Estimator-style front end: fit on labelled frames, predict on LLRs."""

    def __init__(self, code: LinearCode, n_layers: int = 5, mode: str = FULL,
                 learning_rate: float = 1e-3, batch_size: int = 64,
                 n_epochs: int = 1, seed: int = 0, jitter: bool = False,
                 tag: str | None = None):
        self.code = code
        self.n_layers = n_layers
        self.mode = mode
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.n_epochs = n_epochs
        self.seed = seed
        self.jitter = jitter
        self.tag = tag if tag is not None else "unfolded"
        self.weights_: UnfoldedWeights | None = None

    def ensure_weights(self) -> UnfoldedWeights:
        if self.weights_ is None:
            self.weights_ = init_unfolded(
                self.code, self.n_layers, self.mode,
                rng=Rng(self.seed), jitter=self.jitter,
            )
        return self.weights_

    def fit(self, X, y):
        """Supervised minibatch training against transmitted codewords."""
        frames = check_llr_frames(X, self.code.n)
        bits = check_bit_frames(y, self.code.n)
        if frames.shape[0] != bits.shape[0]:
            raise InvalidParameters("X and y must have matching frame counts")
        weights = self.ensure_weights()
        adam = AdamState(lr=self.learning_rate)
        order_rng = Rng(self.seed ^ 0x5EED)
        n_frames = frames.shape[0]
        for _ in range(self.n_epochs):
            perm = _shuffled_indices(order_rng, n_frames)
            for start in range(0, n_frames - self.batch_size + 1, self.batch_size):
                sel = perm[start: start + self.batch_size]
                tape = Tape()
                out = forward(weights, self.code, frames[sel], tape,
                              param_prefix="dec/")
                loss = supervised_loss(out, bits[sel], tape)
                grads = backward(tape, loss)
                stripped = {k.removeprefix("dec/"): g for k, g in grads.items()}
                weights.values = adam_step(adam, weights.values, stripped)
        return self

    def decode(self, llr) -> DecoderOutput:
        return forward(self.ensure_weights(), self.code, llr, Tape())

    def predict(self, X, chunk: int = 2048) -> np.ndarray:
        frames = check_llr_frames(X, self.code.n)
        outs = [
            forward(self.ensure_weights(), self.code, frames[i: i + chunk],
                    Tape()).bits
            for i in range(0, frames.shape[0], chunk)
        ]
        return np.concatenate(outs, axis=0)

    def predict_proba(self, X, chunk: int = 2048) -> np.ndarray:
        frames = check_llr_frames(X, self.code.n)
        outs = [
            forward(self.ensure_weights(), self.code, frames[i: i + chunk],
                    Tape()).soft.value
            for i in range(0, frames.shape[0], chunk)
        ]
        return np.concatenate(outs, axis=0)


def _shuffled_indices(rng: Rng, n: int) -> np.ndarray:
    """Fisher-Yates permutation driven by the portable stream."""
    idx = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = rng.next_u64() % (i + 1)
        idx[i], idx[j] = idx[j], idx[i]
    return idx
