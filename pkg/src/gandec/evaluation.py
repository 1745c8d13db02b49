"""Decoder evaluation: brute-force ML, FER Monte Carlo, SNR sweeps, and
the quantized toy channel used to check the game-theoretic claims.

Frames are seeded individually (seed, frame_index), so estimates are
reproducible for any worker count, and running several decoders at the
same seed pairs their noise exactly (common random numbers).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .autodiff import AdamState, Tape, adam_step, backward
from . import autodiff as ad
from .base import ParamsMixin, check_llr_frames
from .channel import ChannelConfig, FrameStreams, Rng, frame_llrs
from .codes import LinearCode, encode
from .errors import InvalidParameters, TooLarge
from .gan import (
    Discriminator,
    GameValueEstimate,
    d_ml_closed_form,
    disc_forward,
    init_discriminator,
    loss_f_gd,
)

_LOG_EPS = 1e-12


@dataclass(frozen=True)
class FerRecord:
    decoder_tag: str
    snr_db: float
    frames: int
    frame_errors: int
    bit_errors: int
    fer: float
    ber: float
    seed: int


class FunctionDecoder:
    """Adapter giving a plain frames->bits callable the decoder protocol."""

    def __init__(self, tag: str, fn):
        self.tag = tag
        self._fn = fn

    def predict(self, llr_frames) -> np.ndarray:
        return self._fn(llr_frames)


# ---------------------------------------------------------------------------
# brute-force maximum likelihood


def _lex_rank(code: LinearCode) -> np.ndarray:
    """Rank of each enumerated codeword under lexicographic bit order."""
    words = code.codewords
    order = np.lexsort(words.T[::-1])
    rank = np.empty(words.shape[0], dtype=np.int64)
    rank[order] = np.arange(words.shape[0])
    return rank


def ml_decode_index(code: LinearCode, llr_frames, chunk: int = 65536) -> np.ndarray:
    """Index of the score-maximizing codeword per frame.

    Score is sum(c_v * l_v); exact ties resolve to the lexicographically
    smallest codeword. Requires k <= 20.
    """
    if code.k > 20:
        raise TooLarge(f"ml decoding enumerates 2^k codewords; k={code.k} > 20")
    frames = check_llr_frames(llr_frames, code.n)
    words = code.codewords.astype(np.float64)
    rank = _lex_rank(code)
    out = np.empty(frames.shape[0], dtype=np.int64)
    for start in range(0, frames.shape[0], chunk):
        scores = frames[start: start + chunk] @ words.T
        best = scores.max(axis=1, keepdims=True)
        tied_rank = np.where(scores == best, rank[None, :], np.iinfo(np.int64).max)
        winner_rank = tied_rank.min(axis=1)
        lex_to_index = np.argsort(rank)
        out[start: start + chunk] = lex_to_index[winner_rank]
    return out


def ml_decode(code: LinearCode, llr) -> np.ndarray:
    """Maximum-likelihood codeword(s) for one frame or a batch."""
    arr = np.asarray(llr, dtype=np.float64)
    idx = ml_decode_index(code, arr)
    words = code.codewords[idx]
    return words[0] if arr.ndim == 1 else words


class MlDecoder(ParamsMixin):
    """Exhaustive ML decoding behind the common decoder protocol."""

    def __init__(self, code: LinearCode, tag: str = "ml"):
        if code.k > 20:
            raise TooLarge(f"k={code.k} > 20")
        self.code = code
        self.tag = tag

    def predict(self, llr_frames) -> np.ndarray:
        return ml_decode(self.code, check_llr_frames(llr_frames, self.code.n))


# ---------------------------------------------------------------------------
# FER Monte Carlo


def _count_chunk(decoder, code: LinearCode, cfg: ChannelConfig, seed: int,
                 start: int, stop: int) -> tuple[int, int]:
    idx = np.arange(start, stop, dtype=np.uint64)
    _, codewords, llrs = frame_llrs(code.k, code.n, cfg, seed, idx, code.G)
    bits = decoder.predict(llrs)
    wrong = bits != codewords
    return int(wrong.any(axis=1).sum()), int(wrong.sum())


def estimate_fer(decoder, code: LinearCode, snr_db: float, n_frames: int,
                 seed: int = 0, workers: int = 1,
                 chunk: int = 2048) -> FerRecord:
    """Monte-Carlo frame/bit error rates over per-frame-seeded channels.

    A frame is in error when any bit of the full decoded codeword
    differs from the transmitted one.
    """
    if n_frames < 1:
        raise InvalidParameters("n_frames must be >= 1")
    if not hasattr(decoder, "predict"):
        decoder = FunctionDecoder(getattr(decoder, "tag", "decoder"), decoder)
    cfg = ChannelConfig(snr_db=snr_db, rate=code.rate)
    spans = [(s, min(s + chunk, n_frames)) for s in range(0, n_frames, chunk)]
    if workers <= 1:
        counts = [_count_chunk(decoder, code, cfg, seed, a, b) for a, b in spans]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(
                lambda ab: _count_chunk(decoder, code, cfg, seed, *ab), spans
            ))
    frame_errors = sum(c[0] for c in counts)
    bit_errors = sum(c[1] for c in counts)
    return FerRecord(
        decoder_tag=getattr(decoder, "tag", "decoder"),
        snr_db=float(snr_db),
        frames=n_frames,
        frame_errors=frame_errors,
        bit_errors=bit_errors,
        fer=frame_errors / n_frames,
        ber=bit_errors / (n_frames * code.n),
        seed=seed,
    )


def snr_sweep(decoders, code: LinearCode, snr_list, n_frames: int,
              seed: int = 0, workers: int = 1) -> list[FerRecord]:
    """All decoders at all SNRs with shared per-frame noise (paired runs)."""
    records = []
    for snr_db in snr_list:
        for decoder in decoders:
            records.append(
                estimate_fer(decoder, code, snr_db, n_frames,
                             seed=seed, workers=workers)
            )
    return records


def _csv_quote(text: str) -> str:
    if any(ch in text for ch in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def fer_records_to_csv(records) -> str:
    lines = ["decoder,snr_db,frames,frame_errors,bit_errors,fer,ber,seed"]
    for r in records:
        lines.append(
            f"{_csv_quote(r.decoder_tag)},{r.snr_db!r},{r.frames},"
            f"{r.frame_errors},{r.bit_errors},{r.fer!r},{r.ber!r},{r.seed}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# quantized toy channel (makes the ML output distribution enumerable)


@dataclass(frozen=True, eq=False)
class QuantizedChannel:
    """Finite-output symmetric channel: BPSK into quantization bins.

    ``transition[b, j]`` is P(level j | transmitted bit b); each row sums
    to one. ``llr_per_level`` is the exact log P(level|1)/P(level|0).
    """

    levels: np.ndarray
    transition: np.ndarray
    llr_per_level: np.ndarray = field(init=False)

    def __post_init__(self):
        t = np.asarray(self.transition, dtype=np.float64)
        if t.shape != (2, self.levels.size):
            raise InvalidParameters("transition must be (2, n_levels)")
        if np.abs(t.sum(axis=1) - 1.0).max() > 1e-12:
            raise InvalidParameters("transition rows must sum to 1")
        with np.errstate(divide="ignore"):
            llr = np.log(np.maximum(t[1], _LOG_EPS)) - np.log(
                np.maximum(t[0], _LOG_EPS)
            )
        object.__setattr__(self, "llr_per_level", llr)

    @property
    def n_levels(self) -> int:
        return int(self.levels.size)


def _phi(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def quantized_awgn_channel(snr_db: float = 2.0, rate: float = 4 / 7,
                           n_levels: int = 5, step: float = 0.8,
                           gain: float = 1.0) -> QuantizedChannel:
    """Uniform symmetric quantization of the AWGN output.

    Interior bin boundaries sit at step * (j - n_levels/2) for
    j = 1..n_levels-1, scaled by the gain.
    """
    if n_levels < 2:
        raise InvalidParameters("need at least 2 levels")
    cfg = ChannelConfig(snr_db=snr_db, rate=rate, gain=gain)
    bounds = [gain * step * (j - n_levels / 2.0) for j in range(1, n_levels)]
    edges = [-math.inf, *bounds, math.inf]
    levels = np.array(
        [0.5 * (edges[j] + edges[j + 1]) if math.isfinite(edges[j]) and
         math.isfinite(edges[j + 1]) else
         (edges[j + 1] - gain * step / 2 if not math.isfinite(edges[j]) else
          edges[j] + gain * step / 2)
         for j in range(n_levels)]
    )
    transition = np.zeros((2, n_levels))
    for bit, x in ((0, gain), (1, -gain)):
        for j in range(n_levels):
            hi = 1.0 if not math.isfinite(edges[j + 1]) else _phi(
                (edges[j + 1] - x) / cfg.sigma
            )
            lo = 0.0 if not math.isfinite(edges[j]) else _phi(
                (edges[j] - x) / cfg.sigma
            )
            transition[bit, j] = hi - lo
    transition /= transition.sum(axis=1, keepdims=True)
    return QuantizedChannel(levels=levels, transition=transition)


def quantized_frame_llrs(code: LinearCode, qc: QuantizedChannel, seed: int,
                         frame_indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(codewords, llr frames) for uniform codewords through the quantizer."""
    idx = np.asarray(frame_indices, dtype=np.uint64)
    streams = FrameStreams(seed, idx)
    messages = streams.bits(code.k)
    uniforms = streams.uniforms(code.n)
    codewords = encode(code, messages)
    cum = np.cumsum(qc.transition, axis=1)
    thresholds = cum[codewords.astype(np.int64)]          # (F, n, L)
    level_idx = (uniforms[..., None] > thresholds).sum(axis=2)
    level_idx = np.minimum(level_idx, qc.n_levels - 1)
    return codewords, qc.llr_per_level[level_idx]


@dataclass
class PgMlResult:
    mass: np.ndarray                 # probability of each enumerated codeword
    std_error: np.ndarray | None     # per-codeword MC standard error
    method: str                      # "exact" or "mc"
    n_samples: int


def enumerate_pg_ml(code: LinearCode, qc: QuantizedChannel,
                    method: str = "auto", mc_samples: int = 1_000_000,
                    seed: int = 0) -> PgMlResult:
    """Distribution of ML decoder outputs for uniform codeword inputs.

    Exact enumeration covers k <= 12 with at most ~4e6 output sequences;
    larger instances fall back to Monte Carlo with recorded standard
    errors.
    """
    exact_feasible = code.k <= 12 and qc.n_levels ** code.n <= 4_000_000
    if method == "exact" and not exact_feasible:
        raise TooLarge("exact enumeration infeasible for this instance")
    if method not in ("auto", "exact", "mc"):
        raise InvalidParameters(f"unknown method {method!r}")
    if method in ("auto", "exact") and exact_feasible:
        return _enumerate_exact(code, qc)
    return _enumerate_mc(code, qc, mc_samples, seed)


def _enumerate_exact(code: LinearCode, qc: QuantizedChannel) -> PgMlResult:
    n, n_words = code.n, code.codewords.shape[0]
    seqs = np.indices((qc.n_levels,) * n).reshape(n, -1).T  # (L^n, n)
    llrs = qc.llr_per_level[seqs]
    decisions = ml_decode_index(code, llrs)
    log_tr = np.log(np.maximum(qc.transition, 1e-300))
    mass = np.zeros(n_words)
    for word in code.codewords:
        probs = np.exp(_seqs_logp(seqs, log_tr, word))
        mass += np.bincount(decisions, weights=probs, minlength=n_words)
    mass /= n_words
    return PgMlResult(mass=mass, std_error=None, method="exact",
                      n_samples=qc.n_levels ** n)


def _seqs_logp(seqs: np.ndarray, log_tr: np.ndarray, word: np.ndarray) -> np.ndarray:
    """log P(level sequence | transmitted word) for every sequence row."""
    per_pos = log_tr[word.astype(np.int64)[None, :],
                     seqs]                     # (S, n)
    return per_pos.sum(axis=1)


def _enumerate_mc(code: LinearCode, qc: QuantizedChannel, samples: int,
                  seed: int) -> PgMlResult:
    n_words = code.codewords.shape[0]
    counts = np.zeros(n_words, dtype=np.int64)
    chunk = 65536
    done = 0
    while done < samples:
        take = min(chunk, samples - done)
        idx = np.arange(done, done + take, dtype=np.uint64)
        _, llrs = quantized_frame_llrs(code, qc, seed, idx)
        counts += np.bincount(ml_decode_index(code, llrs), minlength=n_words)
        done += take
    mass = counts / samples
    return PgMlResult(
        mass=mass,
        std_error=np.sqrt(mass * (1.0 - mass) / samples),
        method="mc",
        n_samples=samples,
    )


# ---------------------------------------------------------------------------
# equilibrium verification


@dataclass
class EquilibriumReport:
    target: float                      # 2 log(1/2)
    f_closed: float                    # exact f(G_ML, D_ML) from the masses
    f_closed_estimate: GameValueEstimate
    f_trained: GameValueEstimate
    d_ml_values: np.ndarray            # closed-form D on each codeword
    p_g: PgMlResult


def _f_from_masses(u: np.ndarray, pg: np.ndarray, d: np.ndarray) -> float:
    return float(
        (u * np.log(np.maximum(d, _LOG_EPS))).sum()
        + (pg * np.log(np.maximum(1.0 - d, _LOG_EPS))).sum()
    )


def equilibrium_report(code: LinearCode, qc: QuantizedChannel,
                       mc_samples: int = 1_000_000,
                       disc_hidden: tuple[int, int] = (1024, 1024),
                       disc_steps: int = 300, batch_size: int = 64,
                       eval_samples: int = 20_000,
                       seed: int = 0) -> EquilibriumReport:
    """Estimate f(G_ML, D_ML) and pit a trained MLP discriminator against it.

    The closed-form value comes from the (MC-estimated) ML output masses;
    both discriminators are then scored on one paired evaluation set so
    the trained model's f can be compared against the optimum within
    Monte-Carlo error.
    """
    n_words = code.codewords.shape[0]
    u = np.full(n_words, 1.0 / n_words)
    pg = enumerate_pg_ml(code, qc, method="mc", mc_samples=mc_samples,
                         seed=seed)
    with np.errstate(divide="ignore", invalid="ignore"):
        d_ml = np.where(u + pg.mass > 0, u / (u + pg.mass), 0.5)
    f_closed = _f_from_masses(u, pg.mass, d_ml)

    # paired evaluation set: uniform codewords and fresh ML outputs
    eval_idx = np.arange(eval_samples, dtype=np.uint64)
    streams = FrameStreams(seed ^ 0xE7A1, eval_idx)
    x_idx = _uniform_codeword_indices(streams, code)
    _, eval_llrs = quantized_frame_llrs(code, qc, seed ^ 0x9D2B, eval_idx)
    y_idx = ml_decode_index(code, eval_llrs)

    f_ml_est = _empirical_f(
        np.log(np.maximum(d_ml, _LOG_EPS))[x_idx],
        np.log(np.maximum(1.0 - d_ml, _LOG_EPS))[y_idx],
    )

    disc = _train_discriminator_against_ml(
        code, qc, disc_hidden, disc_steps, batch_size, seed
    )
    x_words = code.codewords[x_idx].astype(np.float64)
    y_words = code.codewords[y_idx].astype(np.float64)
    tape = Tape()
    d_real = disc_forward(disc, x_words, tape).value.ravel()
    d_fake = disc_forward(disc, y_words, tape).value.ravel()
    f_mlp_est = _empirical_f(
        np.log(np.maximum(d_real, _LOG_EPS)),
        np.log(np.maximum(1.0 - d_fake, _LOG_EPS)),
    )
    return EquilibriumReport(
        target=2.0 * math.log(0.5),
        f_closed=f_closed,
        f_closed_estimate=f_ml_est,
        f_trained=f_mlp_est,
        d_ml_values=d_ml,
        p_g=pg,
    )


def _empirical_f(log_d_real: np.ndarray, log_one_minus_d_fake: np.ndarray) -> GameValueEstimate:
    n = log_d_real.size
    f = float(log_d_real.mean() + log_one_minus_d_fake.mean())
    se = math.sqrt(log_d_real.var(ddof=1) / n
                   + log_one_minus_d_fake.var(ddof=1) / n)
    return GameValueEstimate(f_value=f, n_samples=n, std_error=se)


def _uniform_codeword_indices(streams: FrameStreams, code: LinearCode) -> np.ndarray:
    bits = streams.bits(code.k).astype(np.int64)
    return (bits << np.arange(code.k)[None, :]).sum(axis=1)


def _train_discriminator_against_ml(code: LinearCode, qc: QuantizedChannel,
                                    hidden: tuple[int, int], steps: int,
                                    batch_size: int, seed: int) -> Discriminator:
    disc = init_discriminator(code.n, hidden, Rng(seed ^ 0xD15C))
    adam = AdamState(lr=1e-3)
    cursor = 0
    for _ in range(steps):
        idx = np.arange(cursor, cursor + batch_size, dtype=np.uint64)
        cursor += batch_size
        streams = FrameStreams(seed ^ 0xC0DE, idx)
        real = code.codewords[_uniform_codeword_indices(streams, code)]
        _, llrs = quantized_frame_llrs(code, qc, seed ^ 0xFA4E, idx)
        fake = code.codewords[ml_decode_index(code, llrs)]
        tape = Tape()
        f_node = loss_f_gd(disc, real.astype(np.float64),
                           tape.const(fake.astype(np.float64)), tape,
                           param_prefix="disc/")
        grads = backward(tape, ad.neg(f_node))
        disc_grads = {
            k.removeprefix("disc/"): g
            for k, g in grads.items() if k.startswith("disc/")
        }
        disc.values = adam_step(adam, disc.values, disc_grads)
    return disc


def d_ml_closed_form_report(code: LinearCode, pg: PgMlResult) -> dict:
    """Closed-form D_ML keyed by codeword tuples (for small codes)."""
    n_words = code.codewords.shape[0]
    u = {tuple(w.tolist()): 1.0 / n_words for w in code.codewords}
    p = {
        tuple(w.tolist()): float(pg.mass[i])
        for i, w in enumerate(code.codewords)
    }
    return d_ml_closed_form(u, p)
