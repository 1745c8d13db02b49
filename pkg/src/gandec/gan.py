"""Adversarial decoder training.

A sigmoid MLP discriminator D is trained to separate uniformly drawn
codewords from decoder outputs, ascending

    f(G, D) = E_x[log D(x)] + E_y[log(1 - D(y))],

while the decoder descends a combination of supervised BCE (offline
only) and the adversarial term. Everything is driven by the portable
scalar stream, so a (seed, config, code) triple fixes the whole run.

Offline training samples fresh channel frames per step; online training
consumes label-free LLR batches from a caller-supplied source and
generates its own codeword batches, so transmitted labels are never
read.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Node, Tape, adam_step, backward
from .base import check_llr_frames
from .channel import ChannelConfig, Rng, llr as channel_llr, modulate
from .codes import LinearCode, encode
from .errors import InvalidParameters, LayoutMismatch
from .unfolded import UnfoldedBpDecoder, forward, supervised_loss

SATURATING = "saturating"
NON_SATURATING = "non-saturating"


@dataclass
class Discriminator:
    """Fully connected sigmoid classifier: n_in -> hidden -> hidden -> 1."""

    n_in: int
    hidden: tuple[int, int]
    values: dict[str, np.ndarray] = field(default_factory=dict)

    def n_parameters(self) -> int:
        return sum(v.size for v in self.values.values())

    def copy(self) -> "Discriminator":
        return Discriminator(self.n_in, self.hidden,
                             {k: v.copy() for k, v in self.values.items()})


def init_discriminator(n_in: int, hidden: tuple[int, int] = (1024, 1024),
                       rng: Rng | None = None) -> Discriminator:
    """Uniform Glorot weights drawn from the portable stream, zero biases."""
    rng = rng if rng is not None else Rng(0)
    dims = [n_in, hidden[0], hidden[1], 1]
    values: dict[str, np.ndarray] = {}
    for i in range(3):
        fan_in, fan_out = dims[i], dims[i + 1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = np.empty((fan_in, fan_out))
        flat = w.reshape(-1)
        for j in range(flat.size):
            flat[j] = (2.0 * rng.uniform() - 1.0) * bound
        values[f"W{i + 1}"] = w
        values[f"b{i + 1}"] = np.zeros(fan_out)
    return Discriminator(n_in=n_in, hidden=tuple(hidden), values=values)


def _bind_disc(tape: Tape, disc: Discriminator,
               param_prefix: str | None) -> dict[str, Node]:
    if param_prefix is None:
        return {k: tape.const(v) for k, v in disc.values.items()}
    return {k: tape.param(v, param_prefix + k) for k, v in disc.values.items()}


def _mlp_apply(p: dict[str, Node], x: Node) -> Node:
    h1 = ad.sigmoid(ad.matmul(x, p["W1"]) + p["b1"])
    h2 = ad.sigmoid(ad.matmul(h1, p["W2"]) + p["b2"])
    return ad.sigmoid(ad.matmul(h2, p["W3"]) + p["b3"])


def _as_word_node(tape: Tape, words) -> Node:
    if isinstance(words, Node):
        return words
    return tape.const(np.atleast_2d(np.asarray(words, dtype=np.float64)))


def disc_forward(disc: Discriminator, words, tape: Tape,
                 param_prefix: str | None = None) -> Node:
    """Probability column (B, 1) that each word is a real codeword."""
    return _mlp_apply(_bind_disc(tape, disc, param_prefix),
                      _as_word_node(tape, words))


def loss_f_gd(disc: Discriminator, codeword_batch, decoded_batch,
              tape: Tape, param_prefix: str | None = None) -> Node:
    """Empirical f(G, D): mean log D(real) + mean log(1 - D(decoded))."""
    p = _bind_disc(tape, disc, param_prefix)
    d_real = _mlp_apply(p, _as_word_node(tape, codeword_batch))
    d_fake = _mlp_apply(p, _as_word_node(tape, decoded_batch))
    return ad.mean_all(ad.log(d_real)) + ad.mean_all(ad.log(1.0 - d_fake))


def d_ml_closed_form(u: dict, p_g: dict) -> dict:
    """Optimal discriminator D(x) = U(x) / (U(x) + P_G(x)).

    Words carrying no mass under either distribution are unconstrained
    and reported as 0.5.
    """
    out = {}
    for word in set(u) | set(p_g):
        mu = u.get(word, 0.0)
        mg = p_g.get(word, 0.0)
        out[word] = 0.5 if mu + mg == 0 else mu / (mu + mg)
    return out


@dataclass(frozen=True)
class GanTrainConfig:
    lr: float = 1e-3
    batch_size: int = 64
    n_train_frames: int = 10_000
    snr_train_db: float | tuple[float, float] = 4.0  # scalar or uniform range
    lambda_sup: float = 1.0
    lambda_adv: float = 1.0
    d_steps_per_g_step: int = 1
    generator_loss: str = SATURATING
    seed: int = 0
    epochs: int = 1
    val_every: int = 0        # decoder steps between validation FER points
    val_frames: int = 2000

    def __post_init__(self):
        if self.generator_loss not in (SATURATING, NON_SATURATING):
            raise InvalidParameters(
                f"generator_loss must be {SATURATING!r} or {NON_SATURATING!r}"
            )
        if self.batch_size < 1 or self.n_train_frames < self.batch_size:
            raise InvalidParameters("need n_train_frames >= batch_size >= 1")
        if self.lambda_sup < 0 or self.lambda_adv < 0:
            raise InvalidParameters("loss weights must be non-negative")
        if isinstance(self.snr_train_db, tuple):
            if len(self.snr_train_db) != 2 or not (
                self.snr_train_db[0] <= self.snr_train_db[1]
            ):
                raise InvalidParameters("snr range must be (low, high)")

    def sample_snr(self, rng: Rng) -> float:
        if isinstance(self.snr_train_db, tuple):
            lo, hi = self.snr_train_db
            return lo + rng.uniform() * (hi - lo)
        return float(self.snr_train_db)

    @property
    def validation_snr(self) -> float:
        if isinstance(self.snr_train_db, tuple):
            return 0.5 * (self.snr_train_db[0] + self.snr_train_db[1])
        return float(self.snr_train_db)


@dataclass
class GameValueEstimate:
    f_value: float
    n_samples: int
    std_error: float


@dataclass
class TrainLogRow:
    step: int
    d_loss: float
    g_sup_loss: float
    g_adv_loss: float
    val_fer: float | None
    wall_ms: float


@dataclass
class TrainLog:
    rows: list[TrainLogRow] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["step,d_loss,g_sup_loss,g_adv_loss,val_fer,wall_ms"]
        for r in self.rows:
            val = "" if r.val_fer is None else repr(r.val_fer)
            lines.append(
                f"{r.step},{r.d_loss!r},{r.g_sup_loss!r},{r.g_adv_loss!r},"
                f"{val},{r.wall_ms:.3f}"
            )
        return "\n".join(lines) + "\n"


def _sample_codewords(code: LinearCode, count: int, rng: Rng) -> np.ndarray:
    msgs = np.array(
        [[rng.bit() for _ in range(code.k)] for _ in range(count)],
        dtype=np.uint8,
    )
    return encode(code, msgs)


def _sample_channel_batch(code: LinearCode, cfg: GanTrainConfig,
                          rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """(codewords, llrs) for one fresh batch of channel frames.

    A scalar snr_train_db applies to the whole batch; a (low, high)
    range draws one SNR per frame uniformly.
    """
    chan = ChannelConfig(snr_db=cfg.sample_snr(rng), rate=code.rate)
    codewords = _sample_codewords(code, cfg.batch_size, rng)
    llrs = np.empty(codewords.shape)
    for i in range(codewords.shape[0]):
        if isinstance(cfg.snr_train_db, tuple) and i > 0:
            chan = ChannelConfig(snr_db=cfg.sample_snr(rng), rate=code.rate)
        z = np.array([rng.gaussian() for _ in range(code.n)])
        y = chan.gain * modulate(codewords[i]) + chan.sigma * z
        llrs[i] = channel_llr(y, chan)
    return codewords, llrs


def train_step_discriminator(disc: Discriminator, decoder: UnfoldedBpDecoder,
                             code: LinearCode, cfg: GanTrainConfig, rng: Rng,
                             adam: AdamState | None = None) -> float:
    """One ascent step of f on the discriminator parameters only.

    Returns the discriminator loss -f for the sampled batches.
    """
    adam = adam if adam is not None else AdamState(lr=cfg.lr)
    real = _sample_codewords(code, cfg.batch_size, rng)
    _, llrs = _sample_channel_batch(code, cfg, rng)
    tape = Tape()
    decoded = forward(decoder.ensure_weights(), code, llrs, tape)
    f_node = loss_f_gd(disc, real, decoded.soft, tape, param_prefix="disc/")
    loss = ad.neg(f_node)
    grads = backward(tape, loss)
    disc_grads = {
        k.removeprefix("disc/"): g
        for k, g in grads.items() if k.startswith("disc/")
    }
    disc.values = adam_step(adam, disc.values, disc_grads)
    return float(loss.value)


def train_step_decoder(decoder: UnfoldedBpDecoder, disc: Discriminator,
                       code: LinearCode, cfg: GanTrainConfig, rng: Rng,
                       adam: AdamState | None = None,
                       llr_batch: np.ndarray | None = None) -> tuple[float, float]:
    """One descent step on the decoder weights with D frozen.

    With ``llr_batch`` given (online mode), the supervised term must be
    disabled because no transmitted codewords exist for those frames.
    Returns (supervised_loss, adversarial_loss) values.
    """
    adam = adam if adam is not None else AdamState(lr=cfg.lr)
    if llr_batch is None:
        codewords, llrs = _sample_channel_batch(code, cfg, rng)
    else:
        if cfg.lambda_sup != 0:
            raise InvalidParameters("label-free batches require lambda_sup = 0")
        codewords, llrs = None, check_llr_frames(llr_batch, code.n)
    tape = Tape()
    decoded = forward(decoder.ensure_weights(), code, llrs, tape,
                      param_prefix="dec/")
    sup_value = 0.0
    total = None
    if cfg.lambda_sup > 0:
        sup = supervised_loss(decoded, codewords, tape)
        sup_value = float(sup.value)
        total = sup * cfg.lambda_sup
    if cfg.lambda_adv > 0:
        d_fake = disc_forward(disc, decoded.soft, tape)
        if cfg.generator_loss == SATURATING:
            adv = ad.mean_all(ad.log(1.0 - d_fake))
        else:
            adv = ad.neg(ad.mean_all(ad.log(d_fake)))
        adv_value = float(adv.value)
        total = adv * cfg.lambda_adv if total is None else total + adv * cfg.lambda_adv
    else:
        adv_value = 0.0
    if total is None:
        return 0.0, 0.0
    grads = backward(tape, total)
    dec_grads = {
        k.removeprefix("dec/"): g
        for k, g in grads.items() if k.startswith("dec/")
    }
    weights = decoder.ensure_weights()
    weights.values = adam_step(adam, weights.values, dec_grads)
    return sup_value, adv_value


def _validate_fer(decoder: UnfoldedBpDecoder, code: LinearCode,
                  cfg: GanTrainConfig) -> float:
    from .evaluation import estimate_fer

    record = estimate_fer(decoder, code, cfg.validation_snr,
                          cfg.val_frames, seed=cfg.seed ^ 0xFEA5)
    return record.fer


def train_offline(decoder: UnfoldedBpDecoder, disc: Discriminator,
                  code: LinearCode, cfg: GanTrainConfig,
                  rng: Rng | None = None) -> TrainLog:
    """Alternating adversarial training on freshly sampled channel frames.

    Runs epochs * (n_train_frames // batch_size) decoder steps, each
    preceded by d_steps_per_g_step discriminator steps (skipped entirely
    when lambda_adv is zero, which reduces to supervised training).
    """
    rng = rng if rng is not None else Rng(cfg.seed)
    d_adam = AdamState(lr=cfg.lr)
    g_adam = AdamState(lr=cfg.lr)
    log = TrainLog()
    steps = cfg.epochs * (cfg.n_train_frames // cfg.batch_size)
    start = time.perf_counter()
    for step in range(steps):
        d_loss = 0.0
        if cfg.lambda_adv > 0:
            for _ in range(cfg.d_steps_per_g_step):
                d_loss = train_step_discriminator(disc, decoder, code, cfg,
                                                  rng, d_adam)
        sup, adv = train_step_decoder(decoder, disc, code, cfg, rng, g_adam)
        val = None
        if cfg.val_every > 0 and (step + 1) % cfg.val_every == 0:
            val = _validate_fer(decoder, code, cfg)
        log.rows.append(TrainLogRow(
            step=step, d_loss=d_loss, g_sup_loss=sup, g_adv_loss=adv,
            val_fer=val, wall_ms=(time.perf_counter() - start) * 1e3,
        ))
    return log


def train_online(decoder: UnfoldedBpDecoder, disc: Discriminator,
                 code: LinearCode, cfg: GanTrainConfig, frame_source,
                 rng: Rng | None = None) -> TrainLog:
    """Label-free adaptation: one adversarial round per LLR batch.

    ``frame_source`` yields (batch, n) LLR arrays; transmitted codewords
    are never seen. The supervised weight is forced to zero.
    """
    cfg = replace(cfg, lambda_sup=0.0)
    rng = rng if rng is not None else Rng(cfg.seed)
    d_adam = AdamState(lr=cfg.lr)
    g_adam = AdamState(lr=cfg.lr)
    log = TrainLog()
    start = time.perf_counter()
    for step, batch in enumerate(frame_source):
        frames = check_llr_frames(batch, code.n)
        d_loss = 0.0
        if cfg.lambda_adv > 0:
            for _ in range(cfg.d_steps_per_g_step):
                d_loss = _online_disc_step(disc, decoder, code, cfg, rng,
                                           d_adam, frames)
        sup, adv = train_step_decoder(decoder, disc, code, cfg, rng, g_adam,
                                      llr_batch=frames)
        val = None
        if cfg.val_every > 0 and (step + 1) % cfg.val_every == 0:
            val = _validate_fer(decoder, code, cfg)
        log.rows.append(TrainLogRow(
            step=step, d_loss=d_loss, g_sup_loss=sup, g_adv_loss=adv,
            val_fer=val, wall_ms=(time.perf_counter() - start) * 1e3,
        ))
    return log


def _online_disc_step(disc, decoder, code, cfg, rng, adam,
                      frames: np.ndarray) -> float:
    real = _sample_codewords(code, min(cfg.batch_size, frames.shape[0]), rng)
    tape = Tape()
    decoded = forward(decoder.ensure_weights(), code, frames, tape)
    loss = ad.neg(loss_f_gd(disc, real, decoded.soft, tape,
                            param_prefix="disc/"))
    grads = backward(tape, loss)
    disc_grads = {
        k.removeprefix("disc/"): g
        for k, g in grads.items() if k.startswith("disc/")
    }
    disc.values = adam_step(adam, disc.values, disc_grads)
    return float(loss.value)


# ---------------------------------------------------------------------------
# checkpoints: a GDEC weight section, optionally followed by a GDSC
# discriminator section

_DISC_MAGIC = b"GDSC"
_DISC_VERSION = 1


def save_checkpoint(path, weights, disc: "Discriminator | None" = None) -> None:
    from pathlib import Path

    from .unfolded import serialize_weights

    blob = serialize_weights(weights)
    if disc is not None:
        blob += serialize_discriminator(disc)
    Path(path).write_bytes(blob)


def load_checkpoint(path, code: LinearCode):
    """(weights, discriminator-or-None) from a checkpoint file."""
    from pathlib import Path

    from .unfolded import read_weights_section

    blob = Path(path).read_bytes()
    weights, off = read_weights_section(blob, code)
    disc = None
    if off < len(blob):
        disc, off = read_discriminator_section(blob, off)
    if off != len(blob):
        raise LayoutMismatch(f"{len(blob) - off} trailing bytes in checkpoint")
    return weights, disc


def serialize_discriminator(disc: Discriminator) -> bytes:
    head = struct.pack("<4sIIII", _DISC_MAGIC, _DISC_VERSION,
                       disc.n_in, disc.hidden[0], disc.hidden[1])
    chunks = [head]
    for key in sorted(disc.values):
        arr = np.ascontiguousarray(disc.values[key], dtype="<f8")
        chunks.append(struct.pack("<I", arr.size))
        chunks.append(arr.tobytes())
    return b"".join(chunks)


def read_discriminator_section(blob: bytes,
                               offset: int = 0) -> tuple[Discriminator, int]:
    """Parse one GDSC section starting at ``offset``; returns (disc, end)."""
    try:
        magic, version, n_in, h1, h2 = struct.unpack_from("<4sIIII", blob, offset)
    except struct.error as exc:
        raise LayoutMismatch(f"corrupt discriminator blob: {exc}") from None
    if magic != _DISC_MAGIC:
        raise LayoutMismatch(f"bad magic {magic!r}")
    if version != _DISC_VERSION:
        raise LayoutMismatch(f"unsupported version {version}")
    ref = init_discriminator(n_in, (h1, h2), Rng(0))
    off = offset + 20
    values = {}
    for key in sorted(ref.values):
        expected = ref.values[key].size
        if off + 4 > len(blob):
            raise LayoutMismatch("discriminator blob truncated")
        (size,) = struct.unpack_from("<I", blob, off)
        off += 4
        if size != expected:
            raise LayoutMismatch(f"{key}: expected {expected} values, found {size}")
        if off + 8 * size > len(blob):
            raise LayoutMismatch("discriminator blob truncated")
        values[key] = np.frombuffer(blob, dtype="<f8", count=size,
                                    offset=off).copy().reshape(ref.values[key].shape)
        off += 8 * size
    return Discriminator(n_in=n_in, hidden=(h1, h2), values=values), off


def deserialize_discriminator(blob: bytes) -> Discriminator:
    disc, off = read_discriminator_section(blob)
    if off != len(blob):
        raise LayoutMismatch(f"{len(blob) - off} trailing bytes")
    return disc
