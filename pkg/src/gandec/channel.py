"""BPSK over AWGN with reproducible noise.

The random stream is xoshiro256++ seeded through splitmix64, implemented
twice: a scalar reference (`Rng`) and a batched numpy version that steps
one independent stream per frame (`FrameStreams`). The batched version is
bit-identical to running `Rng(frame_seed(seed, i))` frame by frame, which
is what makes Monte-Carlo results independent of worker layout.

Bits map to symbols as 0 -> +1, 1 -> -1, and LLRs follow the
log P(bit=1|y) / P(bit=0|y) orientation, so l = -2 g y / sigma^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameters

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_U64 = np.uint64


def _splitmix64_mix(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


def splitmix64_at(seed: int, index: int) -> int:
    """The index-th output of the splitmix64 stream started at ``seed``."""
    return _splitmix64_mix((seed + (index + 1) * _GOLDEN) & _MASK64)


def frame_seed(seed: int, frame_index: int) -> int:
    """Derive the per-frame stream seed used by all Monte-Carlo loops."""
    return splitmix64_at(seed & _MASK64, frame_index)


class Rng:
    """Scalar xoshiro256++ generator; the portable reference stream."""

    def __init__(self, seed: int):
        seed &= _MASK64
        self._s = [splitmix64_at(seed, i) for i in range(4)]
        self._cached_gaussian: float | None = None

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        x = (s0 + s3) & _MASK64
        result = ((x << 23 | x >> 41) & _MASK64) + s0 & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = (s3 << 45 | s3 >> 19) & _MASK64
        self._s = [s0, s1, s2, s3]
        return result

    def bit(self) -> int:
        return self.next_u64() >> 63

    def uniform(self) -> float:
        """Uniform in (0, 1]; never 0 so it is safe under log."""
        return ((self.next_u64() >> 11) + 1) * 2.0**-53

    def gaussian(self) -> float:
        """Standard normal via Box-Muller; the pair's second draw is cached."""
        if self._cached_gaussian is not None:
            z = self._cached_gaussian
            self._cached_gaussian = None
            return z
        u1 = self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._cached_gaussian = r * math.sin(theta)
        return r * math.cos(theta)


def gaussian(rng: Rng) -> float:
    return rng.gaussian()


class FrameStreams:
    """Many per-frame xoshiro256++ streams stepped in lockstep with numpy."""

    def __init__(self, seed: int, frame_indices: np.ndarray):
        idx = np.asarray(frame_indices, dtype=np.uint64)
        per_frame_seed = self._mix(
            _U64(seed & _MASK64) + (idx + _U64(1)) * _U64(_GOLDEN)
        )
        self._s = [
            self._mix(per_frame_seed + _U64((i + 1) * _GOLDEN & _MASK64))
            for i in range(4)
        ]

    @staticmethod
    def _mix(z: np.ndarray) -> np.ndarray:
        z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
        return z ^ (z >> _U64(31))

    def next_u64(self) -> np.ndarray:
        s0, s1, s2, s3 = self._s
        x = s0 + s3
        result = ((x << _U64(23)) | (x >> _U64(41))) + s0
        t = s1 << _U64(17)
        s2 = s2 ^ s0
        s3 = s3 ^ s1
        s1 = s1 ^ s2
        s0 = s0 ^ s3
        s2 = s2 ^ t
        s3 = (s3 << _U64(45)) | (s3 >> _U64(19))
        self._s = [s0, s1, s2, s3]
        return result

    def bits(self, count: int) -> np.ndarray:
        """(F, count) uint8 matrix of fair bits."""
        return np.stack(
            [(self.next_u64() >> _U64(63)).astype(np.uint8) for _ in range(count)],
            axis=1,
        )

    def uniforms(self, count: int) -> np.ndarray:
        cols = [((self.next_u64() >> _U64(11)) + _U64(1)).astype(np.float64)
                * 2.0**-53 for _ in range(count)]
        return np.stack(cols, axis=1)

    def gaussians(self, count: int) -> np.ndarray:
        """(F, count) standard normals, Box-Muller pairs in draw order."""
        pairs = (count + 1) // 2
        out = np.empty((self._s[0].size, 2 * pairs))
        for p in range(pairs):
            u1 = ((self.next_u64() >> _U64(11)) + _U64(1)).astype(np.float64) * 2.0**-53
            u2 = ((self.next_u64() >> _U64(11)) + _U64(1)).astype(np.float64) * 2.0**-53
            r = np.sqrt(-2.0 * np.log(u1))
            theta = 2.0 * np.pi * u2
            out[:, 2 * p] = r * np.cos(theta)
            out[:, 2 * p + 1] = r * np.sin(theta)
        return out[:, :count]


@dataclass(frozen=True)
class ChannelConfig:
    """AWGN channel at a given Eb/N0 for a rate-k/n code.

    sigma^2 = 1 / (2 * rate * 10^(snr_db/10)) with unit-energy symbols.
    """

    snr_db: float
    rate: float
    gain: float = 1.0
    sigma: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.rate <= 1.0:
            raise InvalidParameters(f"rate {self.rate} outside (0, 1]")
        sigma = math.sqrt(1.0 / (2.0 * self.rate * 10.0 ** (self.snr_db / 10.0)))
        if not sigma > 0.0:
            raise InvalidParameters("derived sigma must be positive")
        object.__setattr__(self, "sigma", sigma)

    @property
    def sigma2(self) -> float:
        return self.sigma * self.sigma


def modulate(bits) -> np.ndarray:
    """BPSK map: bit 0 -> +1.0, bit 1 -> -1.0."""
    b = np.asarray(bits)
    return 1.0 - 2.0 * b.astype(np.float64)


def transmit(symbols, cfg: ChannelConfig, rng: Rng) -> np.ndarray:
    """y = g x + z with z ~ N(0, sigma^2) drawn from ``rng`` in order."""
    x = np.asarray(symbols, dtype=np.float64)
    z = np.array([rng.gaussian() for _ in range(x.size)]).reshape(x.shape)
    return cfg.gain * x + cfg.sigma * z


def llr(received, cfg: ChannelConfig) -> np.ndarray:
    """Channel LLR log P(bit=1|y)/P(bit=0|y) = -2 g y / sigma^2."""
    y = np.asarray(received, dtype=np.float64)
    return -2.0 * cfg.gain * y / cfg.sigma2


def frame_llrs(code_k: int, code_n: int, cfg: ChannelConfig, seed: int,
               frame_indices: np.ndarray, generator: np.ndarray):
    """Messages, codewords and channel LLRs for the given frame indices.

    Each frame i consumes its own stream seeded by frame_seed(seed, i):
    first k bits for the message, then n Box-Muller gaussians, so results
    do not depend on how frames are batched across workers.

    Returns (messages (F,k), codewords (F,n), llrs (F,n)).
    """
    idx = np.asarray(frame_indices, dtype=np.uint64)
    streams = FrameStreams(seed, idx)
    messages = streams.bits(code_k)
    z = streams.gaussians(code_n)
    codewords = (messages.astype(np.int64) @ generator.astype(np.int64)) % 2
    codewords = codewords.astype(np.uint8)
    y = cfg.gain * modulate(codewords) + cfg.sigma * z
    return messages, codewords, llr(y, cfg)
