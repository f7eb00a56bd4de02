"""BPSK/QPSK mapping, AWGN channel, soft demapping and a block interleaver.

Symbols are stored as real arrays with a trailing (I, Q) axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

LLR_CLIP = 1e6
SQRT_HALF = np.sqrt(0.5)


@dataclass(frozen=True)
class Labeling:
    kind: str
    table: dict  # (b1, b2) -> (I, Q), unit energy

    def points(self) -> np.ndarray:
        """Constellation indexed by the integer label ``2*b1 + b2``, shape (4, 2)."""
        return np.array([self.table[(i >> 1, i & 1)] for i in range(4)])


def _labeling(kind: str, order: list[tuple[int, int]]) -> Labeling:
    # angular order (++), (-+), (--), (+-)
    corners = [(1, 1), (-1, 1), (-1, -1), (1, -1)]
    table = {bits: (SQRT_HALF * i, SQRT_HALF * q) for bits, (i, q) in zip(order, corners)}
    return Labeling(kind, table)


GRAY = _labeling("gray", [(0, 0), (0, 1), (1, 1), (1, 0)])
ANTI_GRAY = _labeling("anti_gray", [(0, 0), (1, 1), (0, 1), (1, 0)])


def get_labeling(name: str) -> Labeling:
    key = name.replace("-", "_").lower()
    if key == "gray":
        return GRAY
    if key == "anti_gray":
        return ANTI_GRAY
    raise ValueError(f"unknown labeling {name!r}; expected 'gray' or 'anti-gray'")


def ebno_to_sigma2(ebno_db, rate: float = 0.5, bits_per_symbol: int = 1):
    """Per-real-dimension noise variance for unit symbol energy."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    return 1.0 / (2.0 * rate * bits_per_symbol * 10.0 ** (np.asarray(ebno_db, dtype=float) / 10.0))


def map_bpsk(x) -> np.ndarray:
    """Bit 0 -> -1, bit 1 -> +1 on the I axis."""
    x = np.asarray(x)
    s = np.zeros(x.shape + (2,))
    s[..., 0] = 2.0 * x - 1.0
    return s


def map_qpsk(x, labeling: Labeling = GRAY) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    if x.shape[-1] % 2:
        raise ValueError("QPSK mapping needs an even number of bits")
    pairs = x.reshape(x.shape[:-1] + (-1, 2))
    return labeling.points()[2 * pairs[..., 0] + pairs[..., 1]]


def add_awgn(s, sigma2: float, rng: np.random.Generator, modulation: str = "bpsk") -> np.ndarray:
    """Add N(0, sigma2) noise to I (BPSK) or to both I and Q (QPSK)."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    s = np.asarray(s, dtype=float)
    y = s.copy()
    if sigma2 == 0:
        return y
    std = np.sqrt(sigma2)
    if modulation == "bpsk":
        y[..., 0] += std * rng.standard_normal(s.shape[:-1])
    else:
        y += std * rng.standard_normal(s.shape)
    return y


def llr_bpsk(y, sigma2: float) -> np.ndarray:
    """L = 2 I / sigma2; positive favours bit 1."""
    i = np.asarray(y, dtype=float)[..., 0]
    if sigma2 <= 0:
        return np.clip(np.sign(i) * LLR_CLIP, -LLR_CLIP, LLR_CLIP)
    return np.clip(2.0 * i / sigma2, -LLR_CLIP, LLR_CLIP)


def llr_qpsk_maxlog(y, sigma2: float, labeling: Labeling = GRAY) -> np.ndarray:
    """Max-log bit LLRs, two per symbol, positive favours bit 1.

    ``(min |y-s|^2 over bit=0  -  min |y-s|^2 over bit=1) / (2 sigma2)``, the
    same normalisation as :func:`llr_bpsk`.
    """
    y = np.asarray(y, dtype=float)
    pts = labeling.points()
    d2 = np.sum((y[..., None, :] - pts) ** 2, axis=-1)  # (..., 4)
    labels = np.arange(4)
    out = np.empty(y.shape[:-1] + (2,))
    for j, shift in enumerate((1, 0)):
        bit = (labels >> shift) & 1
        diff = d2[..., bit == 0].min(axis=-1) - d2[..., bit == 1].min(axis=-1)
        if sigma2 <= 0:
            out[..., j] = np.sign(diff) * LLR_CLIP
        else:
            out[..., j] = np.clip(diff / (2.0 * sigma2), -LLR_CLIP, LLR_CLIP)
    return out.reshape(y.shape[:-2] + (-1,))


def hard_demap_qpsk(y, labeling: Labeling = GRAY) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    d2 = np.sum((y[..., None, :] - labeling.points()) ** 2, axis=-1)
    idx = np.argmin(d2, axis=-1)
    bits = np.stack([(idx >> 1) & 1, idx & 1], axis=-1)
    return bits.reshape(y.shape[:-2] + (-1,)).astype(np.uint8)


@lru_cache(maxsize=256)
def _block_permutation(seed: int, block_index: int, block_len: int) -> np.ndarray:
    # counter-based stream: one independent generator per (seed, block)
    rng = np.random.Generator(np.random.Philox(key=seed, counter=[block_index, 0, 0, 0]))
    draws = rng.random(block_len)
    perm = list(range(block_len))
    for i in range(block_len - 1, 0, -1):  # Fisher-Yates
        j = int(draws[i] * (i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    out = np.array(perm, dtype=np.int64)
    out.setflags(write=False)
    return out


def _permutations(n: int, seed: int, block_len: int) -> np.ndarray:
    if block_len < 1 or n % block_len:
        raise ValueError(f"length {n} is not a multiple of block_len {block_len}")
    return np.concatenate(
        [b * block_len + _block_permutation(seed, b, block_len) for b in range(n // block_len)]
    ) if n else np.arange(0)


def interleave(x, seed: int = 0, block_len: int = 4096) -> np.ndarray:
    x = np.asarray(x)
    return x[..., _permutations(x.shape[-1], seed, block_len)]


def deinterleave(x, seed: int = 0, block_len: int = 4096) -> np.ndarray:
    x = np.asarray(x)
    perm = _permutations(x.shape[-1], seed, block_len)
    out = np.empty_like(x)
    out[..., perm] = x
    return out
