"""End-to-end transmission chains used by Monte-Carlo sweeps.

A :class:`Link` draws information bits, encodes, maps and adds noise; a
decoder turns the per-step observations back into bits. ``link.simulator``
bundles both into the ``simulate(snr_db, n_bits, rng)`` callable expected by
:func:`seqdec.metrics.monte_carlo_ber`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import decoder as dm
from . import modem
from .conv_code import CodeSpec, build_trellis, encode
from .training import observations
from .viterbi import decode_windowed

Decoder = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class Link:
    code: CodeSpec | None = None
    modulation: str = "bpsk"
    labeling: str = "gray"
    interleave: bool = False
    interleaver_seed: int = 0
    block_len: int = 4096
    row_bits: int = 2048

    def __post_init__(self):
        if self.modulation not in ("bpsk", "qpsk"):
            raise ValueError(f"unknown modulation {self.modulation!r}")
        if self.code is None and (self.modulation != "bpsk" or self.interleave):
            raise ValueError("the uncoded reference is plain BPSK")
        if self.interleave and (2 * self.row_bits) % self.block_len:
            raise ValueError("2 * row_bits must be a multiple of the interleaver block length")

    @property
    def rate(self) -> float:
        return 1.0 if self.code is None else 0.5

    @property
    def bits_per_symbol(self) -> int:
        return 2 if self.modulation == "qpsk" else 1

    def sigma2(self, ebno_db: float) -> float:
        return float(modem.ebno_to_sigma2(ebno_db, self.rate, self.bits_per_symbol))

    def transmit(self, ebno_db: float, n_bits: int, rng: np.random.Generator):
        """Returns ``(u, y, sigma2)``; ``y`` has shape (rows, steps, 2)."""
        rows = max(1, -(-n_bits // self.row_bits))
        u = rng.integers(0, 2, size=(rows, self.row_bits), dtype=np.uint8)
        sigma2 = self.sigma2(ebno_db)
        if self.code is None:
            s = modem.map_bpsk(u)
            return u, modem.add_awgn(s, sigma2, rng, "bpsk"), sigma2
        x = encode(u, self.code)
        if self.interleave:
            x = modem.interleave(x, self.interleaver_seed, self.block_len)
        obs = observations(x, self.modulation, modem.get_labeling(self.labeling))
        if sigma2 > 0:
            obs = obs + np.sqrt(sigma2) * rng.standard_normal(obs.shape)
        return u, obs, sigma2

    def llrs(self, y: np.ndarray, sigma2: float) -> np.ndarray:
        """Coded-bit LLRs in encoder order, shape (rows, 2 * steps)."""
        if self.modulation == "bpsk":
            # both observations of a step are I samples of consecutive coded bits
            L = modem.llr_bpsk(y.reshape(y.shape[0], -1)[..., None], sigma2)
        else:
            L = modem.llr_qpsk_maxlog(y, sigma2, modem.get_labeling(self.labeling))
        if self.interleave:
            L = modem.deinterleave(L, self.interleaver_seed, self.block_len)
        return L

    def simulator(self, decoder: Decoder):
        def simulate(ebno_db: float, n_bits: int, rng: np.random.Generator):
            u, y, sigma2 = self.transmit(ebno_db, n_bits, rng)
            return u, decoder(y, sigma2)
        return simulate


def uncoded_decoder(y: np.ndarray, sigma2: float) -> np.ndarray:
    return (y[..., 0] > 0).astype(np.uint8)


def viterbi_decoder(link: Link, traceback_len: int | None = None) -> Decoder:
    trellis = build_trellis(link.code)
    tb = traceback_len or link.code.traceback_hint

    def decode(y, sigma2):
        return decode_windowed(link.llrs(y, sigma2), trellis, tb)
    return decode


def nn_decoder(params, cfg: dm.DecoderConfig, batch_size: int = 1024) -> Decoder:
    def decode(y, sigma2):
        return dm.predict_stream(y, params, cfg, batch_size=batch_size)
    return decode
