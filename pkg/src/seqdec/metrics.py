"""BER, per-position BER, NVE and Monte-Carlo BER sweeps with error-count stopping."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

BER_HEADER = "# seqdec-bertable-v1"
BER_COLUMNS = ("snr_db", "ber", "errors", "bits", "censored")


def ber(u_hat, u) -> float:
    u_hat, u = np.asarray(u_hat), np.asarray(u)
    if u_hat.shape != u.shape:
        raise ValueError(f"length mismatch: {u_hat.shape} vs {u.shape}")
    if u.size == 0:
        raise ValueError("empty bit streams")
    return float(np.mean(u_hat != u))


def ber_per_position(u_hat, u) -> np.ndarray:
    """BER of each window position over a batch of shape (N, loss_depth)."""
    u_hat, u = np.asarray(u_hat), np.asarray(u)
    if u_hat.shape != u.shape or u.ndim != 2:
        raise ValueError(f"expected two equal (N, L) arrays, got {u_hat.shape} and {u.shape}")
    return np.mean(u_hat != u, axis=0)


@dataclass
class BerTable:
    snr_db: list[float]
    errors: list[int]
    bits: list[int]
    censored: list[bool] = field(default_factory=list)

    def __post_init__(self):
        if not self.censored:
            self.censored = [False] * len(self.snr_db)
        if not len(self.snr_db) == len(self.errors) == len(self.bits) == len(self.censored):
            raise ValueError("BerTable columns must have equal length")

    @property
    def ber(self) -> np.ndarray:
        bits = np.asarray(self.bits, dtype=float)
        return np.divide(np.asarray(self.errors, dtype=float), bits,
                         out=np.full(len(bits), np.nan), where=bits > 0)

    def std_error(self) -> np.ndarray:
        """Binomial standard error of each estimate."""
        p = self.ber
        return np.sqrt(p * (1 - p) / np.asarray(self.bits, dtype=float))

    def rows(self):
        for i, snr in enumerate(self.snr_db):
            yield snr, float(self.ber[i]), self.errors[i], self.bits[i], self.censored[i]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(BER_HEADER + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(BER_COLUMNS)
            for snr, b, e, n, c in self.rows():
                w.writerow([f"{snr:.6g}", f"{b:.8g}", e, n, int(c)])

    @classmethod
    def from_csv(cls, path) -> "BerTable":
        with open(path, newline="") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        reader = csv.DictReader(lines)
        if reader.fieldnames is None or tuple(reader.fieldnames) != BER_COLUMNS:
            raise ValueError(f"{path}: expected columns {BER_COLUMNS}, got {reader.fieldnames}")
        snr, err, bits, cens = [], [], [], []
        for row in reader:
            snr.append(float(row["snr_db"]))
            err.append(int(row["errors"]))
            bits.append(int(row["bits"]))
            cens.append(bool(int(row["censored"])))
        return cls(snr, err, bits, cens)


@dataclass
class NveReport:
    nve: float
    num_points: int
    ratios: list[float]
    snr_db: list[float]
    excluded: list[float] = field(default_factory=list)


def nve(nn_table: BerTable, ref_table: BerTable, atol_db: float = 1e-9) -> NveReport:
    """Mean over SNR points of BER_nn / BER_ref.

    Points where the reference counted no errors are excluded with a warning.
    """
    if len(nn_table.snr_db) != len(ref_table.snr_db) or not np.allclose(
            nn_table.snr_db, ref_table.snr_db, atol=atol_db, rtol=0):
        raise ValueError(f"SNR grids differ: {nn_table.snr_db} vs {ref_table.snr_db}")
    ratios, snrs, excluded = [], [], []
    for snr, b_nn, b_ref in zip(nn_table.snr_db, nn_table.ber, ref_table.ber):
        if not b_ref > 0:
            log.warning("reference BER is zero at %.3g dB; point excluded from NVE", snr)
            excluded.append(snr)
            continue
        ratios.append(float(b_nn / b_ref))
        snrs.append(snr)
    if not ratios:
        raise ValueError("no SNR point with a nonzero reference BER")
    return NveReport(float(np.mean(ratios)), len(ratios), ratios, snrs, excluded)


def snr_grid(lo: float = 0.0, hi: float = 3.5, num: int = 8) -> list[float]:
    return [float(v) for v in np.linspace(lo, hi, num)]


class SimulationError(RuntimeError):
    pass


ChunkFn = Callable[[float, int, np.random.Generator], tuple]


def monte_carlo_ber(simulate: ChunkFn, snr_db: Sequence[float], seed: int = 0,
                    min_errors: int = 100, max_bits: int = 10_000_000,
                    first_chunk: int = 10_000, max_chunk: int = 200_000) -> BerTable:
    """Estimate BER per SNR point until ``min_errors`` errors or ``max_bits`` bits.

    ``simulate(snr_db, n_bits, rng)`` runs transmit, channel and decoder on
    about ``n_bits`` information bits and returns ``(u, u_hat)``. Each point uses
    its own generator seeded by ``(seed, point index)`` and the chunk sizes
    (doubling from ``first_chunk``) do not depend on the outcome, so two
    decoders simulated with the same seed see the same channel realisations.
    Points stopped by the bit cap are marked censored.
    """
    errors, bits, censored = [], [], []
    for idx, snr in enumerate(snr_db):
        rng = np.random.default_rng([seed, idx])
        e = n = 0
        chunk = first_chunk
        while e < min_errors and n < max_bits:
            want = min(chunk, max_bits - n)
            try:
                u, u_hat = simulate(float(snr), want, rng)
            except Exception as exc:
                raise SimulationError(f"decoder failed at {snr} dB: {exc}") from exc
            e += int(np.sum(np.asarray(u_hat) != np.asarray(u)))
            n += int(np.asarray(u).size)
            chunk = min(2 * chunk, max_chunk)
        errors.append(e)
        bits.append(n)
        censored.append(e < min_errors)
        log.info("%.3g dB: %d errors / %d bits%s", snr, e, n, " (censored)" if e < min_errors else "")
    return BerTable(list(map(float, snr_db)), errors, bits, censored)


def q_function(x) -> np.ndarray:
    return 0.5 * np.vectorize(math.erfc)(np.asarray(x, dtype=float) / math.sqrt(2))


def uncoded_bpsk_ber(ebno_db) -> np.ndarray:
    return q_function(np.sqrt(2 * 10 ** (np.asarray(ebno_db, dtype=float) / 10)))


def merge_tables(tables: dict[str, BerTable], path) -> None:
    """Write several tables on a shared SNR grid side by side."""
    names = list(tables)
    grid = tables[names[0]].snr_db
    with open(path, "w", newline="") as fh:
        fh.write("# seqdec-merged-v1\n")
        w = csv.writer(fh, lineterminator="\n")
        header = ["snr_db"]
        for n in names:
            header += [f"{n}_ber", f"{n}_errors", f"{n}_bits"]
        w.writerow(header)
        for i, snr in enumerate(grid):
            row = [f"{snr:.6g}"]
            for n in names:
                t = tables[n]
                row += [f"{t.ber[i]:.8g}", t.errors[i], t.bits[i]]
            w.writerow(row)
