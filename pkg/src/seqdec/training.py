"""Training data, a-priori ramp-up curricula and the training loop."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from . import decoder as dm
from . import modem
from . import tensor_nn as nn
from .checkpoint import save_checkpoint
from .conv_code import CodeSpec, encode

log = logging.getLogger(__name__)

SCHEDULES = ("none", "linear", "stepwise", "abrupt")
LOG_HEADER = "# seqdec-trainlog-v1"
LOG_COLUMNS = ("iteration", "p_ap", "loss", "batch_ber", "probe_ber", "wallclock_s")


# --- data --------------------------------------------------------------------

class Batch(NamedTuple):
    windows: np.ndarray  # (B, window_len, 2) channel observations
    labels: np.ndarray   # (B, loss_depth) information bits
    bits: np.ndarray     # (B, window_len) information bits of the window
    state: np.ndarray    # (B,) encoder state at the window start


def observations(x: np.ndarray, modulation: str = "bpsk", labeling=None) -> np.ndarray:
    """Noiseless per-step observations (..., n, 2) for coded bits x (..., 2n)."""
    if modulation == "bpsk":
        return modem.map_bpsk(x)[..., 0].reshape(x.shape[:-1] + (-1, 2))
    if modulation == "qpsk":
        return modem.map_qpsk(x, labeling or modem.GRAY)
    raise ValueError(f"unknown modulation {modulation!r}")


def add_noise(obs: np.ndarray, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    if sigma2 == 0:
        return obs.astype(float)
    return obs + np.sqrt(sigma2) * rng.standard_normal(obs.shape)


def gen_batch(p_ap: float, code: CodeSpec, cfg: dm.DecoderConfig, sigma2: float,
              rng: np.random.Generator, batch_size: int = 256, modulation: str = "bpsk",
              labeling=None) -> Batch:
    """Draw Bernoulli(p_ap) bits, encode, map, add noise and cut one window each.

    ``code.memory`` extra leading bits run the encoder into a random state
    before the window starts; their outputs are not part of the window.
    """
    if not 0 < p_ap <= 0.5:
        raise ValueError(f"p_ap must lie in (0, 0.5], got {p_ap}")
    m = code.memory
    T = cfg.window_len
    u = (rng.random((batch_size, m + T)) < p_ap).astype(np.uint8)
    x = encode(u, code)[:, 2 * m:]
    y = add_noise(observations(x, modulation, labeling), sigma2, rng)
    bits = u[:, m:]
    labels = bits[:, cfg.ramp_len:cfg.ramp_len + cfg.loss_depth]
    state = np.zeros(batch_size, dtype=np.int64)
    for i in range(m):  # most recent warm-up bit is state bit 0
        state |= u[:, m - 1 - i].astype(np.int64) << i
    return Batch(y, labels, bits, state)


# --- curriculum --------------------------------------------------------------

@dataclass(frozen=True)
class CurriculumState:
    schedule: str = "none"
    p_ap: float = 0.5
    p_start: float = 0.1
    step_delta: float = 0.05
    ramp_iterations: int = 10_000
    advance_factor: float = 0.8
    max_level_iters: int = 2000
    ber_decay: float = 0.99
    smoothed_ber: float = 0.5
    iterations_at_level: int = 0
    advances: int = 0

    @classmethod
    def start(cls, schedule: str = "none", p_start: float = 0.1, **kw) -> "CurriculumState":
        if schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {schedule!r}; expected one of {SCHEDULES}")
        if not 0 < p_start <= 0.5:
            raise ValueError("p_start must lie in (0, 0.5]")
        p = 0.5 if schedule == "none" else p_start
        return cls(schedule=schedule, p_ap=p, p_start=p_start, smoothed_ber=0.5, **kw)

    @property
    def criterion_met(self) -> bool:
        return (self.smoothed_ber < self.advance_factor * self.p_ap
                or self.iterations_at_level >= self.max_level_iters)


def curriculum_next(state: CurriculumState, latest_ber: float) -> CurriculumState:
    """Advance the a-priori probability after one training iteration.

    linear: fixed increment per iteration. stepwise: +step_delta once the
    smoothed batch BER beats ``advance_factor * p_ap`` (or the level has lasted
    ``max_level_iters``). abrupt: the same trigger jumps straight to 0.5. After
    a level change the smoothed BER restarts at the new p_ap, the error rate of
    an all-zeros guess.
    """
    if state.schedule == "none" or state.p_ap >= 0.5:
        return replace(state, p_ap=0.5)
    smoothed = state.ber_decay * state.smoothed_ber + (1 - state.ber_decay) * latest_ber
    s = replace(state, smoothed_ber=smoothed, iterations_at_level=state.iterations_at_level + 1)
    if s.schedule == "linear":
        inc = (0.5 - s.p_start) / max(s.ramp_iterations, 1)
        return replace(s, p_ap=min(0.5, s.p_ap + inc))
    if not s.criterion_met:
        return s
    new_p = 0.5 if s.schedule == "abrupt" else min(0.5, round(s.p_ap + s.step_delta, 12))
    return replace(s, p_ap=new_p, smoothed_ber=new_p, iterations_at_level=0,
                   advances=s.advances + 1)


# --- training loop -----------------------------------------------------------

@dataclass
class TrainConfig:
    code: CodeSpec
    decoder: dm.DecoderConfig
    batch_size: int = 256
    iterations: int = 10_000
    train_ebno_db: float = 1.25
    loss: str = "bce"
    optimizer: str = "rmsprop"
    lr: float = 1e-4
    schedule: str = "none"
    p_start: float = 0.1
    step_delta: float = 0.05
    ramp_iterations: int | None = None
    advance_factor: float = 0.8
    max_level_iters: int = 2000
    seed: int = 0
    probe_ebno_db: float = 1.5
    probe_bits: int = 100_000
    probe_every: int = 250
    checkpoint_every: int = 0
    out_dir: str | None = None
    modulation: str = "bpsk"
    labeling: str = "gray"
    record_wallclock: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.loss not in nn.LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.optimizer not in ("rmsprop", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.modulation not in ("bpsk", "qpsk"):
            raise ValueError(f"unknown modulation {self.modulation!r}")

    @property
    def bits_per_symbol(self) -> int:
        return 2 if self.modulation == "qpsk" else 1

    def sigma2(self, ebno_db: float) -> float:
        return float(modem.ebno_to_sigma2(ebno_db, 0.5, self.bits_per_symbol))

    def curriculum(self) -> CurriculumState:
        return CurriculumState.start(
            self.schedule, self.p_start, step_delta=self.step_delta,
            ramp_iterations=self.ramp_iterations or self.iterations,
            advance_factor=self.advance_factor, max_level_iters=self.max_level_iters)


@dataclass
class TrainResult:
    params: nn.Params
    log: list[dict] = field(default_factory=list)
    curriculum: CurriculumState | None = None
    stopped_early: bool = False


class TrainingAborted(RuntimeError):
    def __init__(self, message: str, snapshot: dict):
        super().__init__(message)
        self.snapshot = snapshot


def _rngs(seed: int):
    init, data, probe = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(init), np.random.default_rng(data),
            np.random.default_rng(probe))


def probe_set(cfg: TrainConfig, rng: np.random.Generator) -> Batch:
    n_windows = max(1, -(-cfg.probe_bits // cfg.decoder.loss_depth))
    return gen_batch(0.5, cfg.code, cfg.decoder, cfg.sigma2(cfg.probe_ebno_db), rng,
                     n_windows, cfg.modulation, modem.get_labeling(cfg.labeling))


def evaluate_batch(params: nn.Params, cfg: dm.DecoderConfig, batch: Batch,
                   chunk: int = 1024) -> float:
    errors = 0
    for i in range(0, len(batch.windows), chunk):
        p_hat, _ = dm.forward(batch.windows[i:i + chunk], params, cfg)
        errors += int(np.sum(dm.hard_decide(p_hat) != batch.labels[i:i + chunk]))
    return errors / batch.labels.size


def write_log(path: Path, records: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(LOG_HEADER + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in records:
            w.writerow(_format_record(r))


def _format_record(r: dict) -> list[str]:
    probe = "" if r["probe_ber"] is None else f"{r['probe_ber']:.6g}"
    return [str(r["iteration"]), f"{r['p_ap']:.6g}", f"{r['loss']:.8g}",
            f"{r['batch_ber']:.6g}", probe, f"{r['wallclock_s']:.3f}"]


def train(cfg: TrainConfig, params: nn.Params | None = None,
          callback: Callable[[int, nn.Params, dict], bool] | None = None) -> TrainResult:
    """Run the training loop.

    Per iteration: draw a batch at the current p_ap, forward, loss, backward,
    optimizer step, curriculum update. ``callback(iteration, params, record)``
    may return True to stop early. With ``out_dir`` set the log is streamed to
    ``train_log.csv`` and checkpoints are written every ``checkpoint_every``
    iterations and at the end.
    """
    init_rng, data_rng, probe_rng = _rngs(cfg.seed)
    if params is None:
        params = dm.init_params(cfg.decoder, init_rng)
    dm.check_params(cfg.decoder, params)
    opt = nn.make_optimizer(cfg.optimizer, cfg.lr)
    loss_fn = nn.LOSSES[cfg.loss]
    labeling = modem.get_labeling(cfg.labeling)
    sigma2 = cfg.sigma2(cfg.train_ebno_db)
    probes = probe_set(cfg, probe_rng) if cfg.probe_every > 0 else None
    cur = cfg.curriculum()
    result = TrainResult(params)

    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    fh = writer = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        fh = open(out_dir / "train_log.csv", "w", newline="")
        fh.write(LOG_HEADER + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)

    t0 = time.perf_counter()
    try:
        for it in range(1, cfg.iterations + 1):
            batch = gen_batch(cur.p_ap, cfg.code, cfg.decoder, sigma2, data_rng,
                              cfg.batch_size, cfg.modulation, labeling)
            p_hat, cache = dm.forward(batch.windows, params, cfg.decoder)
            loss, grad = loss_fn(p_hat, batch.labels)
            if not np.isfinite(loss):
                raise TrainingAborted(
                    f"non-finite loss at iteration {it}",
                    {"iteration": it, "p_ap": cur.p_ap, "params": {k: v.copy() for k, v in params.items()}})
            grads, _ = dm.backward(grad, cache)
            try:
                opt.step(params, grads)
            except nn.NonFiniteError as exc:
                raise TrainingAborted(f"iteration {it}: {exc}",
                                      {"iteration": it, "p_ap": cur.p_ap}) from exc
            batch_ber = float(np.mean(dm.hard_decide(p_hat) != batch.labels))
            record = {"iteration": it, "p_ap": cur.p_ap, "loss": loss, "batch_ber": batch_ber,
                      "probe_ber": None,
                      "wallclock_s": time.perf_counter() - t0 if cfg.record_wallclock else 0.0}
            cur = curriculum_next(cur, batch_ber)
            if probes is not None and (it % cfg.probe_every == 0 or it == cfg.iterations):
                record["probe_ber"] = evaluate_batch(params, cfg.decoder, probes)
                log.info("iter %d p_ap %.3f loss %.4f probe_ber %.4g", it, record["p_ap"],
                         loss, record["probe_ber"])
            result.log.append(record)
            if writer is not None:
                writer.writerow(_format_record(record))
            if out_dir is not None and cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
                save_checkpoint(out_dir / f"ckpt_{it:07d}", params, cfg.decoder, opt, it)
            if callback is not None and callback(it, params, record):
                result.stopped_early = True
                break
    finally:
        if fh is not None:
            fh.close()
    if out_dir is not None:
        save_checkpoint(out_dir / f"ckpt_{result.log[-1]['iteration']:07d}", params,
                        cfg.decoder, opt, result.log[-1]["iteration"])
    result.curriculum = cur
    return result
