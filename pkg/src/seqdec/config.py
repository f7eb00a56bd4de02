"""Experiment configuration files (YAML) with strict key checking."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .conv_code import CodeError, CodeSpec, parse_octal_generators
from .decoder import DecoderConfig
from .links import Link
from .metrics import snr_grid
from .training import SCHEDULES, TrainConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


DEFAULTS: dict[str, Any] = {
    "code": {"generators": None},
    "decoder": {
        "ramp_len": None,  # defaults to the code's traceback hint
        "loss_depth": None,  # defaults to ramp_len
        "gru_layers": 3,
        "gru_width": 256,
        "combiner_width": 16,
        "head_activation": None,  # sigmoid for bce, linear for mse
    },
    "train": {
        "batch_size": 256,
        "iterations": 10_000,
        "train_ebno_db": 1.25,
        "loss": "bce",
        "optimizer": "rmsprop",
        "lr": 1e-4,
        "seed": 0,
        "probe_ebno_db": 1.5,
        "probe_bits": 100_000,
        "probe_every": 250,
        "checkpoint_every": 0,
    },
    "curriculum": {
        "schedule": "none",
        "p_start": 0.1,
        "step_delta": 0.05,
        "ramp_iterations": None,
        "advance_factor": 0.8,
        "max_level_iters": 2000,
    },
    "eval": {
        "snr_min_db": 0.0,
        "snr_max_db": 3.5,
        "num_points": 8,
        "snr_points_db": None,
        "min_errors": 100,
        "max_bits": 1_000_000,
        "seed": 1,
        "traceback_len": None,
    },
    "channel": {
        "modulation": "bpsk",
        "labeling": "gray",
        "interleave": False,
        "interleaver_seed": 0,
        "interleaver_block": 4096,
    },
    "output_dir": "runs/default",
}

REQUIRED = ("code.generators",)


def _merge(defaults: dict, given: dict, path: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        where = f"{path}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{where}' must be a mapping")
            out[key] = _merge(defaults[key], value, where + ".")
        else:
            out[key] = value
    return out


def _get(raw: dict, dotted: str):
    node = raw
    for part in dotted.split("."):
        node = node[part]
    return node


@dataclass
class ExperimentConfig:
    raw: dict
    code: CodeSpec
    decoder: DecoderConfig
    train: TrainConfig
    snr_points_db: list[float]
    min_errors: int
    max_bits: int
    eval_seed: int
    traceback_len: int
    link: Link

    @property
    def output_dir(self) -> Path:
        return Path(self.raw["output_dir"])

    def dump(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.raw, sort_keys=True))


def _num(raw, field, kind=float, minimum=None, strict=False):
    value = _get(raw, field)
    try:
        if kind is int and (isinstance(value, bool) or float(value) != int(value)):
            raise ValueError
        value = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"'{field}' must be {'an integer' if kind is int else 'a number'}, got {value!r}")
    if minimum is not None and (value <= minimum if strict else value < minimum):
        raise ConfigError(f"'{field}' must be {'>' if strict else '>='} {minimum}, got {value}")
    return value


def _choice(raw, field, options):
    value = _get(raw, field)
    if value not in options:
        raise ConfigError(f"'{field}' must be one of {list(options)}, got {value!r}")
    return value


def build_config(given: dict | None, overrides: dict | None = None) -> ExperimentConfig:
    """Validate a parsed config mapping and resolve every default.

    ``overrides`` uses dotted keys (``{"train.seed": 3}``) and is applied
    after the file.
    """
    given = given or {}
    if not isinstance(given, dict):
        raise ConfigError("config file must contain a mapping at the top level")
    raw = _merge(DEFAULTS, given)
    for dotted, value in (overrides or {}).items():
        parent, _, leaf = dotted.rpartition(".")
        node = _get(raw, parent) if parent else raw
        if leaf not in node:
            raise ConfigError(f"unknown config key '{dotted}'")
        node[leaf] = value
    for field in REQUIRED:
        if _get(raw, field) is None:
            raise ConfigError(f"missing required field '{field}'")

    try:
        code = parse_octal_generators(raw["code"]["generators"])
    except CodeError as exc:
        raise ConfigError(f"'code.generators': {exc}") from exc

    d = raw["decoder"]
    if d["head_activation"] is None:
        d["head_activation"] = "linear" if raw["train"]["loss"] == "mse" else "sigmoid"
    if d["ramp_len"] is None:
        d["ramp_len"] = code.traceback_hint
    if d["loss_depth"] is None:
        d["loss_depth"] = d["ramp_len"] if d["ramp_len"] > 0 else 1
    dec = DecoderConfig(
        ramp_len=_num(raw, "decoder.ramp_len", int, 0),
        loss_depth=_num(raw, "decoder.loss_depth", int, 1),
        gru_layers=_num(raw, "decoder.gru_layers", int, 1),
        gru_width=_num(raw, "decoder.gru_width", int, 1),
        combiner_width=_num(raw, "decoder.combiner_width", int, 1),
        head_activation=_choice(raw, "decoder.head_activation", ("sigmoid", "linear")),
    )

    ch = raw["channel"]
    modulation = _choice(raw, "channel.modulation", ("bpsk", "qpsk"))
    labeling = _choice(raw, "channel.labeling", ("gray", "anti-gray", "anti_gray"))
    if not isinstance(ch["interleave"], bool):
        raise ConfigError("'channel.interleave' must be true or false")
    block = _num(raw, "channel.interleaver_block", int, 2)
    if block % 2:
        raise ConfigError("'channel.interleaver_block' must be even")

    t, c = raw["train"], raw["curriculum"]
    ramp_iters = c["ramp_iterations"]
    train = TrainConfig(
        code=code, decoder=dec,
        batch_size=_num(raw, "train.batch_size", int, 1),
        iterations=_num(raw, "train.iterations", int, 1),
        train_ebno_db=_num(raw, "train.train_ebno_db"),
        loss=_choice(raw, "train.loss", ("bce", "mse")),
        optimizer=_choice(raw, "train.optimizer", ("rmsprop", "adam")),
        lr=_num(raw, "train.lr", float, 0, strict=True),
        schedule=_choice(raw, "curriculum.schedule", SCHEDULES),
        p_start=_num(raw, "curriculum.p_start", float, 0, strict=True),
        step_delta=_num(raw, "curriculum.step_delta", float, 0, strict=True),
        ramp_iterations=None if ramp_iters is None else _num(raw, "curriculum.ramp_iterations", int, 1),
        advance_factor=_num(raw, "curriculum.advance_factor", float, 0, strict=True),
        max_level_iters=_num(raw, "curriculum.max_level_iters", int, 1),
        seed=_num(raw, "train.seed", int, 0),
        probe_ebno_db=_num(raw, "train.probe_ebno_db"),
        probe_bits=_num(raw, "train.probe_bits", int, 1),
        probe_every=_num(raw, "train.probe_every", int, 0),
        checkpoint_every=_num(raw, "train.checkpoint_every", int, 0),
        modulation=modulation, labeling=labeling,
    )
    if train.p_start > 0.5:
        raise ConfigError("'curriculum.p_start' must be <= 0.5")

    e = raw["eval"]
    if e["snr_points_db"] is not None:
        pts = e["snr_points_db"]
        if not isinstance(pts, list) or not pts:
            raise ConfigError("'eval.snr_points_db' must be a non-empty list")
        try:
            points = [float(v) for v in pts]
        except (TypeError, ValueError):
            raise ConfigError("'eval.snr_points_db' must contain numbers")
        if any(math.isnan(v) for v in points):
            raise ConfigError("'eval.snr_points_db' must not contain NaN")
    else:
        lo, hi = _num(raw, "eval.snr_min_db"), _num(raw, "eval.snr_max_db")
        num = _num(raw, "eval.num_points", int, 1)
        if not (lo < hi or (num == 1 and lo == hi)):
            raise ConfigError("'eval.snr_min_db' must be below 'eval.snr_max_db'")
        points = snr_grid(lo, hi, num)
    tb = e["traceback_len"]
    try:
        link = Link(code, modulation, labeling, ch["interleave"],
                    _num(raw, "channel.interleaver_seed", int, 0), block,
                    row_bits=block // 2 if ch["interleave"] else 2048)
    except ValueError as exc:
        raise ConfigError(f"'channel': {exc}") from exc
    if not isinstance(raw["output_dir"], str) or not raw["output_dir"]:
        raise ConfigError("'output_dir' must be a non-empty string")
    return ExperimentConfig(
        raw=raw, code=code, decoder=dec, train=train, snr_points_db=points,
        min_errors=_num(raw, "eval.min_errors", int, 1),
        max_bits=_num(raw, "eval.max_bits", int, 1),
        eval_seed=_num(raw, "eval.seed", int, 0),
        traceback_len=code.traceback_hint if tb is None else _num(raw, "eval.traceback_len", int, 1),
        link=link,
    )


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        given = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return build_config(given, overrides)
