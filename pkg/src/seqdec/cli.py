"""Command-line experiment runner.

Exit status: 0 on success, 2 for configuration or validation errors, 1 for
runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from contextlib import nullcontext
from pathlib import Path

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, ExperimentConfig, load_config
from .conv_code import TABLE_CODES, parse_octal_generators
from .decoder import DecoderConfig
from .links import Link, nn_decoder, uncoded_decoder, viterbi_decoder
from .metrics import BerTable, merge_tables, monte_carlo_ber, nve
from .training import TrainingAborted, train

log = logging.getLogger("seqdec")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class UsageError(Exception):
    pass


def _threads(n: int | None):
    if n is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def _overrides(args) -> dict:
    out = {}
    if getattr(args, "seed", None) is not None:
        out["train.seed"] = args.seed
    if getattr(args, "out", None):
        out["output_dir"] = str(args.out)
    if getattr(args, "modulation", None):
        out["channel.modulation"] = args.modulation
    if getattr(args, "labeling", None):
        out["channel.labeling"] = args.labeling
    if getattr(args, "interleave", False):
        out["channel.interleave"] = True
    return out


def _prepare(args) -> tuple[ExperimentConfig, Path]:
    cfg = load_config(args.config, _overrides(args))
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    cfg.dump(out / "config_resolved.yaml")
    return cfg, out


def cmd_train(args) -> int:
    cfg, out = _prepare(args)
    tc = cfg.train
    tc.out_dir = str(out)
    # single-threaded runs are the reproducible ones: keep their logs free of timing
    tc.record_wallclock = args.threads != 1
    t0 = time.perf_counter()
    result = train(tc)
    elapsed = time.perf_counter() - t0
    (out / "timing.json").write_text(json.dumps({"train_seconds": elapsed}) + "\n")
    last = result.log[-1]
    print(f"trained {last['iteration']} iterations; final p_ap {last['p_ap']:.3g}, "
          f"probe BER {last['probe_ber']}")
    return EXIT_OK


def _load_model(args, cfg: ExperimentConfig):
    params, stored, manifest = load_checkpoint(args.checkpoint)
    if stored != cfg.decoder:
        raise CheckpointError(
            f"checkpoint decoder {stored.to_dict()} does not match config {cfg.decoder.to_dict()}")
    return params


def cmd_eval(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    params = _load_model(args, cfg)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    cfg.dump(out / "config_resolved.yaml")
    table = monte_carlo_ber(cfg.link.simulator(nn_decoder(params, cfg.decoder)),
                            cfg.snr_points_db, cfg.eval_seed, cfg.min_errors, cfg.max_bits)
    path = out / "nn_ber.csv"
    table.to_csv(path)
    _print_table("NN decoder", table)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg, out = _prepare(args)
    link = cfg.link
    table = monte_carlo_ber(link.simulator(viterbi_decoder(link, cfg.traceback_len)),
                            cfg.snr_points_db, cfg.eval_seed, cfg.min_errors, cfg.max_bits)
    table.to_csv(out / "viterbi_ber.csv")
    _print_table(f"Viterbi {cfg.code.name} {link.modulation}/{link.labeling}"
                 f"{' interleaved' if link.interleave else ''}", table)
    ref = monte_carlo_ber(Link().simulator(uncoded_decoder), cfg.snr_points_db,
                          cfg.eval_seed, cfg.min_errors, cfg.max_bits)
    ref.to_csv(out / "uncoded_ber.csv")
    _print_table("uncoded BPSK", ref)
    return EXIT_OK


def cmd_compare(args) -> int:
    try:
        nn_table = BerTable.from_csv(args.nn_table)
        ref_table = BerTable.from_csv(args.ref_table)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read BER tables: {exc}") from exc
    try:
        report = nve(nn_table, ref_table)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.out:
        merge_tables({"nn": nn_table, "ref": ref_table}, args.out)
    for snr, ratio in zip(report.snr_db, report.ratios):
        print(f"{snr:7.3f} dB  ratio {ratio:.4f}")
    print(f"NVE {report.nve:.4f} over {report.num_points} points")
    return EXIT_OK


def cmd_sweep(args) -> int:
    """NVE as a function of the ramp length with one loss position per window."""
    cfg, out = _prepare(args)
    link = cfg.link
    ref = monte_carlo_ber(link.simulator(viterbi_decoder(link, cfg.traceback_len)),
                          cfg.snr_points_db, cfg.eval_seed, cfg.min_errors, cfg.max_bits)
    ref.to_csv(out / "viterbi_ber.csv")
    rows = []
    for ramp in args.ramp_lens:
        dec = DecoderConfig(ramp_len=ramp, loss_depth=args.loss_depth,
                            gru_layers=cfg.decoder.gru_layers, gru_width=cfg.decoder.gru_width,
                            combiner_width=cfg.decoder.combiner_width,
                            head_activation=cfg.decoder.head_activation)
        tc = cfg.train
        tc.decoder = dec
        tc.out_dir = str(out / f"ramp_{ramp}")
        tc.record_wallclock = args.threads != 1
        result = train(tc)
        table = monte_carlo_ber(link.simulator(nn_decoder(result.params, dec)),
                                cfg.snr_points_db, cfg.eval_seed, cfg.min_errors, cfg.max_bits)
        table.to_csv(out / f"ramp_{ramp}" / "nn_ber.csv")
        report = nve(table, ref)
        rows.append((ramp, report.nve))
        print(f"ramp_len {ramp:3d}  NVE {report.nve:.4f}")
    with open(out / "nve_sweep.csv", "w", newline="") as fh:
        fh.write("# seqdec-nvesweep-v1\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ramp_len", "loss_depth", "nve"])
        for ramp, value in rows:
            w.writerow([ramp, args.loss_depth, f"{value:.6g}"])
    return EXIT_OK


def cmd_codes(args) -> int:
    print(f"{'code':<22}{'rate':>6}{'constr. length':>16}{'l_tb':>6}")
    for g in TABLE_CODES.values():
        c = parse_octal_generators(g)
        print(f"{c.name:<22}{'1/2':>6}{c.constraint_length:>16}{c.traceback_hint:>6}")
    return EXIT_OK


def _print_table(title: str, table: BerTable) -> None:
    print(title)
    for snr, b, e, n, cens in table.rows():
        print(f"  {snr:7.3f} dB  BER {b:.4e}  ({e} errors / {n} bits){'  censored' if cens else ''}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqdec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False):
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="training seed (overrides train.seed)")
        p.add_argument("--threads", type=int, default=None,
                       help="BLAS thread limit; 1 makes runs byte-reproducible")
        p.add_argument("--modulation", choices=("bpsk", "qpsk"))
        p.add_argument("--labeling", choices=("gray", "anti-gray"))
        p.add_argument("--interleave", action="store_true")
        if checkpoint:
            p.add_argument("--checkpoint", required=True, type=Path)

    p = sub.add_parser("train", help="train the NN decoder")
    common(p)
    p.set_defaults(func=cmd_train)
    p = sub.add_parser("eval", help="Monte-Carlo BER of a trained decoder")
    common(p, checkpoint=True)
    p.set_defaults(func=cmd_eval)
    p = sub.add_parser("baseline", help="Monte-Carlo BER of the Viterbi and uncoded references")
    common(p)
    p.set_defaults(func=cmd_baseline)
    p = sub.add_parser("sweep", help="NVE over ramp lengths (one train + eval per value)")
    common(p)
    p.add_argument("--ramp-lens", type=int, nargs="+", required=True)
    p.add_argument("--loss-depth", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("compare", help="NVE of one BER table against a reference")
    p.add_argument("nn_table", type=Path)
    p.add_argument("ref_table", type=Path)
    p.add_argument("--out", type=Path, help="merged CSV for plotting")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("codes", help="list the learned code family")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_codes)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        with _threads(args.threads):
            return args.func(args)
    except (ConfigError, CheckpointError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingAborted as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - top-level runtime failure
        log.exception("run failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
