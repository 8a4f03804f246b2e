"""Command-line entry point: ``paim <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import harness
from .analysis import VARIANTS, bound_rows_to_csv
from .config import ConfigError, SystemConfig, load_config


def parse_snr(text: str) -> tuple[float, ...]:
    """``lo:hi:step`` (inclusive of hi) or a comma-separated list."""
    try:
        if ":" in text:
            lo, hi, step = (float(t) for t in text.split(":"))
            if step <= 0 or hi < lo:
                raise ValueError
            n = int(np.floor((hi - lo) / step + 1e-9)) + 1
            return tuple(float(v) for v in np.round(lo + step * np.arange(n), 10))
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad SNR axis {text!r}; expected lo:hi:step") from None


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or YAML file with SystemConfig fields")
    common.add_argument("--snr", type=parse_snr, default=parse_snr("0:30:5"), help="SNR axis lo:hi:step in dB")
    common.add_argument("--snr-mode", choices=harness.SNR_MODES, default="normalized",
                        help="ptx: SNR = P_t/N0; normalized: SNR = P_t mean(beta)/N0")
    common.add_argument("--trials", type=int, default=1000)
    common.add_argument("--min-errors", type=int, default=None)
    common.add_argument("--detector", choices=("ml", "bosd"), default="ml")
    common.add_argument("--precoding", choices=("none", "manifold"), default="none")
    common.add_argument("--seed", type=int, default=None, help="defaults to rng_seed from the config")
    common.add_argument("--out", default="-", help="output path, '-' for stdout")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--chunk", type=int, default=100, help="trials per large-scale map")
    common.add_argument("--fixed-map", action="store_true", help="keep one large-scale map for the sweep")
    common.add_argument("--timing", action="store_true", help="record wall time per point")

    p = argparse.ArgumentParser(prog="paim", description="Pinching-antenna index modulation simulator")
    sub = p.add_subparsers(dest="command", required=True)
    ber = sub.add_parser("ber", parents=[common], help="Monte Carlo BER sweep")
    ber.add_argument("--bound", choices=VARIANTS, default=None, help="add a union-bound column")
    cx = sub.add_parser("complexity", parents=[common], help="search effort against constellation size")
    cx.add_argument("--m-list", type=_int_list, default=(4, 16, 64))
    ab = sub.add_parser("precoder-ab", parents=[common], help="unprecoded vs manifold-precoded BER")
    ab.add_argument("--target-ber", type=float, default=1e-3)
    na = sub.add_parser("na-sweep", parents=[common], help="BER against the number of active PAs")
    na.add_argument("--na-list", type=_int_list, default=(1, 2, 4))
    bd = sub.add_parser("bound", parents=[common], help="analytical union bound curve")
    bd.add_argument("--variant", choices=("closed_form", "quadrature"), default="closed_form")
    return p


def _plan(args, cfg: SystemConfig, **extra) -> harness.ExperimentPlan:
    return harness.ExperimentPlan(
        cfg=cfg, snr_db=args.snr, trials=args.trials, min_errors=args.min_errors, detector=args.detector,
        precoding=args.precoding, seed=args.seed, snr_mode=args.snr_mode, chunk=args.chunk,
        fixed_map=args.fixed_map, workers=args.workers, record_timing=args.timing, **extra)


def run(argv=None) -> str:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config) if args.config else SystemConfig()
    if args.seed is None:
        args.seed = cfg.rng_seed

    if args.command == "bound":
        curve = harness.bound_curve(cfg, args.snr, args.variant, args.seed, args.snr_mode)
        if args.format == "csv":
            return _emit(args.out, bound_rows_to_csv(curve))
        doc = json.dumps({"rows": [{"snr_db": s, "bound": b.value, "bound_clamped": b.clamped,
                                    "variant": b.variant} for s, b in curve]}, indent=2) + "\n"
        return _emit(args.out, doc)

    if args.command == "ber":
        rows = harness.run_ber_sweep(_plan(args, cfg, bound_variant=args.bound))
        extra = None
    elif args.command == "complexity":
        rows = harness.run_complexity_sweep(_plan(args, cfg), args.m_list)
        extra = None
    elif args.command == "precoder-ab":
        res = harness.run_precoder_ab(_plan(args, cfg), args.target_ber)
        rows = res.rows
        extra = {"gain_db": res.gain_db, "target_ber": res.target_ber}
        print(f"# SNR gain at BER {res.target_ber:g}: "
              + ("not reached" if res.gain_db is None else f"{res.gain_db:.3f} dB"), file=sys.stderr)
    else:
        rows = harness.run_na_sweep(_plan(args, cfg), args.na_list)
        extra = None
    text = harness.rows_to_csv(rows) if args.format == "csv" else harness.rows_to_json(rows, extra)
    return _emit(args.out, text)


def _emit(out, text: str) -> str:
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    return text


def main(argv=None) -> int:
    try:
        run(argv)
    except (ConfigError, ValueError, TypeError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"paim: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
