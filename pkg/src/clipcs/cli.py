"""Command-line harness: ber, sweep-delta, analytic, and validate subcommands.

Exit codes: 0 success, 1 configuration error, 2 validation failure.
Experiment flags mirror the ExperimentConfig fields; `--config FILE` reads a
key = value text file with the same field names, and explicit flags override
file values.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields

from . import harness
from .harness import ConfigError, ExperimentConfig
from .signal_core import make_constellation


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_grid(text: str) -> tuple:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def _parse_opt_int(text: str):
    lowered = text.strip().lower()
    return None if lowered in ("", "none") else int(text)


# converters for config-file values, keyed by ExperimentConfig field name
_FIELD_PARSERS = {
    "n_subcarriers": int,
    "modulation": str,
    "oversample": int,
    "clip_mode": str,
    "peak_count": int,
    "cr_db": float,
    "delta": float,
    "omp_max_iterations": _parse_opt_int,
    "omp_stop_threshold": float,
    "cancel": _parse_bool,
    "idft_shortcut": _parse_bool,
    "ofdma_users_log2": int,
    "ofdma_user": int,
    "ebno_grid_db": _parse_grid,
    "min_bits": int,
    "max_bits": int,
    "target_errors": int,
    "master_seed": int,
}


def read_config_file(path: str) -> dict:
    """Parse a key = value config file (# starts a comment)."""
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError([f"{path}:{lineno}: expected key = value"])
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in known:
                raise ConfigError([f"{path}:{lineno}: unknown field {key!r}"])
            try:
                values[key] = _FIELD_PARSERS[key](value.strip())
            except ValueError as exc:
                raise ConfigError([f"{path}:{lineno}: {exc}"]) from exc
    return values


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value file with ExperimentConfig fields")
    parser.add_argument("--n-subcarriers", type=int, dest="n_subcarriers")
    parser.add_argument("--modulation", choices=("qpsk", "16qam"))
    parser.add_argument("--oversample", type=int)
    parser.add_argument("--clip-mode", dest="clip_mode", choices=harness.CLIP_MODES)
    parser.add_argument("--peak-count", type=int, dest="peak_count")
    parser.add_argument("--cr-db", type=float, dest="cr_db")
    parser.add_argument("--delta", type=float)
    parser.add_argument("--omp-max-iterations", type=int, dest="omp_max_iterations")
    parser.add_argument("--omp-stop-threshold", type=float, dest="omp_stop_threshold")
    parser.add_argument(
        "--no-cancel", action="store_false", dest="cancel", default=None,
        help="decide directly on the equalized tones (baseline arm)",
    )
    parser.add_argument(
        "--no-idft-shortcut", action="store_false", dest="idft_shortcut", default=None,
        help="run OMP even at delta = 0 instead of the largest-components rule",
    )
    parser.add_argument("--ofdma-users-log2", type=int, dest="ofdma_users_log2")
    parser.add_argument("--ofdma-user", type=int, dest="ofdma_user")
    parser.add_argument(
        "--ebno-grid-db", dest="ebno_grid_db", type=_parse_grid,
        help="comma-separated Eb/N0 grid in dB",
    )
    parser.add_argument("--min-bits", type=int, dest="min_bits")
    parser.add_argument("--max-bits", type=int, dest="max_bits")
    parser.add_argument("--target-errors", type=int, dest="target_errors")
    parser.add_argument("--master-seed", type=int, dest="master_seed")
    parser.add_argument("--workers", type=int, help="worker processes (capped by CLIPCS_THREADS)")
    parser.add_argument("--output", help="CSV output path")


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    values = read_config_file(args.config) if args.config else {}
    for f in fields(ExperimentConfig):
        flag_value = getattr(args, f.name, None)
        if flag_value is not None:
            values[f.name] = flag_value
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def _print_records(records) -> None:
    print(harness.CSV_HEADER)
    for record in records:
        print(harness.record_csv_line(record))


def cmd_ber(args) -> int:
    cfg = build_config(args)
    records = harness.run_ber(cfg, workers=args.workers)
    _print_records(records)
    if args.output:
        harness.write_text(args.output, harness.records_to_csv(records))
    return 0


def cmd_sweep_delta(args) -> int:
    cfg = build_config(args)
    deltas = args.deltas
    rows = harness.run_delta_sweep(cfg, deltas, workers=args.workers)
    print(harness.SWEEP_CSV_HEADER)
    for delta, record in rows:
        print(harness._fmt(delta) + "," + harness.record_csv_line(record))
    if args.output:
        harness.write_text(args.output, harness.sweep_to_csv(rows))
    return 0


def cmd_analytic(args) -> int:
    constellation = make_constellation(args.modulation or "qpsk")
    rows = harness.run_analytic(
        constellation,
        args.cr_db if args.cr_db is not None else 0.0,
        args.ebno_grid_db or (0.0, 2.0, 4.0, 6.0, 8.0, 10.0),
        args.deltas,
        args.n_subcarriers or 64,
    )
    header = "ebno_db,delta,effective_n0,p_in_rr,p_error_given_rr,expected_m"
    lines = [header]
    for row in rows:
        lines.append(
            ",".join(
                harness._fmt(row[key])
                for key in ("ebno_db", "delta", "effective_n0", "p_in_rr",
                            "p_error_given_rr", "expected_m")
            )
        )
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.output:
        harness.write_text(args.output, text)
    return 0


def cmd_validate(args) -> int:
    results = harness.validate(perturb=args.perturb)
    failures = 0
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"[{status}] {result.name}: {result.detail}")
        failures += 0 if result.passed else 1
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return 0 if failures == 0 else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clipcs",
        description="Monte Carlo BER harness for clipped OFDM/OFDMA with "
        "compressed-sensing clipping-noise cancellation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ber = sub.add_parser("ber", help="BER over an Eb/N0 grid")
    _add_experiment_flags(p_ber)
    p_ber.set_defaults(func=cmd_ber)

    p_sweep = sub.add_parser("sweep-delta", help="BER across margin values")
    _add_experiment_flags(p_sweep)
    p_sweep.add_argument(
        "--deltas", type=_parse_grid, default=(0.0, 0.2, 0.4, 0.6, 0.8),
        help="comma-separated margin grid",
    )
    p_sweep.set_defaults(func=cmd_sweep_delta)

    p_ana = sub.add_parser("analytic", help="closed-form probability tables")
    p_ana.add_argument("--modulation", choices=("qpsk", "16qam"))
    p_ana.add_argument("--cr-db", type=float, dest="cr_db")
    p_ana.add_argument("--ebno-grid-db", dest="ebno_grid_db", type=_parse_grid)
    p_ana.add_argument("--deltas", type=_parse_grid, default=(0.0, 0.2, 0.4, 0.6, 0.8))
    p_ana.add_argument("--n-subcarriers", type=int, dest="n_subcarriers")
    p_ana.add_argument("--output", help="CSV output path")
    p_ana.set_defaults(func=cmd_analytic)

    p_val = sub.add_parser("validate", help="run the invariant suite")
    p_val.add_argument("--perturb", choices=("twiddle-sign",), help=argparse.SUPPRESS)
    p_val.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
