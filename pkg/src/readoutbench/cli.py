"""Command line front end.

    readoutbench <study> --config PATH [--seed N] [--out DIR] [--threads N]
    readoutbench validate --config PATH

Exit status is 0 on success, 1 for an invalid config and 2 when a study
fails at run time.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import STUDIES, ConfigError, parse_config
from .core import InvalidPovmError, InvalidStateError
from .harness import StudyError
from .tomography import EstimationError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="readoutbench",
                                description="Simulated readout tomography benchmarks.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name in (*STUDIES, "validate"):
        sp = sub.add_parser(name, help="check a config only" if name == "validate"
                            else f"run the {name} study")
        sp.add_argument("--config", required=True, metavar="PATH")
        sp.add_argument("--seed", type=_u64, help="override the config seed")
        sp.add_argument("--out", metavar="DIR", help="override the output directory")
        sp.add_argument("--threads", type=_positive, help="worker threads for study cells")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    study = None if args.command == "validate" else args.command
    try:
        cfg = parse_config(args.config, study)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_INVALID
    overrides = {k: v for k, v in (("seed", args.seed), ("output_dir", args.out),
                                   ("threads", args.threads)) if v is not None}
    cfg = cfg.replace(**overrides)
    if args.command == "validate":
        print(f"ok: {cfg.study} study, {cfg.n_qubits} qubit(s)")
        return EXIT_OK
    from .studies import run_study
    try:
        manifest = run_study(cfg)
    except (StudyError, EstimationError, InvalidPovmError, InvalidStateError,
            ValueError, ArithmeticError) as exc:
        print(f"study failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for f in manifest.files:
        print(f"{cfg.output_dir}/{f['path']}  sha256={f['sha256'][:16]}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
