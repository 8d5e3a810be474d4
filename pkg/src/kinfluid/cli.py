"""Command line entry point: ``kinfluid run <config.json>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .coupling import InstabilityError
from .run import RunHistory, run_simulation, write_timeseries

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNSTABLE = 3


def _write_outputs(history: RunHistory, out_dir: Path, stem: str, fmt: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    target = write_timeseries(history, out_dir / f"{stem}.{fmt}", fmt)
    if fmt == "csv":
        meta = history.to_dict()
        meta.pop("rows")
        (out_dir / f"{stem}.summary.json").write_text(json.dumps(meta, indent=1))
    return target


def _run(args) -> int:
    try:
        config = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.deterministic:
            overrides["deterministic"] = True
        if args.out is not None:
            overrides["output_path"] = str(args.out)
        if overrides:
            config = config.replace(**overrides)
    except (ConfigError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    stem = Path(args.config).stem
    out_dir = Path(config.output_path)
    try:
        history = run_simulation(config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InstabilityError as e:
        print(f"instability: {e}", file=sys.stderr)
        if e.history is not None:
            path = _write_outputs(e.history, out_dir, stem, args.format)
            print(f"partial history written to {path}", file=sys.stderr)
        return EXIT_UNSTABLE

    path = _write_outputs(history, out_dir, stem, args.format)
    fit = history.decay
    print(f"wrote {len(history.rows)} rows to {path}")
    if fit is not None:
        print(f"decay rate {fit.rate:.6g}  r^2 {fit.r_squared:.6f}  window {fit.window}")
    else:
        print(f"decay fit: {history.decay_error}")
    cons = history.conservation
    print(
        "drift: mass_fluid {mass_fluid_drift:.3e}  mass_kinetic {mass_kinetic_drift:.3e}  "
        "momentum {momentum_drift:.3e}".format(**cons)
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kinfluid",
        description="Vlasov / compressible Navier-Stokes drag-coupled simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one configuration")
    run.add_argument("config", help="path to a JSON run configuration")
    run.add_argument("--out", type=Path, default=None, help="output directory")
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--deterministic", action="store_true")
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "run":
        return _run(args)
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
