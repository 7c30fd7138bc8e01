"""Command line entry point: ``autosecagg run|sweep|bandwidth``."""

from __future__ import annotations

import argparse
import sys

from . import harness
from .errors import ConfigError, IoError


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="autosecagg", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one training experiment")
    run.add_argument("--config", required=True, help="flat TOML config file")
    run.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    run.add_argument("--out", help="output directory (default: config 'output')")

    sw = sub.add_parser("sweep", help="run once per value of one config key")
    sw.add_argument("--config", required=True)
    sw.add_argument("--param", required=True)
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    sw.add_argument("--out")

    bw = sub.add_parser("bandwidth", help="bits/entry and expansion ratios")
    bw.add_argument("--users", type=int, required=True)
    bw.add_argument("--bits", type=int, required=True, help="clip baseline bits, levels = 2**bits")
    bw.add_argument("--dim", type=int, default=1)
    bw.add_argument("--modulus-bits", type=int, default=8, help="autotuned SecAgg modulus bits")
    return p


def _final_accuracy(path) -> str:
    rows = harness.read_metrics(path)
    return f"{rows[-1]['eval_accuracy']:.4f}" if rows else "n/a"


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            config = harness.load_config(args.config, args.override)
            path = harness.run_experiment(config, args.out)
            print(f"{path}\tfinal_accuracy={_final_accuracy(path)}")
        elif args.command == "sweep":
            config = harness.load_config(args.config, args.override)
            values = [harness.parse_override(f"v={v}")[1] for v in args.values.split(",") if v.strip()]
            for path in harness.sweep(config, args.param, values, args.out):
                print(f"{path}\tfinal_accuracy={_final_accuracy(path)}")
        else:
            if args.users < 1 or args.bits < 1 or args.dim < 1 or args.modulus_bits < 1:
                raise ConfigError("--users, --bits, --dim and --modulus-bits must be >= 1")
            report = harness.bandwidth_report(args.users, 2**args.bits, args.dim, 2**args.modulus_bits)
            print("\n".join(report.lines()))
    except (ConfigError, IoError, ValueError) as exc:
        print(f"autosecagg: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
