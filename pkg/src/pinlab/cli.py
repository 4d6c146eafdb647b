"""Command line interface: pinlab run | sweep | verify."""

from __future__ import annotations

import argparse
import sys

from . import __version__


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pinlab",
        description="Interface pinning in quenched random media: simulators and "
        "barrier-certificate toolkit.",
    )
    parser.add_argument("--version", action="version", version=f"pinlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config", help="experiment config (JSON)")
    p_run.add_argument("--out", required=True, help="output directory")

    p_sweep = sub.add_parser("sweep", help="run an experiment across a parameter grid")
    p_sweep.add_argument("config", help="sweep config (JSON with a 'sweep' section)")
    p_sweep.add_argument("--out", required=True, help="output directory")

    p_ver = sub.add_parser("verify", help="re-verify a serialized supersolution")
    p_ver.add_argument("assembly", help="assembly.json from a continuum experiment")
    p_ver.add_argument("field", help="field.json (obstacle set)")
    p_ver.add_argument("--force", type=float, default=None, help="driving force override")

    args = parser.parse_args(argv)
    from . import harness  # deferred: heavy imports

    try:
        if args.command == "run":
            cfg = harness.load_config(args.config)
            return harness.run(cfg, args.out)
        if args.command == "sweep":
            cfg = harness.load_config(args.config)
            return harness.sweep(cfg, args.out)
        return harness.verify_files(args.assembly, args.field, args.force)
    except harness.ConfigError as e:
        print(f"config error:\n{e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
