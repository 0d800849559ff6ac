"""Command line: run a config, run a preset, list presets.

Exit codes: 0 ok, 2 configuration error, 3 non-finite result, 4 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .scenario import (ConfigError, NumericError, apply_overrides, list_presets, load_config, parse_config,
                       preset_text, run_config)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("biphoton_lab")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="biphoton-lab", description="Biphoton imaging through scattering media")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a scenario config file")
    r.add_argument("config")
    r.add_argument("--out", default=None)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--full", action="store_true", help="use the 51 x 51 grid")
    p = sub.add_parser("preset", help="run a named preset")
    p.add_argument("name")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--full", action="store_true")
    sub.add_parser("list", help="list presets")
    return ap


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.cmd == "list":
            for name, desc in list_presets():
                print(f"{name:20s} {desc}")
            return EXIT_OK
        if args.cmd == "run":
            cfg = load_config(args.config)
        else:
            cfg = parse_config(preset_text(args.name), f"preset:{args.name}")
        apply_overrides(cfg, args.seed, args.full)
        out = args.out or os.path.join("runs", cfg.experiment)
        log.info("running %s (seed %d) -> %s", cfg.experiment, cfg.seed, out)
        run_config(cfg, out)
        print(out)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
