"""Command line entry point: ``spinfid run|sweep|oracle``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import runner, twospin
from .analysis import FitFailure
from .chaos import NumericalFailure
from .classical import IntegrationError
from .config import ConfigError, RunConfig, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spinfid", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute one config file")
    r.add_argument("config")
    r.add_argument("-o", "--output-dir", help="override output_dir")

    s = sub.add_parser("sweep", help="run a parameter sweep (workers: SPINFID_WORKERS)")
    s.add_argument("config")
    s.add_argument("-o", "--output-dir")

    o = sub.add_parser("oracle", help="closed-form reference values")
    osub = o.add_subparsers(dest="oracle", required=True)
    t = osub.add_parser("twospin", help="two-spin oracles")
    t.add_argument("mode", choices=("period", "c2", "sx", "eigs"))
    t.add_argument("args", nargs="*", type=float,
                   help="period E | c2 E tau | sx t p_d | eigs p_d")
    t.add_argument("--json", action="store_true", help="print the full-precision report as JSON")
    return p


def _oracle(ns) -> int:
    need = {"period": 1, "c2": 2, "sx": 2, "eigs": 1}[ns.mode]
    if len(ns.args) != need:
        print(f"error: twospin {ns.mode} takes {need} numeric argument(s)", file=sys.stderr)
        return EXIT_CONFIG
    a = ns.args
    names = {"period": ("E",), "c2": ("E", "tau"), "sx": ("tau", "p_d"), "eigs": ("p_d",)}[ns.mode]
    kw = dict(zip(names, a))
    try:
        rep = runner.twospin_report(RunConfig(engine="twospin", mode=ns.mode, **kw))
    except (ValueError, twospin.SingularityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if ns.json or ns.mode == "eigs":
        print(json.dumps(rep, indent=2, sort_keys=True))
    else:
        print(f"{rep['value']:.4f}")
    return EXIT_OK


def main(argv=None) -> int:
    ns = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if ns.command == "oracle":
        return _oracle(ns)
    try:
        cfg = load_config(ns.config)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"{ns.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if ns.command == "run":
            if cfg.sweep_param is not None:
                print(f"{ns.config}: sweep_param is set; use 'spinfid sweep'", file=sys.stderr)
                return EXIT_CONFIG
            out = runner.execute(cfg, ns.output_dir)
            if cfg.engine == "twospin" and cfg.mode != "eigs":
                rep = json.loads((out / "oracle.json").read_text())
                print(f"{rep['value']:.4f}")
        else:
            if cfg.sweep_param is None:
                print(f"{ns.config}: sweep needs sweep_param and sweep_values", file=sys.stderr)
                return EXIT_CONFIG
            out = runner.sweep(cfg, ns.output_dir)
    except ConfigError as exc:
        print(f"{ns.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, NumericalFailure, FitFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
