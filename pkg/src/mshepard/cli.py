"""Command-line entry point ``mshepard``.

    mshepard run config.ini --out results/
    mshepard nodes config.ini --out results/
    mshepard reference config.ini --out results/
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import geometry
from .experiment import (ExperimentConfig, ExperimentError, build_nodes, error_table,
                         reference_solution, run_experiment, write_reference, _stage)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mshepard", description=(
        "Multinode Shepard collocation for the two-asset Black-Scholes equation."))
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in [("run", "solve, measure errors and write all tables"),
                       ("nodes", "write the node set only"),
                       ("reference", "write the finite-difference reference only")]:
        sp = sub.add_parser(name, help=text)
        sp.add_argument("config", type=Path, help="INI configuration file")
        sp.add_argument("--out", type=Path, default=None,
                        help="output directory (default: [output] output in the config)")
        sp.add_argument("--seedless", action="store_true", default=True,
                        help="deterministic generators only (always on; kept for scripts)")
        sp.add_argument("--scheme", choices=("bdf1", "bdf2", "bdf3"), default=None,
                        help="override the time-stepping scheme")
        sp.add_argument("--cache", type=Path, default=None,
                        help="directory for cached reference solutions")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = _stage("experiment-cli", ExperimentConfig.load, args.config)
        if args.scheme:
            config = dataclasses.replace(config, scheme=args.scheme)
        out = args.out or Path(config.output)
        if args.command == "nodes":
            nodes = _stage("geometry-nodes", build_nodes, config)
            out.mkdir(parents=True, exist_ok=True)
            with open(out / "nodes.txt", "w") as fh:
                geometry.write_nodeset(nodes, fh)
            print(f"{nodes.n_interior} interior + origin + {nodes.n_farfield} far-field "
                  f"nodes -> {out / 'nodes.txt'}")
        elif args.command == "reference":
            sol = _stage("fd-reference", reference_solution, config, args.cache)
            write_reference(sol, out)
            print(f"reference N={sol.N}, {len(sol.times)} levels -> {out}")
        else:
            result = run_experiment(config, out, cache_dir=args.cache)
            sys.stdout.write(error_table(result.ms, result.rbf))
    except ExperimentError as exc:
        print(f"mshepard: error {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"mshepard: error [experiment-cli] {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
