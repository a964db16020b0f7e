"""Command-line entry point.

Every subcommand writes one JSON document to stdout. Exit status is 0 on
success, 1 on runtime failure and 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import config as cfgmod
from . import crlb
from . import rng as streams
from .engine import Simulation, build_topology, summary, summary_path, write_metrics_csv
from .errors import ConfigError, EpsOutOfRangeError, GraphError
from .straggler import from_dict as straggler_from_dict
from .straggler import moments as straggler_moments
from .topology import second_eigenvalue

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, allow_nan=False)
    sys.stdout.write("\n")


def _json_arg(text: str, what: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(what, f"invalid JSON ({exc.msg})") from None


def _load_config(args) -> cfgmod.ExperimentConfig:
    cfg = cfgmod.load(args.config)
    return cfg.with_overrides(
        seed=getattr(args, "seed", None),
        weighting=getattr(args, "weighting", None),
        consensus=getattr(args, "consensus", None),
    )


def _graph_checked(build, cfg):
    # graph-dependent checks only become possible once the topology exists
    try:
        return build(cfg)
    except EpsOutOfRangeError as exc:
        raise ConfigError("mixing.eps", str(exc)) from None
    except GraphError as exc:
        raise ConfigError("topology", str(exc)) from None


def cmd_run(args) -> int:
    cfg = _load_config(args)
    out = args.out or cfg.metrics_path or "metrics.csv"
    sim = _graph_checked(Simulation, cfg)
    result = sim.run()
    write_metrics_csv(result, out, timing=not args.no_timing)
    doc = summary(result, sim.bound_report())
    doc["metrics_path"] = str(out)
    with open(summary_path(out), "w") as fh:
        json.dump(doc, fh, indent=2, allow_nan=False)
        fh.write("\n")
    _emit(doc)
    return EXIT_OK


def cmd_analyze(args) -> int:
    _emit(_graph_checked(Simulation, _load_config(args)).bound_report().to_dict())
    return EXIT_OK


def cmd_moments(args) -> int:
    if args.config:
        cfg = _load_config(args)
        model, n, seed = straggler_from_dict(cfg.straggler), cfg.n, cfg.seed
    else:
        if args.straggler is None or args.n is None:
            raise ConfigError("moments", "give --config, or both --straggler and --n")
        spec = _json_arg(args.straggler, "--straggler")
        if not isinstance(spec, dict):
            raise ConfigError("--straggler", "expected a JSON object")
        try:
            model = straggler_from_dict(spec)
        except ValueError as exc:
            raise ConfigError("--straggler", str(exc)) from None
        n, seed = args.n, args.seed or 0
    mom = straggler_moments(model, n, trials=args.trials, rng=streams.stream(seed, streams.SETUP, 0, 2))
    _emit(mom.to_dict())
    return EXIT_OK


def cmd_crlb(args) -> int:
    if (args.fixed is None) == (args.random is None):
        raise ConfigError("crlb", "give exactly one of --fixed M N or --random <straggler JSON>")
    if args.fixed is not None:
        counts = crlb.Fixed(*args.fixed)
    else:
        spec = _json_arg(args.random, "--random")
        try:
            counts = crlb.Random(straggler_from_dict(spec))
        except (ValueError, AttributeError) as exc:
            raise ConfigError("--random", str(exc)) from None
    setup = crlb.TwoWorkerSetup(args.A, args.B, args.sigma2, counts)
    report = None
    if args.trials:
        report = crlb.simulate_estimators(setup, args.trials, streams.stream(args.seed, streams.EVAL))
    _emit(crlb.table(setup, report))
    return EXIT_OK


def cmd_topology_info(args) -> int:
    graph, mixing = _graph_checked(build_topology, cfgmod.load(args.config))
    _emit({"n": graph.n, "edges": [list(e) for e in graph.edges], "lambda2": second_eigenvalue(mixing)})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csgd", description="Decentralized SGD with stragglers.")
    sub = parser.add_subparsers(dest="command", required=True)

    def overrides(p, *, out=False):
        p.add_argument("--config", required=True, help="experiment JSON file")
        p.add_argument("--seed", type=int)
        p.add_argument("--weighting", choices=("equal", "proportional"))
        p.add_argument("--consensus", metavar="{perfect|approx:<m>}")
        if out:
            p.add_argument("--out", help="metrics CSV path (summary goes next to it)")
            p.add_argument("--no-timing", action="store_true", help="leave wall-clock columns empty")

    overrides(sub.add_parser("run", help="run an experiment"), out=True)
    overrides(sub.add_parser("analyze", help="evaluate the variance bounds and the weighting condition"))

    p = sub.add_parser("moments", help="straggler moments")
    p.add_argument("--config")
    p.add_argument("--straggler", help='model as JSON, e.g. {"type": "constant", "c": 5}')
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int, default=10**6, help="Monte Carlo trials when enumeration is too large")
    p.set_defaults(weighting=None, consensus=None)

    p = sub.add_parser("crlb", help="two-worker Cramer-Rao comparison")
    p.add_argument("--fixed", type=int, nargs=2, metavar=("M", "N"))
    p.add_argument("--random", metavar="STRAGGLER_JSON")
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--A", type=float, default=0.0)
    p.add_argument("--B", type=float, default=0.0)
    p.add_argument("--trials", type=int, default=0, help="Monte Carlo trials (0 skips simulation)")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("topology-info", help="graph edges and second eigenvalue")
    p.add_argument("--config", required=True)
    return parser


COMMANDS = {
    "run": cmd_run,
    "analyze": cmd_analyze,
    "moments": cmd_moments,
    "crlb": cmd_crlb,
    "topology-info": cmd_topology_info,
}


def main(argv=None) -> int:
    level = os.environ.get("CSGD_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure past validation is a runtime error
        logging.getLogger("csgd").debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
