"""Command line entry point: ``rjmdp {run,eval,validate,seeds} CONFIG``.

Failures exit nonzero and print a one-line JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, NumericalError
from .harness import evaluate_theta, load_config, run_experiment, run_seeds

EXIT_CONFIG = 2
EXIT_RUNTIME = 1
EXIT_RUN_FAILURES = 3


def read_theta(path) -> np.ndarray:
    """Parameters from JSON (a list or ``{"theta": [...]}``) or whitespace/comma separated text."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        return np.array(text.replace(",", " ").split(), dtype=float)
    if isinstance(data, dict):
        data = data["theta"]
    return np.asarray(data, dtype=float).reshape(-1)


def _cmd_run(args):
    config = load_config(args.config)
    if args.output_dir:
        config.output_dir = args.output_dir
    report = run_experiment(config, jobs=args.jobs)
    print(json.dumps({"output_dir": config.output_dir, "aggregates": report.aggregates},
                     sort_keys=True))
    if report.failures:
        _error("RunFailures", f"{len(report.failures)} run(s) failed; see summary.json",
               {"failed": [[r["method"], r["run"]] for r in report.failures]})
        return EXIT_RUN_FAILURES
    return 0


def _cmd_eval(args):
    config = load_config(args.config)
    if args.rollouts:
        config.eval["num_rollouts"] = args.rollouts
    theta = read_theta(args.theta)
    mean, se = evaluate_theta(config, theta)
    print(json.dumps({"theta": theta.tolist(), "J": mean, "J_se": se,
                      "num_rollouts": config.eval["num_rollouts"], "horizon": config.horizon()}))
    return 0


def _cmd_validate(args):
    config = load_config(args.config)
    print(json.dumps({"valid": True, "name": config.name, "runs": config.runs,
                      "methods": [m["name"] for m in config.methods]}))
    return 0


def _cmd_seeds(args):
    config = load_config(args.config)
    for run, seed in enumerate(run_seeds(config)):
        print(run, seed)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rjmdp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every method for every seed")
    p.add_argument("config")
    p.add_argument("--jobs", type=int, default=None, help="parallel runs (default: from config)")
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("eval", help="estimate the expected return of a parameter vector")
    p.add_argument("config")
    p.add_argument("--theta", required=True, help="JSON or plain-text file with the parameters")
    p.add_argument("--rollouts", type=int, default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("validate", help="check a config file without running it")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("seeds", help="print the derived per-run seeds")
    p.add_argument("config")
    p.set_defaults(func=_cmd_seeds)
    return parser


def _error(kind, message, extra=None):
    record = {"error": kind, "message": message}
    if extra:
        record.update(extra)
    print(json.dumps(record, default=str), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, FileNotFoundError, KeyError) as exc:
        _error(type(exc).__name__, str(exc))
        return EXIT_CONFIG
    except NumericalError as exc:
        _error(type(exc).__name__, str(exc), {"state": exc.state})
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - every failure leaves a JSON record
        _error(type(exc).__name__, str(exc))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
