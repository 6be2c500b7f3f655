"""Command-line entry point: ``shapfair {exact|estimate|sweep|verify}``."""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .config import ExperimentConfig, build_game, load_config
from .errors import CapacityError, ConfigError, ExternalUtilityError, FormatError, InvalidArgumentError, ShapfairError
from .exact import exact_moments
from .game import load_table, make_synthetic

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_CAPACITY = 3
EXIT_EXTERNAL = 4
EXIT_VERIFY = 5


def _threads(args) -> int:
    env = os.environ.get("SHAPFAIR_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError([f"SHAPFAIR_THREADS must be a positive integer, got {env!r}"]) from None
    else:
        value = args.threads
    if value < 1:
        raise ConfigError([f"thread count must be >= 1, got {value}"])
    return value


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 1 << 64:
            raise ConfigError([f"--seed must be an unsigned 64-bit integer, got {args.seed}"])
        cfg.seed = args.seed
    return cfg


def cmd_exact(args) -> int:
    if args.table:
        game = load_table(args.table)
    elif args.config:
        game = build_game(load_config(args.config))
    else:
        params = json.loads(args.params) if args.params else {}
        if args.n is not None:
            params["n"] = args.n
        if args.builtin == "majority":
            params.setdefault("n", 3)
        game = make_synthetic(args.builtin, **params)
    prof = exact_moments(game)
    doc = {
        "game": game.name,
        "n": game.n,
        "phi": prof.phi.tolist(),
        "variance_uniform": prof.variance_uniform.tolist(),
        "mean_by_cardinality": prof.mean_by_cardinality.tolist(),
        "mean_sq_by_cardinality": prof.mean_sq_by_cardinality.tolist(),
    }
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def cmd_estimate(args) -> int:
    from .experiment import run_estimate

    cfg = _load(args)
    report = run_estimate(cfg, args.out, _threads(args))
    out = args.out or cfg.resolve(cfg.outputs)
    print(f"wrote {len(report['runs'])} runs to {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .experiment import run_sweep

    cfg = _load(args)
    if args.axis is not None:
        if cfg.sweep is None or cfg.sweep.get("axis") != args.axis:
            raise ConfigError([f"sweep: config has no values for axis {args.axis!r}"])
    rows = run_sweep(cfg, args.out, _threads(args))
    out = args.out or cfg.resolve(cfg.outputs)
    print(f"wrote {len(rows)} sweep rows to {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import SUITES

    kwargs = {}
    if args.suite == "chebyshev":
        kwargs["workers"] = _threads(args)
    checks = SUITES[args.suite](**kwargs)
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    print(f"{args.suite}: {len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_OK if not failed else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shapfair", description="Shapley value estimation with fairness diagnostics")
    p.add_argument("--version", action="version", version=f"shapfair {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the configured base seed")
    common.add_argument("--out", default=None, help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, default=1, help="worker threads; SHAPFAIR_THREADS overrides")
    sub = p.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("exact", help="print exact Shapley values and stratum moments")
    src = ex.add_mutually_exclusive_group(required=True)
    src.add_argument("--builtin", help="built-in game family")
    src.add_argument("--table", help="game table file")
    src.add_argument("--config", help="experiment config whose game to use")
    ex.add_argument("--n", type=int, default=None, help="player count for sized families")
    ex.add_argument("--params", default=None, help="JSON object of family parameters")
    ex.set_defaults(func=cmd_exact)

    est = sub.add_parser("estimate", parents=[common], help="run configured estimators and write reports")
    est.add_argument("--config", required=True)
    est.set_defaults(func=cmd_estimate)

    sw = sub.add_parser("sweep", parents=[common], help="vary budget, epsilon1 or alpha; write long CSV")
    sw.add_argument("--config", required=True)
    sw.add_argument("--axis", choices=("budget", "epsilon1", "alpha"), default=None)
    sw.set_defaults(func=cmd_sweep)

    ver = sub.add_parser("verify", parents=[common], help="run a property-check suite")
    ver.add_argument("suite", choices=("oracle", "unbiased", "prop3", "chebyshev", "proposal"))
    ver.set_defaults(func=cmd_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, InvalidArgumentError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except ExternalUtilityError as exc:
        print(f"external utility error: {exc}", file=sys.stderr)
        return EXIT_EXTERNAL
    except ShapfairError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
