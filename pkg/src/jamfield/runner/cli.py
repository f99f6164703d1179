"""``jamfield`` command line: run, recipes, validate."""

from __future__ import annotations

import argparse
import json
import os
import sys

from ..core import validate_scenario
from .config import ConfigError, RunConfig, load_config, parse_config
from .execute import run
from .recipes import RECIPES, expand_recipe, recipe_ids

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_DOMAIN = 3


def _threads(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("JAMFIELD_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"JAMFIELD_THREADS: {env!r} is not an integer") from None
    return 1


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jamfield", description="Ultrasonic jammer field and capture simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a config file or a named recipe")
    src = p_run.add_mutually_exclusive_group(required=True)
    src.add_argument("config", nargs="?", help="JSON run configuration")
    src.add_argument("--recipe", choices=recipe_ids(), help="named recipe instead of a config file")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out-dir", default="out", help="artifact directory (default: out)")
    p_run.add_argument("--threads", type=_positive_int, default=None,
                       help="worker threads; wall time only, results never change (env: JAMFIELD_THREADS)")

    p_rec = sub.add_parser("recipes", help="list the named recipes")
    p_rec.add_argument("--json", action="store_true", help="machine-readable listing")

    p_val = sub.add_parser("validate", help="check a config file without running it")
    p_val.add_argument("config")
    return parser


def _resolve(raw: dict, seed: int | None) -> dict:
    """Expand a recipe-only config (``{"recipe": id, "seed": n}``) into a full one."""
    if isinstance(raw, dict) and "recipe" in raw and "scenario" not in raw:
        extra = set(raw) - {"recipe", "seed", "name"}
        if extra:
            raise ConfigError(f"{sorted(extra)[0]}: unknown key beside a bare recipe")
        if raw["recipe"] not in recipe_ids():
            raise ConfigError(f"recipe: {raw['recipe']!r} is not one of {', '.join(recipe_ids())}")
        return expand_recipe(raw["recipe"], seed if seed is not None else int(raw.get("seed", 0)))
    return raw


def _load(args) -> RunConfig:
    if getattr(args, "recipe", None):
        raw = expand_recipe(args.recipe, args.seed if args.seed is not None else 0)
    else:
        raw = _resolve(load_config(args.config), getattr(args, "seed", None))
    cfg = parse_config(raw, getattr(args, "seed", None))
    problems = validate_scenario(cfg.scenario)
    if problems:
        raise ConfigError("scenario: " + "; ".join(problems))
    return cfg


def _guarded(fn):
    """Run ``fn``; map schema errors to exit 2 and numerical-domain errors to exit 3."""
    try:
        return fn()
    except ConfigError as exc:
        print(f"jamfield: schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (ValueError, ArithmeticError) as exc:
        print(f"jamfield: simulation error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


def cmd_run(args) -> int:
    def go():
        threads = _threads(args.threads)
        cfg = _load(args)
        for path in run(cfg, args.out_dir, threads):
            print(path)
        return EXIT_OK
    return _guarded(go)


def cmd_recipes(args) -> int:
    if args.json:
        print(json.dumps([{"id": r.id, "description": r.description, "artifacts": list(r.artifacts)}
                          for r in RECIPES], indent=2))
    else:
        width = max(len(r.id) for r in RECIPES)
        for r in RECIPES:
            print(f"{r.id:<{width}}  {r.description}")
    return EXIT_OK


def cmd_validate(args) -> int:
    def go():
        cfg = _load(args)
        print(f"ok: {cfg.name} ({len(cfg.outputs)} outputs)")
        return EXIT_OK
    return _guarded(go)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"run": cmd_run, "recipes": cmd_recipes, "validate": cmd_validate}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
