"""Scenario runner: configs, recipes, artifact production and the CLI."""

from .config import ConfigError, RunConfig, load_config, parse_config
from .execute import run
from .recipes import RECIPES, expand_recipe, recipe_ids

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "run", "RECIPES", "expand_recipe", "recipe_ids"]
