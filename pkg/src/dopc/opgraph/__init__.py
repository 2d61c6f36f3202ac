from .graph import OpGraph, Plan, and_or_report, build_op_graph, select_plan
from .lower import lower, used_ops
from .recipes import Recipe, load_recipe_files, parse_recipes

__all__ = [
    "OpGraph", "Plan", "Recipe", "and_or_report", "build_op_graph", "load_recipe_files",
    "lower", "parse_recipes", "select_plan", "used_ops",
]
