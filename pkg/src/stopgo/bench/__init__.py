"""Evaluation protocol, ablation sweeps (``bench.ablation``) and synthetic fixtures."""
from .evaluate import EvalReport, evaluate, trial_seeds
from .fixtures import RECIPES, gen_fixtures
from .metrics import average_precision

__all__ = ["EvalReport", "evaluate", "trial_seeds", "RECIPES", "gen_fixtures", "average_precision"]
