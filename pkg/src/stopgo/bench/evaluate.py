"""Balanced-draw evaluation over randomized trials."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Sequence, Union

import numpy as np

from ..dataset import Sample, balanced_test_draw, class_counts
from ..errors import DataError
from .metrics import average_precision

DEFAULT_TRIALS = 10


def trial_seeds(master_seed: int, trials: int = DEFAULT_TRIALS) -> list[int]:
    """Trial ``k`` uses ``SeedSequence([master_seed, k])``'s first 32-bit word."""
    return [int(np.random.SeedSequence([master_seed, k]).generate_state(1)[0]) for k in range(trials)]


@dataclass
class EvalReport:
    task: str
    model_id: str
    trial_aps: list
    mean_ap: float
    seeds: list
    counts: dict

    def to_dict(self) -> dict:
        return asdict(self)


Scorer = Callable[[Sequence[Sample]], np.ndarray]


def evaluate(model: Union[Scorer, object], samples: Sequence[Sample], trials: int = DEFAULT_TRIALS,
             seeds: Sequence[int] | None = None, master_seed: int = 0, model_id: str = "") -> EvalReport:
    """Score every test sample once, then compute AP on ``trials`` balanced draws.

    ``model`` is a StopGoModel or any callable mapping samples to scores.
    """
    if not samples:
        raise DataError("split 'test' has no samples")
    samples = sorted(samples, key=lambda s: s.key)
    seeds = list(seeds) if seeds is not None else trial_seeds(master_seed, trials)
    predict = getattr(model, "predict", model)
    scores = np.asarray(predict(samples), dtype=np.float64)
    index = {s.key: k for k, s in enumerate(samples)}
    aps = []
    for seed in seeds:
        draw = balanced_test_draw(samples, seed)
        rows = [index[s.key] for s in draw]
        aps.append(average_precision(scores[rows], [s.label for s in draw]))
    if not model_id:
        spec = getattr(model, "spec", None)
        model_id = spec.label if spec is not None else getattr(model, "__name__", "scorer")
    return EvalReport(samples[0].task.value, model_id, aps, float(np.mean(aps)), seeds,
                      class_counts(samples))
