"""Non-interpolated average precision."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import DataError


def average_precision(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mean of precision@k over the ranks k of the positives.

    Ranking is by descending score; equal scores keep their input order.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ValueError(f"{len(scores)} scores for {len(labels)} labels")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be bits")
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise DataError("average precision is undefined without positive labels")
    order = np.argsort(-scores, kind="stable")
    hits = labels[order].astype(np.float64)
    precision = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float((precision * hits).sum() / n_pos)
