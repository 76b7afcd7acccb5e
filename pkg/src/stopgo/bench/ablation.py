"""Modality and sequence-length ablation sweeps."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from ..dataset import SampleSpec, build_samples
from ..errors import StopGoError
from ..extract import EventKind
from ..model.fusion import ModelSpec
from ..model.train import TrainConfig, train_model
from ..schema import PedestrianTrack, SplitName
from .evaluate import DEFAULT_TRIALS, evaluate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AblationCell:
    label: str
    spec: ModelSpec


@dataclass
class AblationGrid:
    cells: list = field(default_factory=list)
    kind: str = "modality"

    def __len__(self) -> int:
        return len(self.cells)


def modality_grid(base: Optional[ModelSpec] = None) -> AblationGrid:
    """Rows S, M, I(CC), I(RC), IM(CC), IM(RC), MBS, IMBS(CC), IMBS(RC).

    Image-only rows use the Video family; the rest are Hybrid.
    """
    base = base or ModelSpec()
    rows = [("S", "hybrid", "S", "rc"), ("M", "hybrid", "M", "rc"), ("I (CC)", "video", "I", "cc"),
            ("I (RC)", "video", "I", "rc"), ("IM (CC)", "hybrid", "IM", "cc"),
            ("IM (RC)", "hybrid", "IM", "rc"), ("MBS", "hybrid", "MBS", "rc"),
            ("IMBS (CC)", "hybrid", "IMBS", "cc"), ("IMBS (RC)", "hybrid", "IMBS", "rc")]
    return AblationGrid([AblationCell(label, replace(base, family=fam, modalities=mods, visual=vis))
                         for label, fam, mods, vis in rows], "modality")


def temporal_grid(Ts: Sequence[int] = (1, 5, 10, 15), models: Sequence[ModelSpec] | None = None) -> AblationGrid:
    """Each model at every sequence length ``T``; defaults to Video I(RC) and Hybrid IMBS(RC)."""
    models = models or [ModelSpec("video", "I", "rc"), ModelSpec("hybrid", "IMBS", "rc")]
    cells = [AblationCell(f"{m.label} T={T}", replace(m, T=T)) for m in models for T in Ts]
    return AblationGrid(cells, "temporal")


@dataclass
class AblationResult:
    tasks: list
    rows: list  # {"label", "spec", <task>: mean AP or None, "<task>_error": message}

    def to_dict(self) -> dict:
        return {"tasks": self.tasks, "rows": self.rows}

    def table(self) -> str:
        header = ["Model"] + [t.capitalize() for t in self.tasks]
        body = [[r["label"]] + ["fail" if r.get(t) is None else f"{100 * r[t]:.1f}" for t in self.tasks]
                for r in self.rows]
        widths = [max(len(line[i]) for line in [header] + body) for i in range(len(header))]
        lines = ["  ".join([line[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(line[1:], widths[1:])])
                 for line in [header] + body]
        if lines:
            lines.insert(1, "-" * len(lines[0]))
        return "\n".join(lines)


def _split(tracks, splits, name):
    ids = splits[name].clip_ids
    return [t for t in tracks if t.clip_id in ids]


def run_ablation(grid: AblationGrid, tracks: Sequence[PedestrianTrack], splits: dict,
                 tasks: Sequence[str] = ("go", "stop"), config: Optional[TrainConfig] = None,
                 sample_spec: Optional[SampleSpec] = None, trials: int = DEFAULT_TRIALS,
                 master_seed: int = 0) -> AblationResult:
    """Train and evaluate every cell per task with shared seeds; failures are recorded per cell."""
    config = config or TrainConfig()
    base = sample_spec or SampleSpec()
    parts = {n: _split(tracks, splits, n) for n in SplitName}
    cache = {}
    rows = [{"label": c.label, "spec": c.spec.to_dict()} for c in grid.cells]
    for task in tasks:
        task = EventKind.parse(task).value
        for row, cell in zip(rows, grid.cells):
            try:
                key = (task, cell.spec.T)
                if key not in cache:
                    ss = replace(base, task=task, T=cell.spec.T)
                    cache[key] = {n: build_samples(v, ss) for n, v in parts.items()}
                data = cache[key]
                result = train_model(cell.spec, data[SplitName.TRAIN], data[SplitName.VAL], config)
                report = evaluate(result.model, data[SplitName.TEST], trials=trials,
                                  master_seed=master_seed, model_id=cell.label)
                row[task] = report.mean_ap
            except StopGoError as exc:
                log.warning("ablation cell %s (%s) failed: %s", cell.label, task, exc)
                row[task] = None
                row[f"{task}_error"] = str(exc)
    return AblationResult([EventKind.parse(t).value for t in tasks], rows)
