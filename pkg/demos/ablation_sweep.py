"""Modality and sequence-length sweeps on a small separable fixture.

Uses a short training schedule so the whole sweep finishes in minutes; the
numbers are for exercising the harness, not for drawing conclusions.
"""
import tempfile
from pathlib import Path

from stopgo.bench.ablation import modality_grid, run_ablation, temporal_grid
from stopgo.bench.fixtures import gen_fixtures
from stopgo.ingest import ingest, load_splits
from stopgo.model import TrainConfig

out = Path(tempfile.mkdtemp(prefix="stopgo_abl_"))
gen_fixtures("separable", 1, out, n_go=30, n_stop=30, n_stand=15, n_walk=15)
tracks, splits = ingest(out / "tracks.jsonl"), load_splits(out / "splits.json")
cfg = TrainConfig(max_epochs=10, learning_rate=1e-3)

for grid in (modality_grid(), temporal_grid()):
    print(run_ablation(grid, tracks, splits, config=cfg, trials=5).table())
    print()
