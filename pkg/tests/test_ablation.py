from dataclasses import replace

import pytest

from stopgo.bench.ablation import AblationCell, AblationGrid, modality_grid, run_ablation, temporal_grid
from stopgo.bench.evaluate import evaluate
from stopgo.bench.fixtures import gen_fixtures
from stopgo.dataset import SampleSpec, build_samples
from stopgo.ingest import ingest, load_splits
from stopgo.model import ModelSpec, TrainConfig, train_model
from stopgo.schema import SplitName

FAST = TrainConfig(max_epochs=2, patience=2, learning_rate=1e-3)


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    out = tmp_path_factory.mktemp("abl")
    gen_fixtures("separable", 2, out, n_go=12, n_stop=12, n_stand=6, n_walk=6)
    return ingest(out / "tracks.jsonl"), load_splits(out / "splits.json")


def test_modality_grid_rows():
    grid = modality_grid()
    assert [c.label for c in grid.cells] == ["S", "M", "I (CC)", "I (RC)", "IM (CC)", "IM (RC)", "MBS",
                                             "IMBS (CC)", "IMBS (RC)"]
    fam = {c.label: (c.spec.family, c.spec.modalities, c.spec.visual) for c in grid.cells}
    assert fam["I (CC)"] == ("video", "I", "cc") and fam["IMBS (RC)"] == ("hybrid", "IMBS", "rc")
    assert all(c.spec.T == 5 for c in grid.cells)


def test_temporal_grid_rows():
    grid = temporal_grid()
    assert len(grid) == 8
    assert [c.spec.T for c in grid.cells] == [1, 5, 10, 15] * 2
    assert {c.spec.family for c in grid.cells[:4]} == {"video"} and {c.spec.family for c in grid.cells[4:]} == {"hybrid"}
    assert len(temporal_grid((2, 3), [ModelSpec("hybrid", "MB")])) == 2


def test_empty_grid(data):
    result = run_ablation(AblationGrid([]), *data, config=FAST)
    assert result.rows == [] and result.tasks == ["go", "stop"]
    assert result.table().splitlines()[0].split() == ["Model", "Go", "Stop"]


def test_single_cell_matches_direct_run(data):
    tracks, splits = data
    spec = ModelSpec("hybrid", "MB")
    result = run_ablation(AblationGrid([AblationCell("MB", spec)]), tracks, splits, ["go"], FAST, trials=3)
    parts = {n: build_samples([t for t in tracks if t.clip_id in splits[n].clip_ids], SampleSpec())
             for n in SplitName}
    direct = train_model(spec, parts[SplitName.TRAIN], parts[SplitName.VAL], FAST)
    report = evaluate(direct.model, parts[SplitName.TEST], trials=3)
    assert result.rows[0]["go"] == report.mean_ap
    assert "MB" in result.table()


def test_failed_cell_is_recorded(data):
    tracks, splits = data
    bare = [replace(t, features=None) for t in tracks]
    grid = AblationGrid([AblationCell("I", ModelSpec("video", "I")), AblationCell("M", ModelSpec("hybrid", "M"))])
    result = run_ablation(grid, bare, splits, ["stop"], FAST, trials=2)
    assert result.rows[0]["stop"] is None and "'I'" in result.rows[0]["stop_error"]
    assert result.rows[1]["stop"] is not None
    assert result.table().splitlines()[2].split()[-1] == "fail"
