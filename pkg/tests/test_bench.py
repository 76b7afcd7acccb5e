import json

import numpy as np
import pytest

from stopgo.bench.evaluate import evaluate, trial_seeds
from stopgo.bench.fixtures import TABLE1_TARGET, gen_fixtures
from stopgo.bench.metrics import average_precision
from stopgo.dataset import SampleSpec, build_samples
from stopgo.errors import ConfigError, DataError
from stopgo.extract import dataset_stats
from stopgo.ingest import ingest
from stopgo.model.features import behavior_features, motion_features
from stopgo.schema import SplitName, validate_track

from conftest import fixture_split
from oracles import ap_by_cutoffs


# -- average precision ---------------------------------------------------------

def test_ap_worked_examples():
    assert average_precision([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0]) == pytest.approx(5 / 6)
    assert average_precision([0.1, 0.9], [1, 0]) == 0.5
    assert average_precision([0.5, 0.5, 0.5], [0, 1, 0]) == 0.5     # ties keep input order
    assert average_precision([3, 2, 1], [1, 1, 1]) == 1.0


def test_ap_matches_cutoff_oracle():
    rng = np.random.default_rng(0)
    for _ in range(300):
        n = int(rng.integers(1, 60))
        labels = rng.integers(0, 2, n)
        labels[rng.integers(n)] = 1
        scores = rng.integers(0, 8, n) / 8.0    # plenty of ties
        assert average_precision(scores, labels) == pytest.approx(float(ap_by_cutoffs(scores.tolist(), labels.tolist())),
                                                                  abs=1e-12)


def test_ap_invariant_under_monotone_transform():
    rng = np.random.default_rng(1)
    s, y = rng.normal(size=200), rng.integers(0, 2, 200)
    assert average_precision(s, y) == pytest.approx(average_precision(np.exp(3 * s) + 7, y), abs=1e-15)


def test_ap_tie_sensitivity_is_bounded():
    """Any reordering inside tied groups lands between the pessimistic and optimistic orders."""
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(2, 40))
        scores, labels = rng.integers(0, 4, n).astype(float), rng.integers(0, 2, n)
        labels[0] = 1
        worst_order = np.lexsort((labels, -scores))       # negatives first within ties
        best_order = np.lexsort((-labels, -scores))
        lo = average_precision(np.arange(n, 0, -1), labels[worst_order])
        hi = average_precision(np.arange(n, 0, -1), labels[best_order])
        for _ in range(5):
            perm = rng.permutation(n)
            assert lo - 1e-12 <= average_precision(scores[perm], labels[perm]) <= hi + 1e-12


def test_ap_errors():
    with pytest.raises(DataError):
        average_precision([0.1, 0.2], [0, 0])
    with pytest.raises(ValueError):
        average_precision([0.1], [1, 0])
    with pytest.raises(ValueError):
        average_precision([0.1, 0.2], [1, 2])


# -- evaluation protocol ----------------------------------------------------------

@pytest.fixture(scope="module")
def test_split(tmp_path_factory):
    return fixture_split(tmp_path_factory.mktemp("sep"), n_go=30, n_stop=30, n_stand=20, n_walk=20)[SplitName.TEST]


def test_trial_seeds_are_fixed():
    import numpy as np
    assert trial_seeds(0, 3) == [int(np.random.SeedSequence([0, k]).generate_state(1)[0]) for k in range(3)]
    assert trial_seeds(0, 10)[:3] == trial_seeds(0, 3) and trial_seeds(1, 3) != trial_seeds(0, 3)


def _oracle_scorer(samples):
    return np.array([float(s.label) for s in samples])


def test_perfect_and_random_scorers(test_split):
    perfect = evaluate(_oracle_scorer, test_split)
    assert perfect.trial_aps == [1.0] * 10 and perfect.mean_ap == 1.0
    pos, neg = perfect.counts["positive"], perfect.counts["negative"]
    assert pos > 0 and neg > pos

    def coin(samples):
        return np.random.default_rng(7).random(len(samples))
    report = evaluate(coin, test_split, trials=50)
    assert 0.4 < report.mean_ap < 0.65
    assert report.mean_ap == pytest.approx(0.5 + 0.5 / pos * 0.5, abs=0.1)


def test_evaluation_is_deterministic_and_order_free(test_split):
    def score(samples):
        return np.array([s.frames[-1].box.x_center % 17 for s in samples])
    a = evaluate(score, test_split, master_seed=3)
    b = evaluate(score, list(reversed(test_split)), master_seed=3)
    assert a.to_dict() == b.to_dict()
    assert evaluate(score, test_split, master_seed=4).seeds != a.seeds


def test_evaluate_empty_split():
    with pytest.raises(DataError):
        evaluate(_oracle_scorer, [])


# -- fixtures ----------------------------------------------------------------------

@pytest.mark.parametrize("recipe", ["random", "separable", "table1"])
def test_fixtures_are_byte_identical(tmp_path, recipe):
    opts = {"separable": dict(n_go=4, n_stop=4, n_stand=2, n_walk=2)}.get(recipe, {})
    gen_fixtures(recipe, 5, tmp_path / "a", **opts)
    gen_fixtures(recipe, 5, tmp_path / "b", **opts)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    tracks = ingest(tmp_path / "a" / "tracks.jsonl")
    assert all(validate_track(t) == [] for t in tracks)


def test_unknown_recipe(tmp_path):
    with pytest.raises(ConfigError):
        gen_fixtures("gaussian", 0, tmp_path)


def test_table1_fixture_counts(tmp_path):
    manifest = gen_fixtures("table1", 0, tmp_path)
    row = dataset_stats(ingest(tmp_path / "tracks.jsonl"))
    assert manifest["expected"] == TABLE1_TARGET
    assert (row.go, row.go_events, row.stop, row.stop_events, row.stand, row.walk) == (88, 101, 100, 114, 184, 713)


def _flat(samples):
    x = np.array([np.concatenate([motion_features(s).ravel(), behavior_features(s).ravel()]) for s in samples])
    return x, np.array([s.label for s in samples])


@pytest.mark.parametrize("task", ["go", "stop"])
def test_separable_cues_are_linearly_recoverable(tmp_path, task):
    """A least-squares probe on motion + behavior reaches high AP."""
    data = fixture_split(tmp_path, sample_spec=SampleSpec(task=task))
    xtr, ytr = _flat(data[SplitName.TRAIN])
    xte, yte = _flat(data[SplitName.TEST])
    mu, sd = xtr.mean(0), xtr.std(0) + 1e-9
    design = np.c_[(xtr - mu) / sd, np.ones(len(xtr))]
    w, *_ = np.linalg.lstsq(design, ytr - ytr.mean(), rcond=None)
    scores = np.c_[(xte - mu) / sd, np.ones(len(xte))] @ w
    assert average_precision(scores, yte) > 0.9


def test_separable_manifest(tmp_path):
    m = gen_fixtures("separable", 0, tmp_path, n_go=3, n_stop=3, n_stand=1, n_walk=1)
    assert m == json.loads((tmp_path / "manifest.json").read_text())
    assert m["tracks"] == 8
