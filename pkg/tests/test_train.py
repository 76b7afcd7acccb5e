import numpy as np
import pytest

from stopgo.autograd import ops
from stopgo.bench.metrics import average_precision
from stopgo.dataset import SampleSpec
from stopgo.errors import ConfigError, DataError, DivergenceError
from stopgo.model import ModelSpec, TrainConfig, load_config, train_model
from stopgo.schema import SplitName

from conftest import fixture_split

TR, VA, TE = SplitName.TRAIN, SplitName.VAL, SplitName.TEST
SMALL = dict(n_go=16, n_stop=16, n_stand=8, n_walk=8)


@pytest.fixture(scope="module")
def clean(tmp_path_factory):
    return fixture_split(tmp_path_factory.mktemp("clean"), noise=0.0, **SMALL)


@pytest.fixture(scope="module")
def raster(tmp_path_factory):
    return fixture_split(tmp_path_factory.mktemp("raster"), frame_hw=(64, 160), raster=True,
                         sample_spec=SampleSpec(min_box_width=0), n_go=6, n_stop=6, n_stand=3, n_walk=3)


RASTER_CFG = dict(crop_size=32, full_frame=(64, 160), channels=(4, 4, 4, 4, 4), reduce_channels=2,
                  image_source="raster", batch_size=16)


def test_noise_free_cues_are_learned(clean):
    cfg = TrainConfig(learning_rate=3e-3, max_epochs=30, patience=30)
    result = train_model(ModelSpec("hybrid", "MB"), clean[TR], clean[VA], cfg)
    assert result.best_val_ap >= 0.95
    train = [s.last(5) for s in clean[TR]]
    assert average_precision(result.model.predict(train), [s.label for s in train]) >= 0.95


def test_training_is_deterministic(clean):
    cfg = TrainConfig(learning_rate=1e-3, max_epochs=3, patience=3)
    a = train_model(ModelSpec("hybrid", "MBS"), clean[TR], clean[VA], cfg)
    b = train_model(ModelSpec("hybrid", "MBS"), clean[TR], clean[VA], cfg)
    assert a.history == b.history
    pa, pb = a.model.predict(clean[TE]), b.model.predict(clean[TE])
    assert np.array_equal(pa, pb)


def test_best_epoch_parameters_are_restored(clean):
    cfg = TrainConfig(learning_rate=1e-3, max_epochs=4, patience=4)
    result = train_model(ModelSpec("hybrid", "M"), clean[TR], clean[VA], cfg)
    val = [s.last(5) for s in clean[VA]]
    ap = average_precision(result.model.predict(val), [s.label for s in val])
    assert ap == pytest.approx(result.best_val_ap, abs=1e-12)
    assert result.history[result.best_epoch - 1]["val_ap"] == result.best_val_ap


def test_early_stopping_respects_patience(clean, monkeypatch):
    import stopgo.model.train as train_mod
    monkeypatch.setattr(train_mod, "average_precision", lambda s, l: 0.5)
    result = train_model(ModelSpec("hybrid", "M"), clean[TR], clean[VA],
                         TrainConfig(max_epochs=20, patience=2))
    assert len(result.history) == 3 and result.best_epoch == 1


def test_stage2_leaves_backbone_untouched(raster):
    def backbone_after(max_epochs):
        cfg = TrainConfig(max_epochs=max_epochs, patience=5, stage1_epochs=1, **RASTER_CFG)
        res = train_model(ModelSpec("video", "I", "cc", T=2), raster[TR], raster[VA], cfg)
        return res, {n: p.data.copy() for n, p in res.model.parameters().items() if n.startswith("visual.backbone.")}

    r1, one = backbone_after(1)
    r3, three = backbone_after(3)
    assert len(r1.stage1) == 1 and len(r3.history) >= 2
    assert one and one.keys() == three.keys() and all(np.array_equal(one[k], three[k]) for k in one)


@pytest.mark.parametrize("visual", ["cb", "cc", "rc"])
def test_raster_variants_train(raster, visual):
    cfg = TrainConfig(max_epochs=1, stage1_epochs=1, **RASTER_CFG)
    res = train_model(ModelSpec("hybrid", "IMB", visual, T=2), raster[TR], raster[VA], cfg)
    p = res.model.predict(raster[TE])
    assert p.shape == (len(raster[TE]),) and np.all(np.isfinite(p))


def test_stage1_skipped_for_precomputed_features(clean):
    res = train_model(ModelSpec("video", "I", "rc"), clean[TR], clean[VA],
                      TrainConfig(max_epochs=1, stage1_epochs=3))
    assert res.stage1 == [] and res.model.encoder is None


def test_divergence_is_reported(clean, monkeypatch):
    import stopgo.model.train as train_mod
    real = ops.bce_loss
    monkeypatch.setattr(train_mod.ops, "bce_loss", lambda p, y: real(p, y) * float("nan"))
    with pytest.raises(DivergenceError, match="non-finite"):
        train_model(ModelSpec("hybrid", "M"), clean[TR], clean[VA], TrainConfig(max_epochs=1))


def test_empty_and_unusable_splits(clean):
    with pytest.raises(DataError, match="'train'"):
        train_model(ModelSpec("hybrid", "M"), [], clean[VA])
    negatives = [s for s in clean[VA] if not s.label]
    with pytest.raises(DataError, match="positive"):
        train_model(ModelSpec("hybrid", "M"), clean[TR], negatives)
    with pytest.raises(ConfigError, match="T=5"):
        train_model(ModelSpec("hybrid", "M", T=8), clean[TR], clean[VA])


def test_modality_without_source_is_config_error(clean):
    with pytest.raises(ConfigError, match="'I'"):
        train_model(ModelSpec("video", "I"), clean[TR], clean[VA], TrainConfig(image_source="raster"))


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(image_source="pixels")
    path = tmp_path / "c.json"
    path.write_text('{"model": {"modalities": "MB"}, "train": {"max_epochs": 7}}')
    model, train = load_config(path)
    assert model == {"modalities": "MB"} and train.max_epochs == 7 and train.batch_size == 8
    path.write_text('{"train": {"epochs": 7}}')
    with pytest.raises(ConfigError, match="epochs"):
        load_config(path)
