"""Two-stage training.

Stage 1 (raster images only) fits the backbone through a Static classifier on
augmented last frames. Stage 2 freezes the backbone, caches its output maps
and trains everything else on per-epoch class-balanced resamples, keeping the
parameters with the best validation AP.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..autograd import Adam, ops
from ..bench.metrics import average_precision
from ..dataset import Sample, balance_training
from ..errors import ConfigError, DataError, DivergenceError
from .backbone import FeatureStore
from .crops import Augmentation
from .fusion import ModelSpec, StopGoModel, VisualConfig

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    batch_size: int = 8
    max_epochs: int = 50
    patience: int = 5
    stage1_epochs: int = 3
    augment: bool = True
    seed: int = 0
    image_source: str = "auto"  # "features", "raster" or "auto" (features when every track has them)
    channels: tuple = (8, 8, 16, 16, 16)
    reduce_channels: int = 4
    crop_size: int = 224
    full_frame: tuple = (481, 1281)
    roi_output: int = 7
    context_mode: str = "height"

    def __post_init__(self):
        self.channels = tuple(self.channels)
        self.full_frame = tuple(self.full_frame)
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("batch_size, max_epochs and patience must be positive")
        if self.stage1_epochs < 0:
            raise ConfigError("stage1_epochs must be >= 0")
        if self.image_source not in ("auto", "features", "raster"):
            raise ConfigError(f"unknown image_source {self.image_source!r}")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")

    def visual(self) -> VisualConfig:
        return VisualConfig(self.channels, self.reduce_channels, self.crop_size, self.full_frame,
                            self.roi_output, self.context_mode)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"], d["full_frame"] = list(self.channels), list(self.full_frame)
        return d


def _known(cls, d: dict, where: str) -> dict:
    names = {f.name for f in fields(cls)}
    extra = set(d) - names
    if extra:
        raise ConfigError(f"unknown {where} keys: {sorted(extra)}")
    return d


def load_config(path) -> tuple[dict, TrainConfig]:
    """Read ``{"model": {...ModelSpec}, "train": {...TrainConfig}}`` from JSON."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    if not isinstance(raw, dict) or set(raw) - {"model", "train"}:
        raise ConfigError(f"{path}: config must be an object with 'model' and/or 'train'")
    model = _known(ModelSpec, raw.get("model", {}), "model")
    try:
        train = TrainConfig(**_known(TrainConfig, raw.get("train", {}), "train"))
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return model, train


@dataclass
class TrainResult:
    model: StopGoModel
    history: list = field(default_factory=list)
    stage1: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_ap: float = float("nan")


def image_source(spec: ModelSpec, samples: Sequence[Sample], prefer: str = "auto") -> tuple[Optional[str], int]:
    """``("features", D)``, ``("raster", 0)`` or ``(None, 0)`` for image-free specs."""
    if not spec.uses_images:
        return None, 0
    have_features = bool(samples) and all(s.features is not None for s in samples)
    have_images = bool(samples) and all(s.images is not None for s in samples)
    if have_features and prefer in ("auto", "features"):
        return "features", FeatureStore(spec.visual).array(samples[0].features).shape[1]
    if have_images and prefer in ("auto", "raster"):
        return "raster", 0
    wanted = "a feature file or image raster" if prefer == "auto" else f"{prefer} input"
    raise ConfigError(f"modality 'I' needs {wanted} for every track")


def _check_split(samples, name):
    if not samples:
        raise DataError(f"split {name!r} has no samples")


def _batches(n, size):
    for lo in range(0, n, size):
        yield np.arange(lo, min(lo + size, n))


def _step(model, opt, loss, what):
    value = loss.item()
    if not np.isfinite(value):
        raise DivergenceError(f"{what}: non-finite loss {value}")
    opt.zero_grad()
    loss.backward()
    opt.step()
    return value


def _stage1(model: StopGoModel, train: Sequence[Sample], cfg: TrainConfig) -> list:
    """Fit backbone + reduce conv through a Static head on augmented last frames."""
    static = StopGoModel(ModelSpec("static", "I", model.spec.visual, T=1), "raster", 0,
                         np.random.default_rng([cfg.seed, 11]), cfg.visual())
    static.encoder = model.encoder
    params = static.parameters()
    opt = Adam(params, cfg.learning_rate, weight_decay=cfg.weight_decay)
    augment = Augmentation() if cfg.augment else None
    aug_rng = np.random.default_rng([cfg.seed, 12])
    history = []
    for epoch in range(cfg.stage1_epochs):
        draw = [s.last(1) for s in balance_training(train, [cfg.seed, 100, epoch])]
        labels = np.array([s.label for s in draw], dtype=np.float64)
        losses = []
        for idx in _batches(len(draw), cfg.batch_size):
            refs = [r for k in idx for r in static.frame_refs(draw[k])]
            maps = model.encoder.backbone_maps(refs, static._images, augment, aug_rng)
            p = ops.reshape(ops.sigmoid(static.net.fc(model.encoder.encode(maps))), (-1,))
            losses.append(_step(static, opt, ops.bce_loss(p, labels[idx]), "stage 1"))
        history.append({"epoch": epoch + 1, "loss": float(np.mean(losses))})
        log.info("stage 1 epoch %d loss %.4f", epoch + 1, history[-1]["loss"])
    return history


def train_model(spec: ModelSpec, train: Sequence[Sample], val: Sequence[Sample],
                cfg: Optional[TrainConfig] = None) -> TrainResult:
    cfg = cfg or TrainConfig()
    _check_split(train, "train")
    _check_split(val, "val")
    for s in list(train) + list(val):
        if s.T < spec.T:
            raise ConfigError(f"samples have T={s.T}, model needs T={spec.T}")
    train = [s if s.T == spec.T else s.last(spec.T) for s in train]
    val = [s if s.T == spec.T else s.last(spec.T) for s in val]
    if not any(s.label for s in val):
        raise DataError("split 'val' has no positive samples")

    source, dim = image_source(spec, train, cfg.image_source)
    model = StopGoModel(spec, source, dim, np.random.default_rng(cfg.seed), cfg.visual())
    result = TrainResult(model)
    if source == "raster" and cfg.stage1_epochs:
        result.stage1 = _stage1(model, train, cfg)

    model.fit_normalizers(train)
    prep_train = model.prepare(train)
    prep_val = model.prepare(val)
    by_key = {s.key: k for k, s in enumerate(prep_train.samples)}
    params = model.parameters(include_backbone=False)
    opt = Adam(params, cfg.learning_rate, weight_decay=cfg.weight_decay)
    drop_rng = np.random.default_rng([cfg.seed, 1])

    best, best_ap, stale = None, -np.inf, 0
    for epoch in range(cfg.max_epochs):
        draw = balance_training(prep_train.samples, [cfg.seed, epoch])
        order = np.array([by_key[s.key] for s in draw])
        losses = []
        for idx in _batches(len(order), cfg.batch_size):
            rows = order[idx]
            p = model.forward(prep_train, rows, train=True, rng=drop_rng)
            losses.append(_step(model, opt, ops.bce_loss(p, prep_train.labels[rows]), f"epoch {epoch + 1}"))
        val_ap = average_precision(model.predict(prep_val), prep_val.labels)
        result.history.append({"epoch": epoch + 1, "loss": float(np.mean(losses)), "val_ap": val_ap})
        log.info("epoch %d loss %.4f val AP %.4f", epoch + 1, result.history[-1]["loss"], val_ap)
        if val_ap > best_ap:
            best_ap, stale = val_ap, 0
            best = {k: p.data.copy() for k, p in params.items()}
            result.best_epoch = epoch + 1
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    for k, p in params.items():
        p.data = best[k]
    result.best_val_ap = float(best_ap)
    return result
