"""Static / Video / Hybrid stop-go classifiers.

Hybrid fusion runs the image, motion and behavior sequences through their own
LSTMs and merges the final hidden states gradually: each fusion stage
concatenates the previous stage's output with that stage's modality
encodings and applies a dense block (affine, relu, dropout). Stages with no
input at all are skipped. A three-layer MLP head yields the probability.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..autograd import LSTM, Dense, Module, Tensor, load_checkpoint, ops, save_checkpoint
from ..dataset import Sample
from ..errors import ConfigError
from .backbone import FeatureStore, FrameRef, ImageStore, VisualEncoder
from .features import (
    BEHAVIOR_DIM, MOTION_DIM, SCENE_DIM, Standardizer, behavior_features, motion_features,
    scene_features,
)

FAMILIES = ("static", "video", "hybrid")
MODALITY_ORDER = "IMBS"


def _canonical(modalities: str) -> str:
    mods = modalities.upper()
    bad = set(mods) - set(MODALITY_ORDER)
    if bad or not mods:
        raise ConfigError(f"modalities must be a non-empty subset of IMBS, got {modalities!r}")
    return "".join(m for m in MODALITY_ORDER if m in mods)


@dataclass(frozen=True)
class ModelSpec:
    family: str = "hybrid"
    modalities: str = "IMBS"
    visual: str = "rc"
    T: int = 5
    hidden_i: int = 256
    hidden_m: int = 64
    hidden_b: int = 16
    embed: tuple = (256, 128, 64)
    head: tuple = (86, 86)
    dropout: float = 0.2
    fusion: tuple = ("IM", "B", "S")

    def __post_init__(self):
        object.__setattr__(self, "family", self.family.lower())
        object.__setattr__(self, "modalities", _canonical(self.modalities))
        object.__setattr__(self, "visual", self.visual.lower())
        object.__setattr__(self, "embed", tuple(self.embed))
        object.__setattr__(self, "head", tuple(self.head))
        object.__setattr__(self, "fusion", tuple(_canonical(g) for g in self.fusion))
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown model family {self.family!r}")
        if self.visual not in ("cb", "cc", "rc"):
            raise ConfigError(f"unknown visual variant {self.visual!r}")
        if self.family in ("static", "video") and self.modalities != "I":
            raise ConfigError(f"{self.family} models use images only, got {self.modalities!r}")
        if self.family == "hybrid" and self.modalities == "I":
            raise ConfigError("hybrid models need at least one of M, B, S")
        if "".join(sorted("".join(self.fusion), key=MODALITY_ORDER.index)) != MODALITY_ORDER:
            raise ConfigError(f"fusion stages must partition IMBS, got {self.fusion}")
        if len(self.fusion) != len(self.embed):
            raise ConfigError("one embedding size per fusion stage is required")
        if int(self.T) != self.T or self.T < 1:
            raise ConfigError(f"T must be a positive integer, got {self.T}")
        if self.family == "static" and self.T != 1:
            object.__setattr__(self, "T", 1)

    @property
    def uses_images(self) -> bool:
        return "I" in self.modalities

    @property
    def label(self) -> str:
        name = f"{self.family.capitalize()} {self.modalities}"
        return f"{name} ({self.visual.upper()})" if self.uses_images else name

    def to_dict(self) -> dict:
        d = asdict(self)
        d["embed"], d["head"], d["fusion"] = list(self.embed), list(self.head), list(self.fusion)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        for key in ("embed", "head", "fusion"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


class FusionNet(Module):
    """The trainable classifier on top of per-frame inputs."""

    def __init__(self, spec: ModelSpec, visual_dim: int, rng: np.random.Generator):
        self.spec = spec
        mods = spec.modalities
        if spec.family == "static":
            self.fc = Dense(visual_dim, 1, rng)
            return
        width = {}
        if "I" in mods:
            self.lstm_i = LSTM(visual_dim, spec.hidden_i, rng)
            width["I"] = spec.hidden_i
        if spec.family == "hybrid":
            if "M" in mods:
                self.lstm_m = LSTM(MOTION_DIM, spec.hidden_m, rng)
                width["M"] = spec.hidden_m
            if "B" in mods:
                self.lstm_b = LSTM(BEHAVIOR_DIM, spec.hidden_b, rng)
                width["B"] = spec.hidden_b
            if "S" in mods:
                width["S"] = SCENE_DIM
            self.stage_inputs = []
            blocks = []
            prev = 0
            prev_name = None
            for k, (group, size) in enumerate(zip(spec.fusion, spec.embed)):
                names = ([prev_name] if prev_name else []) + [m for m in group if m in mods]
                if not names:
                    continue
                n_in = prev + sum(width[m] for m in group if m in mods)
                blocks.append(Dense(n_in, size, rng))
                self.stage_inputs.append((f"d{k + 1}", names))
                prev, prev_name = size, f"d{k + 1}"
            self.blocks = blocks
            n_feat = prev
        else:
            n_feat = spec.hidden_i
        sizes = (n_feat,) + spec.head
        self.head_layers = [Dense(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]
        self.out = Dense(sizes[-1], 1, rng)

    def describe(self) -> list[tuple[str, list[str]]]:
        """Fusion stages as ``(name, inputs)``; empty for non-hybrid families."""
        return [(n, list(i)) for n, i in getattr(self, "stage_inputs", [])]

    def _dense(self, layer, x, train, rng):
        return ops.dropout(ops.relu(layer(x)), self.spec.dropout, train, rng)

    def __call__(self, inputs: dict, train: bool = False,
                 rng: Optional[np.random.Generator] = None) -> Tensor:
        """``inputs``: ``I``/``M``/``B`` as lists of ``[N, d]`` tensors per step, ``S`` as ``[N, 6]``."""
        spec = self.spec
        for m in spec.modalities:
            if m not in inputs:
                raise ConfigError(f"missing modality {m!r} for {spec.label}")
        if spec.family == "static":
            logit = self.fc(inputs["I"][-1])
        else:
            enc = {}
            if "I" in spec.modalities:
                enc["I"] = self.lstm_i(inputs["I"])
            if spec.family == "hybrid":
                if "M" in spec.modalities:
                    enc["M"] = self.lstm_m(inputs["M"])
                if "B" in spec.modalities:
                    enc["B"] = self.lstm_b(inputs["B"])
                if "S" in spec.modalities:
                    enc["S"] = inputs["S"]
                x = None
                for block, (name, names) in zip(self.blocks, self.stage_inputs):
                    parts = [x if n.startswith("d") else enc[n] for n in names]
                    x = self._dense(block, ops.concat(parts, axis=1), train, rng)
            else:
                x = enc["I"]
            for layer in self.head_layers:
                x = self._dense(layer, x, train, rng)
            logit = self.out(x)
        return ops.reshape(ops.sigmoid(logit), (-1,))


@dataclass
class VisualConfig:
    """Raster backbone geometry; ignored when precomputed features are used."""

    channels: tuple = (8, 8, 16, 16, 16)
    reduce_channels: int = 4
    crop_size: int = 224
    full_frame: tuple = (481, 1281)
    roi_output: int = 7
    context_mode: str = "height"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"], d["full_frame"] = list(self.channels), list(self.full_frame)
        return d


@dataclass
class Prepared:
    """Model-ready arrays for a list of samples."""

    samples: list
    labels: np.ndarray
    arrays: dict = field(default_factory=dict)  # "I" (features or maps), "M", "B", "S"


class StopGoModel:
    """Visual encoder, fusion network and input normalizers as one unit."""

    def __init__(self, spec: ModelSpec, source: Optional[str], visual_dim: int,
                 rng: np.random.Generator, visual: Optional[VisualConfig] = None):
        self.spec = spec
        self.source = source if spec.uses_images else None
        self.visual_config = visual or VisualConfig()
        self.encoder = None
        if self.source == "raster":
            vc = self.visual_config
            self.encoder = VisualEncoder(spec.visual, rng, vc.channels, vc.reduce_channels,
                                         vc.crop_size, vc.full_frame, vc.roi_output, vc.context_mode)
            visual_dim = self.encoder.out_dim
        self.visual_dim = visual_dim
        self.net = FusionNet(spec, visual_dim, rng)
        self.norms = {}
        self._features = FeatureStore(spec.visual)
        self._images = ImageStore()
        self._map_cache = {}

    # -- parameters --------------------------------------------------------
    def parameters(self, include_backbone: bool = True) -> dict[str, Tensor]:
        params = {}
        if self.encoder is not None:
            for name, p in self.encoder.named_parameters():
                if include_backbone or not name.startswith("backbone."):
                    params["visual." + name] = p
        for name, p in self.net.named_parameters():
            params["net." + name] = p
        return params

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {k: p.data for k, p in self.parameters().items()}
        for key, norm in self.norms.items():
            arrays[f"norm.{key}.mean"] = norm.mean
            arrays[f"norm.{key}.std"] = norm.std
        return arrays

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        for name, p in params.items():
            if name not in arrays:
                raise ConfigError(f"checkpoint lacks parameter {name!r}")
            if arrays[name].shape != p.shape:
                raise ConfigError(f"checkpoint shape mismatch for {name!r}")
            p.data = np.array(arrays[name], dtype=np.float64)
        for key in {k.split(".")[1] for k in arrays if k.startswith("norm.")}:
            self.norms[key] = Standardizer(arrays[f"norm.{key}.mean"], arrays[f"norm.{key}.std"])
        self._map_cache.clear()

    def meta(self) -> dict:
        return {"spec": self.spec.to_dict(), "source": self.source, "visual_dim": self.visual_dim,
                "visual_config": self.visual_config.to_dict()}

    def save(self, path, extra: Optional[dict] = None) -> None:
        meta = self.meta()
        if extra:
            meta["extra"] = extra
        save_checkpoint(path, self.state_arrays(), meta)

    @classmethod
    def load(cls, path) -> "StopGoModel":
        arrays, meta = load_checkpoint(path)
        vc = meta["visual_config"]
        visual = VisualConfig(tuple(vc["channels"]), vc["reduce_channels"], vc["crop_size"],
                              tuple(vc["full_frame"]), vc["roi_output"], vc["context_mode"])
        model = cls(ModelSpec.from_dict(meta["spec"]), meta["source"], meta["visual_dim"],
                    np.random.default_rng(0), visual)
        model.load_arrays(arrays)
        return model

    # -- inputs ------------------------------------------------------------
    def frame_refs(self, sample: Sample) -> list[FrameRef]:
        if sample.images is None:
            raise ConfigError(f"track {sample.track_id!r} has no image source for modality 'I'")
        return [FrameRef(sample.images, o.frame_index, o.box) for o in sample.frames]

    def backbone_maps(self, samples: Sequence[Sample], batch: int = 32) -> np.ndarray:
        """Frozen backbone output per frame, cached by (image file, frame, box)."""
        refs = [r for s in samples for r in self.frame_refs(s)]
        missing = list(dict.fromkeys(r for r in refs if r not in self._map_cache))
        for lo in range(0, len(missing), batch):
            chunk = missing[lo:lo + batch]
            maps = self.encoder.backbone_maps(chunk, self._images).data
            for ref, m in zip(chunk, maps):
                self._map_cache[ref] = m
        T = samples[0].T if samples else 0
        out = np.stack([self._map_cache[r] for r in refs]) if refs else np.zeros((0,) + self.encoder.map_shape)
        return out.reshape((len(samples), T) + self.encoder.map_shape)

    def raw_arrays(self, samples: Sequence[Sample]) -> dict:
        mods = self.spec.modalities
        arrays = {}
        if "I" in mods:
            if self.source == "features":
                for s in samples:
                    if s.features is None:
                        raise ConfigError(f"track {s.track_id!r} has no feature file for modality 'I'")
                arrays["I"] = np.stack([self._features.rows(s.features, s.rows) for s in samples])
            elif self.source == "raster":
                arrays["I"] = self.backbone_maps(samples)
            else:
                raise ConfigError("modality 'I' needs precomputed features or rasters")
        if self.spec.family == "hybrid":
            if "M" in mods:
                arrays["M"] = np.stack([motion_features(s) for s in samples])
            if "B" in mods:
                arrays["B"] = np.stack([behavior_features(s) for s in samples])
            if "S" in mods:
                arrays["S"] = np.stack([scene_features(s) for s in samples])
        return arrays

    def fit_normalizers(self, samples: Sequence[Sample]) -> None:
        raw = self.raw_arrays(samples)
        self.norms = {}
        for key in ("M", "S"):
            if key in raw:
                self.norms[key] = Standardizer.fit(raw[key])
        if self.source == "features" and "I" in raw:
            self.norms["I"] = Standardizer.fit(raw["I"])

    def prepare(self, samples: Sequence[Sample]) -> Prepared:
        samples = list(samples)
        if not samples:
            return Prepared([], np.zeros(0), {})
        raw = self.raw_arrays(samples)
        for key, norm in self.norms.items():
            if key in raw:
                raw[key] = norm(raw[key])
        labels = np.array([s.label for s in samples], dtype=np.float64)
        return Prepared(samples, labels, raw)

    def forward(self, prepared: Prepared, index, train: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tensor:
        index = np.asarray(index)
        a = prepared.arrays
        inputs = {}
        if "I" in a:
            x = a["I"][index]
            n, T = x.shape[:2]
            if self.source == "raster":
                enc = self.encoder.encode(Tensor(x.reshape((n * T,) + x.shape[2:])))
                enc = ops.reshape(enc, (n, T, -1))
                inputs["I"] = [ops.reshape(ops.slice_axis(enc, 1, t, t + 1), (n, -1)) for t in range(T)]
            else:
                inputs["I"] = [Tensor(x[:, t]) for t in range(T)]
        for key in ("M", "B"):
            if key in a:
                x = a[key][index]
                inputs[key] = [Tensor(x[:, t]) for t in range(x.shape[1])]
        if "S" in a:
            inputs["S"] = Tensor(a["S"][index])
        return self.net(inputs, train=train, rng=rng)

    def predict(self, samples: Sequence[Sample], batch: int = 256) -> np.ndarray:
        prepared = samples if isinstance(samples, Prepared) else self.prepare(samples)
        n = len(prepared.samples)
        out = [self.forward(prepared, np.arange(lo, min(lo + batch, n))).data for lo in range(0, n, batch)]
        return np.concatenate(out) if out else np.zeros(0)
