"""Encoders, the Static / Video / Hybrid family and training."""
from .backbone import FeatureStore, ImageStore, TinyBackbone, VisualEncoder
from .fusion import FusionNet, ModelSpec, StopGoModel, VisualConfig
from .train import TrainConfig, TrainResult, load_config, train_model

__all__ = ["FeatureStore", "ImageStore", "TinyBackbone", "VisualEncoder", "FusionNet", "ModelSpec",
           "StopGoModel", "VisualConfig", "TrainConfig", "TrainResult", "load_config", "train_model"]
