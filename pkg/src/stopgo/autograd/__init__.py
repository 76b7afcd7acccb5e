"""Minimal reverse-mode autodiff: tensors, primitives, layers, Adam, grad checks."""
from . import ops
from .check import grad_check
from .checkpoint import load_checkpoint, save_checkpoint
from .nn import LSTM, Conv3x3, Dense, Module, lstm_step
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor

__all__ = ["Tensor", "ops", "grad_check", "Module", "Dense", "Conv3x3", "LSTM", "lstm_step",
           "Adam", "AdamState", "adam_step", "save_checkpoint", "load_checkpoint"]
