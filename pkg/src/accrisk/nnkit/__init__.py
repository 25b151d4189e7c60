"""Minimal deterministic neural-network layer engine (numpy, float64)."""

from .gradcheck import grad_check, numeric_gradient, relative_error
from .layers import (ACTIVATIONS, LSTM, BatchNorm, Dense, Embedding, Layer, ReLU, Sigmoid,
                     Tanh, batchnorm_forward, cross_entropy, dense_backward, dense_forward,
                     relu, sigmoid, softmax, tanh)
from .optim import Adam, adam_step
from .rng import RngStream, glorot_uniform

__all__ = [
    "ACTIVATIONS", "LSTM", "BatchNorm", "Dense", "Embedding", "Layer", "ReLU", "Sigmoid",
    "Tanh", "batchnorm_forward", "cross_entropy", "dense_backward", "dense_forward", "relu",
    "sigmoid", "softmax", "tanh", "Adam", "adam_step", "RngStream", "glorot_uniform",
    "grad_check", "numeric_gradient", "relative_error",
]
