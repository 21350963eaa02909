"""Small convolutional network with a hand-derived backward pass."""

from .layers import (
    avgpool_backward,
    avgpool_forward,
    batchnorm_backward,
    batchnorm_forward,
    conv_backward,
    conv_forward,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    elu,
    elu_grad,
    maxpool_backward,
    maxpool_forward,
    relu,
    relu_grad,
    softmax,
    softmax_cross_entropy,
)
from .model import AdamOptimizer, CnnClassifier, EarlyStopping

__all__ = [
    "AdamOptimizer",
    "CnnClassifier",
    "EarlyStopping",
    "avgpool_backward",
    "avgpool_forward",
    "batchnorm_backward",
    "batchnorm_forward",
    "conv_backward",
    "conv_forward",
    "dense_backward",
    "dense_forward",
    "dropout_backward",
    "dropout_forward",
    "elu",
    "elu_grad",
    "maxpool_backward",
    "maxpool_forward",
    "relu",
    "relu_grad",
    "softmax",
    "softmax_cross_entropy",
]
