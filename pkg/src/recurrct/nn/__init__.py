"""Minimal float64 CNN toolkit: layers, losses, Adam and weight files."""
from .functional import conv2d, conv_transpose2d, dense, maxpool2, relu, sigmoid
from .layers import (Conv2d, ConvTranspose2d, Dense, Flatten, MaxPool2, ReLU, Sequential, Sigmoid,
                     layer_from_spec)
from .losses import ae_loss, ae_loss_grad, cross_entropy, cross_entropy_grad, mssim, softmax
from .optim import Adam, AdamState, adam_step
from .weights import load_weights, save_weights

__all__ = [
    "conv2d", "conv_transpose2d", "dense", "maxpool2", "relu", "sigmoid",
    "Conv2d", "ConvTranspose2d", "Dense", "Flatten", "MaxPool2", "ReLU", "Sequential", "Sigmoid",
    "layer_from_spec", "ae_loss", "ae_loss_grad", "cross_entropy", "cross_entropy_grad", "mssim",
    "softmax", "Adam", "AdamState", "adam_step", "load_weights", "save_weights",
]
