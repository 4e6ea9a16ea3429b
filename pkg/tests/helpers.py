"""Builders shared by several test modules."""

import numpy as np

from flowlstm.nn import DenseParams, LstmParams, Network


def random_network(rng, input_dim=None, scale=0.5, max_dim=8):
    """A small network with every parameter (peepholes and biases too) random.

    The layout is drawn at random too: an optional ReLU feature layer, one or
    two LSTM layers, optional ReLU layers, then the linear head.
    """
    d = int(input_dim or rng.integers(1, 4))
    classes = int(rng.integers(2, 6))
    layers = []
    width = d
    if rng.random() < 0.5:
        out = int(rng.integers(1, max_dim + 1))
        layers.append(DenseParams(width, out, "relu"))
        width = out
    for _ in range(int(rng.integers(1, 3))):
        h = int(rng.integers(1, max_dim + 1))
        layers.append(LstmParams(width, h))
        width = h
    for _ in range(int(rng.integers(0, 3))):
        out = int(rng.integers(1, max_dim + 1))
        layers.append(DenseParams(width, out, "relu"))
        width = out
    layers.append(DenseParams(width, classes, "linear"))
    net = Network(layers, classes)
    for a in net.parameters().values():
        a[...] = scale * rng.standard_normal(a.shape)
    # keep ReLU units mostly active so the finite differences see smooth terms
    for layer in layers:
        if isinstance(layer, DenseParams) and layer.activation == "relu":
            layer.b[...] = np.abs(layer.b) + 0.1
    return net


def zero_network(dims=(1, 4, 4, 5)):
    """dims = (input, lstm hidden, relu width, classes); all parameters zero."""
    d, h, r, c = dims
    return Network([LstmParams(d, h), DenseParams(h, r, "relu"), DenseParams(r, c, "linear")], c)
