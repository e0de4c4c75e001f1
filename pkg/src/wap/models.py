"""Benchmark training graphs, scaled down so the interpreter stays fast.

The two convolutional networks mirror the proportions of classic image
classifiers: `alexnet_like` has five convolutions feeding three fully
connected layers (an 8-layer profile whose parameters concentrate in the FC
stack), `vgg16_like` stacks thirteen convolutions before three FC layers.
Spatial resolution is fixed (stride-1 same-padding convolutions), so feature
maps shrink only through channel choices. Layout is NHWC.
"""

from __future__ import annotations

from .ir import Graph, GraphBuilder, OpKind
from .training import TrainingGraphSpec, build_training_graph


def _conv_block(b: GraphBuilder, name: str, x: str, c_in: int, c_out: int, k: int = 3) -> str:
    w = b.variable(f"{name}_w", (k, k, c_in, c_out))
    bias = b.variable(f"{name}_b", (c_out,))
    conv = b.add(OpKind.CONV2D, name, (x, w))
    zb = b.add(OpKind.BIAS_ADD, f"{name}_zb", (conv, bias))
    return b.add(OpKind.RELU, f"{name}_relu", (zb,))


def _fc_block(b: GraphBuilder, name: str, x: str, n_in: int, n_out: int,
              flatten: bool = False, relu: bool = True) -> str:
    w = b.variable(f"{name}_w", (n_in, n_out))
    bias = b.variable(f"{name}_b", (n_out,))
    mm = b.add(OpKind.MATMUL, name, (x, w), flatten_lhs=True) if flatten else \
        b.add(OpKind.MATMUL, name, (x, w))
    zb = b.add(OpKind.BIAS_ADD, f"{name}_zb", (mm, bias))
    if not relu:
        return zb
    return b.add(OpKind.RELU, f"{name}_relu", (zb,))


def _finish_classifier(b: GraphBuilder, logits: str, batch: int, classes: int,
                       lr: float) -> Graph:
    labels = b.input("labels", (batch, classes))
    loss = b.add(OpKind.SOFTMAX_XENT_LOSS, "loss", (logits, labels))
    fwd = b.build(outputs=(loss,))
    variables = tuple(n.id for n in fwd if n.kind is OpKind.VARIABLE)
    return build_training_graph(TrainingGraphSpec(fwd, loss, lr, variables))


def mlp(batch: int = 64, features: tuple[int, ...] = (32, 16, 10), bias: bool = True,
        lr: float = 0.05, name: str = "mlp") -> Graph:
    """Fully connected classifier: len(features)-1 MatMul layers plus loss."""
    b = GraphBuilder(name)
    x = b.input("images", (batch, features[0]))
    for i in range(1, len(features)):
        last = i == len(features) - 1
        w = b.variable(f"fc{i}_w", (features[i - 1], features[i]))
        x = b.add(OpKind.MATMUL, f"fc{i}", (x, w))
        if bias:
            bv = b.variable(f"fc{i}_b", (features[i],))
            x = b.add(OpKind.BIAS_ADD, f"fc{i}_zb", (x, bv))
        if not last:
            x = b.add(OpKind.RELU, f"fc{i}_relu", (x,))
    return _finish_classifier(b, x, batch, features[-1], lr)


def alexnet_like(batch: int, lr: float = 0.01) -> Graph:
    """Five convolutions and three FC layers on 6x6x3 inputs, 10 classes."""
    b = GraphBuilder("alexnet_like")
    x = b.input("images", (batch, 6, 6, 3))
    x = _conv_block(b, "conv1", x, 3, 8)
    x = _conv_block(b, "conv2", x, 8, 8)
    x = _conv_block(b, "conv3", x, 8, 8)
    x = _conv_block(b, "conv4", x, 8, 8)
    x = _conv_block(b, "conv5", x, 8, 8)
    x = _fc_block(b, "fc6", x, 6 * 6 * 8, 128, flatten=True)
    x = _fc_block(b, "fc7", x, 128, 128)
    x = _fc_block(b, "fc8", x, 128, 10, relu=False)
    return _finish_classifier(b, x, batch, 10, lr)


def vgg16_like(batch: int, lr: float = 0.01) -> Graph:
    """Thirteen convolutions and three FC layers on 8x8x3 inputs, 10 classes."""
    channels = (4, 4, 8, 8, 16, 16, 16, 32, 32, 32, 32, 32, 32)
    b = GraphBuilder("vgg16_like")
    x = b.input("images", (batch, 8, 8, 3))
    c_in = 3
    for i, c_out in enumerate(channels, start=1):
        x = _conv_block(b, f"conv{i}", x, c_in, c_out)
        c_in = c_out
    x = _fc_block(b, "fc14", x, 8 * 8 * 32, 128, flatten=True)
    x = _fc_block(b, "fc15", x, 128, 128)
    x = _fc_block(b, "fc16", x, 128, 10, relu=False)
    return _finish_classifier(b, x, batch, 10, lr)
