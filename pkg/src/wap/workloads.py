"""Walk a training graph, find the compute-heavy layers, and count their work.

Counting rules (element width 4 bytes, documented here so the cost model is
auditable):

* MatMul forward: 2*B*I*O FLOPs for [B, I] x [I, O].
* Conv2D forward: 2*B*H*W*Cin*Cout*K^2 FLOPs (stride 1, same padding).
* Backward: each weight-gradient or input-gradient node of a layer costs the
  same as the layer's forward pass, so a mid-network layer costs 2x forward
  in backward and the first layer (no input gradient) costs 1x. A layer's
  `flops_bwd` sums the gradient nodes that are actually present.
* Elementwise and loss work is excluded; the efficiency curve of the device
  profile absorbs it.
* A layer's weight bytes include any bias added directly to its output, since
  that bias gradient is aggregated alongside the layer's weight gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import WorkloadError
from .ir import (
    BYTES_PER_ELEMENT,
    GRAD_COMPANION_KINDS,
    PARAMETERIZED_KINDS,
    PRIMARY_KINDS,
    Graph,
    Node,
    OpKind,
    topo_order,
)


@dataclass(frozen=True)
class LayerWorkload:
    """Per-layer quantities the cost model consumes."""

    layer: str
    kind: OpKind
    flops_fwd: int
    flops_bwd: int
    weight_bytes: int
    activation_bytes: int
    batch: int


@dataclass(frozen=True)
class NetworkWorkload:
    layers: tuple[LayerWorkload, ...]
    global_batch: int
    total_weight_bytes: int

    @property
    def total_flops(self) -> int:
        return sum(l.flops_fwd + l.flops_bwd for l in self.layers)

    def to_json(self) -> dict:
        return {
            "global_batch": self.global_batch,
            "total_weight_bytes": self.total_weight_bytes,
            "layers": [
                {
                    "layer": l.layer,
                    "kind": l.kind.value,
                    "flops_fwd": l.flops_fwd,
                    "flops_bwd": l.flops_bwd,
                    "weight_bytes": l.weight_bytes,
                    "activation_bytes": l.activation_bytes,
                    "batch": l.batch,
                }
                for l in self.layers
            ],
        }


def _shaped(graph: Graph, node: Node):
    if node.output_shape is None:
        raise WorkloadError(f"graph is not shape-inferred (node {node.id!r} has no shape)")
    return node.output_shape


def node_flops(graph: Graph, node_id: str) -> int:
    """FLOPs of one compute node, from its inferred shapes; 0 for non-compute kinds."""
    node = graph.node(node_id)
    kind = node.kind
    if kind is OpKind.MATMUL:
        out = _shaped(graph, node)
        w = _shaped(graph, graph.node(node.inputs[1]))
        return 2 * out.dims[0] * w.dims[0] * w.dims[1]
    if kind is OpKind.CONV2D:
        out = _shaped(graph, node)
        w = _shaped(graph, graph.node(node.inputs[1]))
        b, h, wd, _ = out.dims
        k, _, ci, co = w.dims
        return 2 * b * h * wd * ci * co * k * k
    if kind is OpKind.GRAD_MATMUL_W:
        x = _shaped(graph, graph.node(node.inputs[0]))
        dy = _shaped(graph, graph.node(node.inputs[1]))
        return 2 * dy.dims[0] * (math.prod(x.dims) // x.dims[0]) * dy.dims[1]
    if kind is OpKind.GRAD_MATMUL_X:
        dy = _shaped(graph, graph.node(node.inputs[0]))
        w = _shaped(graph, graph.node(node.inputs[1]))
        return 2 * dy.dims[0] * w.dims[0] * w.dims[1]
    if kind in (OpKind.GRAD_CONV2D_W, OpKind.GRAD_CONV2D_X):
        dy_slot = 1 if kind is OpKind.GRAD_CONV2D_W else 0
        dy = _shaped(graph, graph.node(node.inputs[dy_slot]))
        if kind is OpKind.GRAD_CONV2D_W:
            x = _shaped(graph, graph.node(node.inputs[0]))
            k, ci = node.attr("kernel_size"), x.dims[3]
        else:
            w = _shaped(graph, graph.node(node.inputs[1]))
            k, ci = w.dims[0], w.dims[2]
        b, h, wd, co = dy.dims
        return 2 * b * h * wd * ci * co * k * k
    return 0


def flops_of(graph: Graph, node_id: str) -> tuple[int, int]:
    """(forward, backward) FLOPs for one primary layer node.

    Backward uses the 2x-forward convention: one weight-gradient pass plus one
    input-gradient pass, each costing the forward pass. Raises WorkloadError
    for kinds outside the primary set.
    """
    node = graph.node(node_id)
    if node.kind not in PRIMARY_KINDS:
        raise WorkloadError(f"unsupported kind for FLOP counting: {node.kind.value} ({node_id!r})")
    fwd = node_flops(graph, node_id)
    return fwd, 2 * fwd


def extract_workloads(graph: Graph) -> NetworkWorkload:
    """One LayerWorkload per primary forward node, in topological order.

    `flops_bwd` sums the gradient companion nodes actually present for the
    layer (their `layer` attribute names the forward node). The result depends
    only on graph structure: device assignments and serialization round trips
    do not change it.
    """
    order = topo_order(graph)
    consumers = graph.consumers()

    companions: dict[str, list[str]] = {}
    for nid in order:
        node = graph.node(nid)
        if node.kind in GRAD_COMPANION_KINDS:
            layer = node.attr("layer")
            if layer is not None:
                companions.setdefault(layer, []).append(nid)

    def weight_bytes_of(node: Node) -> int:
        w = graph.node(node.inputs[1])
        if w.kind is not OpKind.VARIABLE:
            return 0
        return _shaped(graph, w).nbytes()

    layers: list[LayerWorkload] = []
    for nid in order:
        node = graph.node(nid)
        if node.kind not in PRIMARY_KINDS:
            continue
        out_shape = _shaped(graph, node)
        fwd = node_flops(graph, nid)
        bwd = sum(node_flops(graph, c) for c in companions.get(nid, ()))
        wbytes = weight_bytes_of(node)
        for cid in consumers[nid]:
            cons = graph.node(cid)
            if cons.kind is OpKind.BIAS_ADD:
                wbytes += weight_bytes_of(cons)
        layers.append(
            LayerWorkload(
                layer=nid,
                kind=node.kind,
                flops_fwd=fwd,
                flops_bwd=bwd,
                weight_bytes=wbytes,
                activation_bytes=out_shape.nbytes(),
                batch=out_shape.batch,
            )
        )

    batches = {l.batch for l in layers}
    if len(batches) > 1:
        raise WorkloadError(f"inconsistent layer batch sizes: {sorted(batches)}")
    if layers:
        global_batch = layers[0].batch
    else:
        input_batches = [
            _shaped(graph, n).batch for n in graph if n.kind is OpKind.INPUT
        ]
        global_batch = max(input_batches, default=1)

    total = 0
    counted: set[str] = set()
    for node in graph:
        if node.kind in PARAMETERIZED_KINDS:
            w = node.inputs[1]
            if w not in counted and graph.node(w).kind is OpKind.VARIABLE:
                counted.add(w)
                total += _shaped(graph, graph.node(w)).nbytes()

    return NetworkWorkload(tuple(layers), global_batch, total)
