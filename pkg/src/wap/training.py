"""Build a full single-device training step (forward + backward + SGD) from a
forward-only graph.

The backward pass is materialized as explicit per-kind gradient nodes rather
than a generic wrapper, so later rewrites can classify and count them. The loss
is the mean cross entropy over the batch; the gradient seed node carries the
batch count it divides by in a `denominator` attribute. That attribute is what
keeps gradients exact when the batch is later split across devices: each
shard's gradient stays scaled by the global batch, so summing shard gradients
reproduces the single-device gradient up to float reassociation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import BuildError
from .ir import (
    DIFFERENTIABLE_KINDS,
    Graph,
    Node,
    OpKind,
    infer_shapes,
    topo_order,
    validate,
)


@dataclass(frozen=True)
class TrainingGraphSpec:
    """What to train: a forward graph, its loss node, and the trained variables."""

    forward: Graph
    loss_node: str
    learning_rate: float
    variables: tuple[str, ...]


def _grad_id(tensor: str, via: str, fan_out: int) -> str:
    return f"d_{tensor}" if fan_out == 1 else f"d_{tensor}_via_{via}"


def build_training_graph(spec: TrainingGraphSpec) -> Graph:
    """Append gradient nodes and one SgdUpdate per variable to the forward graph.

    Raises BuildError for non-differentiable forward ops, for variables that do
    not reach the loss, or for a loss node that is not a SoftmaxXentLoss.
    """
    fwd = spec.forward
    report = validate(fwd)
    if not report.ok:
        raise BuildError(f"forward graph invalid:\n{report}")
    if spec.learning_rate <= 0:
        raise BuildError(f"learning rate must be positive, got {spec.learning_rate}")
    for node in fwd:
        if node.kind not in DIFFERENTIABLE_KINDS:
            raise BuildError(f"non-differentiable op: node {node.id!r} has kind {node.kind.value}")
    if spec.loss_node not in fwd.nodes:
        raise BuildError(f"loss node {spec.loss_node!r} not in forward graph")
    loss = fwd.node(spec.loss_node)
    if loss.kind is not OpKind.SOFTMAX_XENT_LOSS:
        raise BuildError(f"loss node {spec.loss_node!r} must be a SoftmaxXentLoss, got {loss.kind.value}")
    for v in spec.variables:
        if v not in fwd.nodes or fwd.node(v).kind is not OpKind.VARIABLE:
            raise BuildError(f"{v!r} is not a Variable in the forward graph")

    shaped = infer_shapes(fwd)
    order = topo_order(shaped)

    # A node needs a gradient flowing into it iff a variable sits in its ancestry.
    needs_grad: dict[str, bool] = {}
    for nid in order:
        node = shaped.node(nid)
        needs_grad[nid] = node.kind is OpKind.VARIABLE or any(needs_grad[i] for i in node.inputs)

    nodes: dict[str, Node] = dict(fwd.nodes)
    consumers = shaped.consumers()

    def emit(kind: OpKind, nid: str, inputs: tuple[str, ...], **attrs) -> str:
        if nid in nodes:
            raise BuildError(f"gradient node id {nid!r} collides with an existing node")
        nodes[nid] = Node(nid, kind, inputs, attrs)
        return nid

    # Gradient contributions per forward tensor, gathered consumer by consumer
    # in reverse topological order so every consumer is finalized first.
    contributions: dict[str, list[str]] = {nid: [] for nid in order}
    grad_of: dict[str, str] = {}

    def add_contribution(tensor: str, grad_node: str) -> None:
        contributions[tensor].append(grad_node)

    logits_id, labels_id = loss.inputs
    batch = shaped.node(logits_id).output_shape.batch
    seed = emit(
        OpKind.GRAD_SOFTMAX_XENT,
        f"d_{logits_id}",
        (logits_id, labels_id),
        denominator=batch,
    )
    add_contribution(logits_id, seed)

    for nid in reversed(order):
        node = shaped.node(nid)
        if nid == spec.loss_node or not needs_grad[nid]:
            continue
        contribs = contributions[nid]
        if not contribs:
            continue
        if len(contribs) == 1:
            grad_of[nid] = contribs[0]
        else:
            grad_of[nid] = emit(OpKind.ADD_N, f"d_{nid}", tuple(contribs))
        g = grad_of[nid]

        if node.kind is OpKind.MATMUL:
            x, w = node.inputs
            x_shape = shaped.node(x).output_shape
            if needs_grad[w]:
                attrs = {"layer": nid}
                if node.attr("flatten_lhs"):
                    attrs["flatten_lhs"] = True
                gid = _grad_id(w, nid, len(consumers[w]))
                add_contribution(w, emit(OpKind.GRAD_MATMUL_W, gid, (x, g), **attrs))
            if needs_grad[x]:
                attrs = {"layer": nid}
                if node.attr("flatten_lhs"):
                    attrs["lhs_dims"] = tuple(x_shape.dims[1:])
                gid = _grad_id(x, nid, len(consumers[x]))
                add_contribution(x, emit(OpKind.GRAD_MATMUL_X, gid, (g, w), **attrs))
        elif node.kind is OpKind.CONV2D:
            x, w = node.inputs
            k = shaped.node(w).output_shape.dims[0]
            if needs_grad[w]:
                gid = _grad_id(w, nid, len(consumers[w]))
                add_contribution(w, emit(OpKind.GRAD_CONV2D_W, gid, (x, g), layer=nid, kernel_size=k))
            if needs_grad[x]:
                gid = _grad_id(x, nid, len(consumers[x]))
                add_contribution(x, emit(OpKind.GRAD_CONV2D_X, gid, (g, w), layer=nid))
        elif node.kind is OpKind.BIAS_ADD:
            x, b = node.inputs
            if needs_grad[b]:
                gid = _grad_id(b, nid, len(consumers[b]))
                add_contribution(b, emit(OpKind.GRAD_BIAS, gid, (g,)))
            if needs_grad[x]:
                # BiasAdd passes the upstream gradient through unchanged.
                add_contribution(x, g)
        elif node.kind is OpKind.RELU:
            (x,) = node.inputs
            if needs_grad[x]:
                gid = _grad_id(x, nid, len(consumers[x]))
                add_contribution(x, emit(OpKind.GRAD_RELU, gid, (x, g)))
        # Variables and Inputs are leaves.

    updates: list[str] = []
    for v in spec.variables:
        if v not in grad_of:
            raise BuildError(f"variable {v!r} is not reachable from the loss")
        uid = f"{v}_upd"
        emit(OpKind.SGD_UPDATE, uid, (v, grad_of[v]), learning_rate=spec.learning_rate)
        updates.append(uid)

    graph = Graph(f"{fwd.name}_train", nodes, (spec.loss_node, *updates))
    built = validate(graph)
    if not built.ok:
        raise BuildError(f"internal error, built graph invalid:\n{built}")
    return graph
