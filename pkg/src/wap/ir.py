"""Typed dataflow-graph IR: shapes, validation, topological order, JSON serialization.

A Graph is an immutable DAG of single-output Nodes. Every value flowing along an
edge is a dense tensor; shapes are inferred from node kinds and attributes.
Tensors are modeled at 4 bytes per element for all byte accounting (see
BYTES_PER_ELEMENT), regardless of the precision the reference interpreter uses.

One node kind needs a wiring convention: Split produces `parts` slices of its
input along `axis`. A consumer of a Split node receives the slice whose index
equals the consumer's device id, so every Split consumer must carry a device in
[0, parts). This keeps nodes single-output while letting batch shards fan out
to per-device replicas.
"""

from __future__ import annotations

import heapq
import json
import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterator

from .errors import CycleError, ParseError, ShapeError

FORMAT_VERSION = 1

# Modeled element width (standard single precision weights/activations on the
# wire). The interpreter computes in float64; byte accounting does not.
BYTES_PER_ELEMENT = 4


class OpKind(str, Enum):
    INPUT = "Input"
    VARIABLE = "Variable"
    MATMUL = "MatMul"
    CONV2D = "Conv2D"
    BIAS_ADD = "BiasAdd"
    RELU = "ReLU"
    SOFTMAX_XENT_LOSS = "SoftmaxXentLoss"
    SPLIT = "Split"
    CONCAT = "Concat"
    ALL_REDUCE_SUM = "AllReduceSum"
    GRAD_MATMUL_W = "GradMatMulW"
    GRAD_MATMUL_X = "GradMatMulX"
    GRAD_CONV2D_W = "GradConv2DW"
    GRAD_CONV2D_X = "GradConv2DX"
    GRAD_BIAS = "GradBias"
    GRAD_RELU = "GradReLU"
    GRAD_SOFTMAX_XENT = "GradSoftmaxXent"
    ADD_N = "AddN"
    SGD_UPDATE = "SgdUpdate"


# Compute-heavy layers that get replicated first; everything else is auxiliary.
PRIMARY_KINDS = frozenset({OpKind.MATMUL, OpKind.CONV2D})

# Backward nodes that belong to a primary layer (carry a `layer` attribute).
GRAD_COMPANION_KINDS = frozenset(
    {OpKind.GRAD_MATMUL_W, OpKind.GRAD_MATMUL_X, OpKind.GRAD_CONV2D_W, OpKind.GRAD_CONV2D_X}
)

# Kinds whose second input is a trained weight (used for weight-byte accounting).
PARAMETERIZED_KINDS = frozenset({OpKind.MATMUL, OpKind.CONV2D, OpKind.BIAS_ADD})

# Forward kinds the training-graph builder can differentiate.
DIFFERENTIABLE_KINDS = frozenset(
    {
        OpKind.INPUT,
        OpKind.VARIABLE,
        OpKind.MATMUL,
        OpKind.CONV2D,
        OpKind.BIAS_ADD,
        OpKind.RELU,
        OpKind.SOFTMAX_XENT_LOSS,
    }
)

# (min_arity, max_arity); None means unbounded.
_ARITY: dict[OpKind, tuple[int, int | None]] = {
    OpKind.INPUT: (0, 0),
    OpKind.VARIABLE: (0, 0),
    OpKind.MATMUL: (2, 2),
    OpKind.CONV2D: (2, 2),
    OpKind.BIAS_ADD: (2, 2),
    OpKind.RELU: (1, 1),
    OpKind.SOFTMAX_XENT_LOSS: (2, 2),
    OpKind.SPLIT: (1, 1),
    OpKind.CONCAT: (2, None),
    OpKind.ALL_REDUCE_SUM: (2, None),
    OpKind.GRAD_MATMUL_W: (2, 2),
    OpKind.GRAD_MATMUL_X: (2, 2),
    OpKind.GRAD_CONV2D_W: (2, 2),
    OpKind.GRAD_CONV2D_X: (2, 2),
    OpKind.GRAD_BIAS: (1, 1),
    OpKind.GRAD_RELU: (2, 2),
    OpKind.GRAD_SOFTMAX_XENT: (2, 2),
    OpKind.ADD_N: (1, None),
    OpKind.SGD_UPDATE: (2, 2),
}

_ALLOWED_ATTRS: dict[OpKind, frozenset[str]] = {
    OpKind.INPUT: frozenset({"shape", "batch_axis"}),
    OpKind.VARIABLE: frozenset({"shape"}),
    OpKind.MATMUL: frozenset({"flatten_lhs"}),
    OpKind.CONV2D: frozenset(),
    OpKind.BIAS_ADD: frozenset(),
    OpKind.RELU: frozenset(),
    OpKind.SOFTMAX_XENT_LOSS: frozenset(),
    OpKind.SPLIT: frozenset({"axis", "parts"}),
    OpKind.CONCAT: frozenset({"axis"}),
    OpKind.ALL_REDUCE_SUM: frozenset({"aggregates"}),
    OpKind.GRAD_MATMUL_W: frozenset({"layer", "flatten_lhs"}),
    OpKind.GRAD_MATMUL_X: frozenset({"layer", "lhs_dims"}),
    OpKind.GRAD_CONV2D_W: frozenset({"layer", "kernel_size"}),
    OpKind.GRAD_CONV2D_X: frozenset({"layer"}),
    OpKind.GRAD_BIAS: frozenset(),
    OpKind.GRAD_RELU: frozenset(),
    OpKind.GRAD_SOFTMAX_XENT: frozenset({"denominator"}),
    OpKind.ADD_N: frozenset({"aggregates"}),
    OpKind.SGD_UPDATE: frozenset({"learning_rate"}),
}

_REPLICA_RE = re.compile(r"^(?P<base>.+)/dev(?P<idx>\d+)$")


def base_id(node_id: str) -> str:
    """Strip a `/dev<k>` replica suffix, if present."""
    m = _REPLICA_RE.match(node_id)
    return m["base"] if m else node_id


def replica_index(node_id: str) -> int | None:
    m = _REPLICA_RE.match(node_id)
    return int(m["idx"]) if m else None


@dataclass(frozen=True)
class TensorShape:
    """Dense tensor shape plus the axis along which the minibatch runs."""

    dims: tuple[int, ...]
    batch_axis: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if not self.dims:
            raise ValueError("TensorShape needs at least one dimension")
        if any(d < 1 for d in self.dims):
            raise ValueError(f"all dims must be >= 1, got {self.dims}")
        if not 0 <= self.batch_axis < len(self.dims):
            raise ValueError(f"batch_axis {self.batch_axis} out of range for {self.dims}")

    @property
    def rank(self) -> int:
        return len(self.dims)

    @property
    def batch(self) -> int:
        return self.dims[self.batch_axis]

    def elements(self) -> int:
        return math.prod(self.dims)

    def nbytes(self) -> int:
        return self.elements() * BYTES_PER_ELEMENT


def _freeze_attr(value: Any) -> Any:
    if isinstance(value, (list, tuple)):
        return tuple(_freeze_attr(v) for v in value)
    if isinstance(value, bool) or value is None or isinstance(value, (int, float, str)):
        return value
    raise TypeError(f"unsupported attribute value {value!r}")


@dataclass(frozen=True)
class Node:
    """One operation. `output_shape` is derived data, filled by infer_shapes."""

    id: str
    kind: OpKind
    inputs: tuple[str, ...] = ()
    attrs: dict[str, Any] = field(default_factory=dict)
    device: int | None = None
    output_shape: TensorShape | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "attrs", {k: _freeze_attr(v) for k, v in self.attrs.items()})

    def attr(self, key: str, default: Any = None) -> Any:
        return self.attrs.get(key, default)


@dataclass(frozen=True)
class Graph:
    """Immutable DAG; `outputs` name the values a run of the graph yields."""

    name: str
    nodes: dict[str, Node]
    outputs: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "outputs", tuple(self.outputs))

    def node(self, node_id: str) -> Node:
        return self.nodes[node_id]

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.nodes

    def __iter__(self) -> Iterator[Node]:
        return iter(self.nodes.values())

    def consumers(self) -> dict[str, list[str]]:
        """Map producer id -> consumer ids, consumers sorted for determinism."""
        out: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        for node in self.nodes.values():
            for inp in node.inputs:
                if inp in out:
                    out[inp].append(node.id)
        for nid in out:
            out[nid].sort()
        return out

    def devices(self) -> tuple[int, ...]:
        return tuple(sorted({n.device for n in self.nodes.values() if n.device is not None}))

    def variables(self) -> list[Node]:
        return [n for n in self.nodes.values() if n.kind is OpKind.VARIABLE]


class GraphBuilder:
    """Convenience for constructing graphs node by node."""

    def __init__(self, name: str):
        self.name = name
        self._nodes: dict[str, Node] = {}
        self._outputs: list[str] = []

    def add(
        self,
        kind: OpKind,
        node_id: str,
        inputs: tuple[str, ...] | list[str] = (),
        device: int | None = None,
        **attrs: Any,
    ) -> str:
        if node_id in self._nodes:
            raise ValueError(f"duplicate node id {node_id!r}")
        self._nodes[node_id] = Node(node_id, kind, tuple(inputs), attrs, device)
        return node_id

    def input(self, node_id: str, shape: tuple[int, ...], batch_axis: int = 0) -> str:
        return self.add(OpKind.INPUT, node_id, shape=tuple(shape), batch_axis=batch_axis)

    def variable(self, node_id: str, shape: tuple[int, ...]) -> str:
        return self.add(OpKind.VARIABLE, node_id, shape=tuple(shape))

    def output(self, node_id: str) -> None:
        self._outputs.append(node_id)

    def build(self, outputs: tuple[str, ...] | list[str] | None = None) -> Graph:
        outs = tuple(outputs) if outputs is not None else tuple(self._outputs)
        return Graph(self.name, dict(self._nodes), outs)


@dataclass(frozen=True)
class Finding:
    node: str | None
    rule: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...]

    @property
    def ok(self) -> bool:
        return not self.findings

    def __str__(self) -> str:
        if self.ok:
            return "graph is valid"
        return "\n".join(f"[{f.rule}] node={f.node}: {f.message}" for f in self.findings)


def topo_order(graph: Graph) -> list[str]:
    """Topological order with ties broken by ascending node id.

    Raises CycleError when the graph has a dependency cycle.
    """
    indeg: dict[str, int] = {}
    consumers: dict[str, list[str]] = {nid: [] for nid in graph.nodes}
    for node in graph.nodes.values():
        indeg[node.id] = 0
        for inp in node.inputs:
            if inp not in graph.nodes:
                raise CycleError(f"node {node.id!r} references missing node {inp!r}")
        indeg[node.id] = len(node.inputs)
        for inp in node.inputs:
            consumers[inp].append(node.id)

    ready = [nid for nid, deg in indeg.items() if deg == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        nid = heapq.heappop(ready)
        order.append(nid)
        for cons in consumers[nid]:
            indeg[cons] -= 1
            if indeg[cons] == 0:
                heapq.heappush(ready, cons)
    if len(order) != len(graph.nodes):
        stuck = sorted(nid for nid, deg in indeg.items() if deg > 0)
        raise CycleError(f"cycle detected involving nodes: {', '.join(stuck)}")
    return order


# ---------------------------------------------------------------------------
# shape inference
# ---------------------------------------------------------------------------


def _err(node: Node, msg: str) -> ShapeError:
    return ShapeError(f"node {node.id!r} ({node.kind.value}): {msg}")


def _lhs_matrix_dims(node: Node, x: TensorShape) -> tuple[int, int]:
    """Rows/cols of the left operand after optional flattening of non-batch dims."""
    if node.attr("flatten_lhs"):
        if x.batch_axis != 0:
            raise _err(node, f"flatten_lhs needs batch_axis 0, got {x.batch_axis}")
        return x.dims[0], math.prod(x.dims[1:])
    if x.rank != 2:
        raise _err(node, f"expected rank-2 operand, got {x.dims} (set flatten_lhs to collapse)")
    return x.dims[0], x.dims[1]


def _shape_matmul(node: Node, ins: list[TensorShape]) -> TensorShape:
    x, w = ins
    b, i = _lhs_matrix_dims(node, x)
    if w.rank != 2 or w.dims[0] != i:
        raise _err(node, f"cannot multiply {x.dims} by {w.dims}")
    return TensorShape((b, w.dims[1]), batch_axis=x.batch_axis)


def _shape_conv2d(node: Node, ins: list[TensorShape]) -> TensorShape:
    x, w = ins
    if x.rank != 4 or x.batch_axis != 0:
        raise _err(node, f"expected NHWC input with batch_axis 0, got {x.dims}")
    if w.rank != 4 or w.dims[0] != w.dims[1]:
        raise _err(node, f"expected square KKIO kernel, got {w.dims}")
    k = w.dims[0]
    if k % 2 == 0:
        raise _err(node, f"kernel size must be odd for same padding, got {k}")
    if w.dims[2] != x.dims[3]:
        raise _err(node, f"input channels {x.dims[3]} do not match kernel {w.dims}")
    return TensorShape((x.dims[0], x.dims[1], x.dims[2], w.dims[3]), batch_axis=0)


def _shape_bias_add(node: Node, ins: list[TensorShape]) -> TensorShape:
    x, b = ins
    if b.rank != 1 or b.dims[0] != x.dims[-1]:
        raise _err(node, f"bias {b.dims} does not match last dim of {x.dims}")
    return x


def _shape_xent(node: Node, ins: list[TensorShape]) -> TensorShape:
    logits, labels = ins
    if logits.rank != 2 or logits.batch_axis != 0:
        raise _err(node, f"expected rank-2 logits with batch_axis 0, got {logits.dims}")
    if labels.dims != logits.dims:
        raise _err(node, f"labels {labels.dims} do not match logits {logits.dims}")
    return TensorShape((1,), batch_axis=0)


def _shape_split(node: Node, ins: list[TensorShape]) -> TensorShape:
    (x,) = ins
    axis, parts = node.attr("axis"), node.attr("parts")
    if axis is None or parts is None:
        raise _err(node, "Split needs axis and parts attributes")
    if not 0 <= axis < x.rank:
        raise _err(node, f"split axis {axis} out of range for {x.dims}")
    if x.dims[axis] % parts != 0:
        raise _err(node, f"dim {x.dims[axis]} not divisible into {parts} parts")
    dims = list(x.dims)
    dims[axis] //= parts
    return TensorShape(tuple(dims), batch_axis=x.batch_axis)


def _shape_concat(node: Node, ins: list[TensorShape]) -> TensorShape:
    axis = node.attr("axis")
    first = ins[0]
    if axis is None or not 0 <= axis < first.rank:
        raise _err(node, f"bad concat axis {axis} for {first.dims}")
    total = 0
    for s in ins:
        if s.rank != first.rank or s.batch_axis != first.batch_axis:
            raise _err(node, f"mismatched operand {s.dims} vs {first.dims}")
        for ax in range(first.rank):
            if ax != axis and s.dims[ax] != first.dims[ax]:
                raise _err(node, f"mismatched operand {s.dims} vs {first.dims}")
        total += s.dims[axis]
    dims = list(first.dims)
    dims[axis] = total
    return TensorShape(tuple(dims), batch_axis=first.batch_axis)


def _shape_elementwise_sum(node: Node, ins: list[TensorShape]) -> TensorShape:
    first = ins[0]
    for s in ins[1:]:
        if s.dims != first.dims:
            raise _err(node, f"operands {s.dims} and {first.dims} differ")
    return first


def _shape_grad_matmul_w(node: Node, ins: list[TensorShape]) -> TensorShape:
    x, dy = ins
    b, i = _lhs_matrix_dims(node, x)
    if dy.rank != 2 or dy.dims[0] != b:
        raise _err(node, f"upstream gradient {dy.dims} does not match batch {b}")
    return TensorShape((i, dy.dims[1]), batch_axis=0)


def _shape_grad_matmul_x(node: Node, ins: list[TensorShape]) -> TensorShape:
    dy, w = ins
    if dy.rank != 2 or w.rank != 2 or dy.dims[1] != w.dims[1]:
        raise _err(node, f"cannot combine {dy.dims} with weight {w.dims}")
    lhs_dims = node.attr("lhs_dims")
    if lhs_dims is not None:
        if math.prod(lhs_dims) != w.dims[0]:
            raise _err(node, f"lhs_dims {lhs_dims} do not flatten to {w.dims[0]}")
        return TensorShape((dy.dims[0], *lhs_dims), batch_axis=0)
    return TensorShape((dy.dims[0], w.dims[0]), batch_axis=0)


def _shape_grad_conv2d_w(node: Node, ins: list[TensorShape]) -> TensorShape:
    x, dy = ins
    k = node.attr("kernel_size")
    if k is None or k % 2 == 0:
        raise _err(node, f"kernel_size must be an odd integer, got {k}")
    if x.rank != 4 or dy.rank != 4 or x.dims[:3] != dy.dims[:3]:
        raise _err(node, f"activation {x.dims} does not match gradient {dy.dims}")
    return TensorShape((k, k, x.dims[3], dy.dims[3]), batch_axis=0)


def _shape_grad_conv2d_x(node: Node, ins: list[TensorShape]) -> TensorShape:
    dy, w = ins
    if dy.rank != 4 or w.rank != 4 or dy.dims[3] != w.dims[3]:
        raise _err(node, f"gradient {dy.dims} does not match kernel {w.dims}")
    return TensorShape((dy.dims[0], dy.dims[1], dy.dims[2], w.dims[2]), batch_axis=0)


def _shape_grad_bias(node: Node, ins: list[TensorShape]) -> TensorShape:
    (dy,) = ins
    return TensorShape((dy.dims[-1],), batch_axis=0)


def _shape_grad_relu(node: Node, ins: list[TensorShape]) -> TensorShape:
    x, dy = ins
    if x.dims != dy.dims:
        raise _err(node, f"activation {x.dims} does not match gradient {dy.dims}")
    return x


def _shape_grad_xent(node: Node, ins: list[TensorShape]) -> TensorShape:
    logits, labels = ins
    if logits.dims != labels.dims or logits.rank != 2:
        raise _err(node, f"logits {logits.dims} do not match labels {labels.dims}")
    denom = node.attr("denominator")
    if denom is not None and denom < 1:
        raise _err(node, f"denominator must be >= 1, got {denom}")
    return logits


def _shape_sgd_update(node: Node, ins: list[TensorShape]) -> TensorShape:
    v, g = ins
    if v.dims != g.dims:
        raise _err(node, f"variable {v.dims} does not match gradient {g.dims}")
    return v


def _shape_leaf(node: Node, ins: list[TensorShape]) -> TensorShape:
    shape = node.attr("shape")
    if shape is None:
        raise _err(node, "missing shape attribute")
    return TensorShape(tuple(shape), batch_axis=node.attr("batch_axis", 0))


_SHAPE_RULES = {
    OpKind.INPUT: _shape_leaf,
    OpKind.VARIABLE: _shape_leaf,
    OpKind.MATMUL: _shape_matmul,
    OpKind.CONV2D: _shape_conv2d,
    OpKind.BIAS_ADD: _shape_bias_add,
    OpKind.RELU: lambda node, ins: ins[0],
    OpKind.SOFTMAX_XENT_LOSS: _shape_xent,
    OpKind.SPLIT: _shape_split,
    OpKind.CONCAT: _shape_concat,
    OpKind.ALL_REDUCE_SUM: _shape_elementwise_sum,
    OpKind.GRAD_MATMUL_W: _shape_grad_matmul_w,
    OpKind.GRAD_MATMUL_X: _shape_grad_matmul_x,
    OpKind.GRAD_CONV2D_W: _shape_grad_conv2d_w,
    OpKind.GRAD_CONV2D_X: _shape_grad_conv2d_x,
    OpKind.GRAD_BIAS: _shape_grad_bias,
    OpKind.GRAD_RELU: _shape_grad_relu,
    OpKind.GRAD_SOFTMAX_XENT: _shape_grad_xent,
    OpKind.ADD_N: _shape_elementwise_sum,
    OpKind.SGD_UPDATE: _shape_sgd_update,
}


def infer_shapes(graph: Graph) -> Graph:
    """Return a copy of the graph with every node's output_shape populated.

    Deterministic and idempotent; shapes depend only on graph structure, so any
    topological evaluation order yields the same result.
    """
    shapes: dict[str, TensorShape] = {}
    new_nodes: dict[str, Node] = {}
    for nid in topo_order(graph):
        node = graph.nodes[nid]
        ins = [shapes[i] for i in node.inputs]
        shape = _SHAPE_RULES[node.kind](node, ins)
        shapes[nid] = shape
        new_nodes[nid] = replace(node, output_shape=shape)
    return Graph(graph.name, new_nodes, graph.outputs)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def validate(graph: Graph) -> ValidationReport:
    """Check every structural invariant; findings are data, not exceptions."""
    findings: list[Finding] = []

    def bad(node: str | None, rule: str, message: str) -> None:
        findings.append(Finding(node, rule, message))

    for node in graph.nodes.values():
        lo, hi = _ARITY[node.kind]
        n = len(node.inputs)
        if n < lo or (hi is not None and n > hi):
            bad(node.id, "arity", f"{node.kind.value} takes {lo}..{hi or 'n'} inputs, got {n}")
        for inp in node.inputs:
            if inp not in graph.nodes:
                bad(node.id, "unresolved input", f"references missing node {inp!r}")
        unknown = set(node.attrs) - _ALLOWED_ATTRS[node.kind]
        if unknown:
            bad(node.id, "unknown attr", f"{node.kind.value} does not accept {sorted(unknown)}")
        if node.kind is OpKind.SPLIT:
            parts = node.attr("parts")
            if not isinstance(parts, int) or parts < 2:
                bad(node.id, "bad attr", f"Split part count must be >= 2, got {parts}")
        if node.kind is OpKind.SGD_UPDATE:
            lr = node.attr("learning_rate")
            if not isinstance(lr, (int, float)) or lr <= 0:
                bad(node.id, "bad attr", f"learning_rate must be positive, got {lr}")
        if node.kind in (OpKind.INPUT, OpKind.VARIABLE):
            shape = node.attr("shape")
            if not shape or any(not isinstance(d, int) or d < 1 for d in shape):
                bad(node.id, "bad attr", f"shape must be positive integers, got {shape}")

    for out in graph.outputs:
        if out not in graph.nodes:
            bad(out, "unresolved output", f"output {out!r} is not a node")
        elif graph.nodes[out].kind is OpKind.SPLIT:
            bad(out, "bad output", "a Split node cannot be a graph output")

    if findings:
        return ValidationReport(tuple(findings))

    try:
        topo_order(graph)
    except CycleError as exc:
        bad(None, "cycle detected", str(exc))
        return ValidationReport(tuple(findings))

    # Split consumers pick their part by device id.
    consumers = graph.consumers()
    for node in graph.nodes.values():
        if node.kind is not OpKind.SPLIT:
            continue
        parts = node.attr("parts")
        for cid in consumers[node.id]:
            cons = graph.nodes[cid]
            if cons.device is None or not 0 <= cons.device < parts:
                bad(cid, "bad split consumer", f"consumer of {node.id!r} needs device in [0, {parts})")

    # At most one SgdUpdate per variable.
    updated: dict[str, str] = {}
    for node in graph.nodes.values():
        if node.kind is not OpKind.SGD_UPDATE:
            continue
        target = node.inputs[0]
        if graph.nodes[target].kind is not OpKind.VARIABLE:
            bad(node.id, "bad update", f"update target {target!r} is not a Variable")
        elif target in updated:
            bad(node.id, "duplicate update", f"variable {target!r} already updated by {updated[target]!r}")
        else:
            updated[target] = node.id

    if not findings:
        try:
            infer_shapes(graph)
        except ShapeError as exc:
            bad(None, "shape mismatch", str(exc))
    return ValidationReport(tuple(findings))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _attrs_to_json(attrs: dict[str, Any]) -> dict[str, Any]:
    def unfreeze(v: Any) -> Any:
        return list(unfreeze(x) for x in v) if isinstance(v, tuple) else v

    return {k: unfreeze(v) for k, v in attrs.items()}


def serialize(graph: Graph) -> bytes:
    """Canonical JSON encoding: nodes sorted by id, keys sorted, stable floats."""
    doc = {
        "version": FORMAT_VERSION,
        "name": graph.name,
        "nodes": [
            {
                "id": n.id,
                "kind": n.kind.value,
                "inputs": list(n.inputs),
                "attrs": _attrs_to_json(n.attrs),
                **({"device": n.device} if n.device is not None else {}),
            }
            for _, n in sorted(graph.nodes.items())
        ],
        "outputs": list(graph.outputs),
    }
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8")


_TOP_FIELDS = {"version", "name", "nodes", "outputs"}
_NODE_FIELDS = {"id", "kind", "inputs", "attrs", "device"}


def deserialize(data: bytes | str) -> Graph:
    """Parse a serialized graph; unknown fields and unknown op kinds are errors."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ParseError("top-level value must be an object")
    extra = set(doc) - _TOP_FIELDS
    if extra:
        raise ParseError(f"unknown top-level fields: {sorted(extra)}")
    missing = _TOP_FIELDS - set(doc)
    if missing:
        raise ParseError(f"missing top-level fields: {sorted(missing)}")
    if doc["version"] != FORMAT_VERSION:
        raise ParseError(f"version mismatch: file has {doc['version']!r}, expected {FORMAT_VERSION}")

    nodes: dict[str, Node] = {}
    for entry in doc["nodes"]:
        if not isinstance(entry, dict):
            raise ParseError(f"node entry must be an object, got {entry!r}")
        extra = set(entry) - _NODE_FIELDS
        if extra:
            raise ParseError(f"unknown node fields: {sorted(extra)}")
        try:
            nid = entry["id"]
            kind_name = entry["kind"]
        except KeyError as exc:
            raise ParseError(f"node entry missing field {exc}") from exc
        try:
            kind = OpKind(kind_name)
        except ValueError as exc:
            raise ParseError(f"unknown op kind {kind_name!r} in node {nid!r}") from exc
        if nid in nodes:
            raise ParseError(f"duplicate node id {nid!r}")
        device = entry.get("device")
        if device is not None and not isinstance(device, int):
            raise ParseError(f"device of node {nid!r} must be an integer")
        attrs = entry.get("attrs", {})
        if not isinstance(attrs, dict):
            raise ParseError(f"attrs of node {nid!r} must be an object")
        nodes[nid] = Node(nid, kind, tuple(entry.get("inputs", ())), attrs, device)

    return Graph(doc["name"], nodes, tuple(doc["outputs"]))
