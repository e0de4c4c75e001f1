"""Reference numeric interpreter: the correctness oracle for graph rewrites.

Everything is evaluated in float64 regardless of the 4-byte element size used
for byte accounting; the interpreter exists to check semantics, not to model
precision.

Determinism rules, fixed so results are bit-reproducible for a given
(graph, inputs, seed):

* Variable initial values come from ``numpy.random.default_rng((seed, crc32香))``
  keyed by the variable's base id (replica suffixes stripped), so the replicas
  of a variable always initialize identically to the original.
* Synthesized input values (``generate_inputs``) use the same scheme under a
  separate namespace.
* Every n-ary reduction (AddN, AllReduceSum) is a left fold over operands in
  their stored order, which the rewrites keep in ascending device order.
* Concat concatenates operands in stored order; batch means divide a single
  pairwise numpy sum by the batch count.

A consumer of a Split node receives the part indexed by its own device id.
"""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import EvalError
from .ir import Graph, Node, OpKind, base_id, infer_shapes, replica_index, topo_order

logger = logging.getLogger(__name__)

_INIT_SCALE = 0.1


def _rng(seed: int, namespace: str, name: str) -> np.random.Generator:
    tag = zlib.crc32(f"{namespace}:{name}".encode("utf-8"))
    return np.random.default_rng((int(seed) & 0xFFFFFFFF, tag))


def initial_variables(graph: Graph, seed: int) -> dict[str, np.ndarray]:
    """Deterministic initial value for every Variable node, keyed by node id.

    Values are 0.1 * standard normal draws from a stream seeded by
    (seed, crc32("var:" + base id)); replicas share their original's stream.
    """
    out: dict[str, np.ndarray] = {}
    for node in graph:
        if node.kind is OpKind.VARIABLE:
            shape = tuple(node.attr("shape"))
            rng = _rng(seed, "var", base_id(node.id))
            out[node.id] = _INIT_SCALE * rng.standard_normal(shape)
    return out


def generate_inputs(graph: Graph, seed: int) -> dict[str, np.ndarray]:
    """Deterministic standard-normal binding for every Input node."""
    out: dict[str, np.ndarray] = {}
    for node in graph:
        if node.kind is OpKind.INPUT:
            shape = tuple(node.attr("shape"))
            out[node.id] = _rng(seed, "in", base_id(node.id)).standard_normal(shape)
    return out


def _conv2d(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    b, h, wd, _ = x.shape
    k = w.shape[0]
    p = k // 2
    xp = np.zeros((b, h + 2 * p, wd + 2 * p, x.shape[3]), dtype=x.dtype)
    xp[:, p : p + h, p : p + wd, :] = x
    out = np.zeros((b, h, wd, w.shape[3]), dtype=x.dtype)
    for u in range(k):
        for v in range(k):
            out += xp[:, u : u + h, v : v + wd, :] @ w[u, v]
    return out


def _conv2d_grad_w(x: np.ndarray, dy: np.ndarray, k: int) -> np.ndarray:
    b, h, wd, ci = x.shape
    p = k // 2
    xp = np.zeros((b, h + 2 * p, wd + 2 * p, ci), dtype=x.dtype)
    xp[:, p : p + h, p : p + wd, :] = x
    dw = np.zeros((k, k, ci, dy.shape[3]), dtype=x.dtype)
    for u in range(k):
        for v in range(k):
            dw[u, v] = np.tensordot(xp[:, u : u + h, v : v + wd, :], dy, axes=([0, 1, 2], [0, 1, 2]))
    return dw


def _conv2d_grad_x(dy: np.ndarray, w: np.ndarray) -> np.ndarray:
    b, h, wd, _ = dy.shape
    k = w.shape[0]
    p = k // 2
    dxp = np.zeros((b, h + 2 * p, wd + 2 * p, w.shape[2]), dtype=dy.dtype)
    for u in range(k):
        for v in range(k):
            dxp[:, u : u + h, v : v + wd, :] += dy @ w[u, v].T
    return dxp[:, p : p + h, p : p + wd, :]


def _flatten_lhs(node: Node, x: np.ndarray) -> np.ndarray:
    return x.reshape(x.shape[0], -1) if node.attr("flatten_lhs") else x


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _left_fold_sum(operands: list[np.ndarray]) -> np.ndarray:
    acc = operands[0].copy()
    for a in operands[1:]:
        acc = acc + a
    return acc


def execute(
    graph: Graph,
    inputs: dict[str, np.ndarray],
    seed: int = 0,
) -> dict[str, np.ndarray]:
    """Evaluate the graph and return the values of its output nodes.

    Every Input node must be bound in `inputs`; Variable nodes take their value
    from `inputs` when bound there, otherwise from initial_variables(graph, seed).
    Non-finite results are reported through the module logger, never swallowed.
    """
    values: dict[str, np.ndarray | tuple[np.ndarray, ...]] = {}

    def fetch(consumer: Node, producer_id: str) -> np.ndarray:
        v = values[producer_id]
        if isinstance(v, tuple):  # Split parts, picked by consumer device
            if consumer.device is None or not 0 <= consumer.device < len(v):
                raise EvalError(
                    f"node {consumer.id!r} consumes split {producer_id!r} but has no part device"
                )
            return v[consumer.device]
        return v

    for nid in topo_order(graph):
        node = graph.nodes[nid]
        if node.kind is OpKind.INPUT:
            if nid not in inputs:
                raise EvalError(f"missing input binding for {nid!r}")
            values[nid] = np.asarray(inputs[nid], dtype=np.float64)
            continue
        if node.kind is OpKind.VARIABLE:
            if nid in inputs:
                values[nid] = np.asarray(inputs[nid], dtype=np.float64)
            else:
                shape = tuple(node.attr("shape"))
                values[nid] = _INIT_SCALE * _rng(seed, "var", base_id(nid)).standard_normal(shape)
            continue

        ins = [fetch(node, i) for i in node.inputs]
        kind = node.kind
        if kind is OpKind.MATMUL:
            out = _flatten_lhs(node, ins[0]) @ ins[1]
        elif kind is OpKind.CONV2D:
            out = _conv2d(ins[0], ins[1])
        elif kind is OpKind.BIAS_ADD:
            out = ins[0] + ins[1]
        elif kind is OpKind.RELU:
            out = np.maximum(ins[0], 0.0)
        elif kind is OpKind.SOFTMAX_XENT_LOSS:
            logits, labels = ins
            z = logits - logits.max(axis=1, keepdims=True)
            logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
            per_sample = -(labels * logp).sum(axis=1)
            out = np.array([per_sample.sum() / logits.shape[0]])
        elif kind is OpKind.SPLIT:
            parts = node.attr("parts")
            out = tuple(np.split(ins[0], parts, axis=node.attr("axis")))
        elif kind is OpKind.CONCAT:
            out = np.concatenate(ins, axis=node.attr("axis"))
        elif kind in (OpKind.ADD_N, OpKind.ALL_REDUCE_SUM):
            out = _left_fold_sum(ins)
        elif kind is OpKind.GRAD_MATMUL_W:
            out = _flatten_lhs(node, ins[0]).T @ ins[1]
        elif kind is OpKind.GRAD_MATMUL_X:
            out = ins[0] @ ins[1].T
            lhs_dims = node.attr("lhs_dims")
            if lhs_dims is not None:
                out = out.reshape((out.shape[0], *lhs_dims))
        elif kind is OpKind.GRAD_CONV2D_W:
            out = _conv2d_grad_w(ins[0], ins[1], node.attr("kernel_size"))
        elif kind is OpKind.GRAD_CONV2D_X:
            out = _conv2d_grad_x(ins[0], ins[1])
        elif kind is OpKind.GRAD_BIAS:
            dy = ins[0]
            out = dy.sum(axis=tuple(range(dy.ndim - 1)))
        elif kind is OpKind.GRAD_RELU:
            out = ins[1] * (ins[0] > 0)
        elif kind is OpKind.GRAD_SOFTMAX_XENT:
            logits, labels = ins
            denom = node.attr("denominator", logits.shape[0])
            out = (_softmax(logits) - labels) / denom
        elif kind is OpKind.SGD_UPDATE:
            out = ins[0] - node.attr("learning_rate") * ins[1]
        else:  # pragma: no cover - all kinds handled above
            raise EvalError(f"no interpreter rule for kind {kind.value}")

        if not isinstance(out, tuple) and not np.all(np.isfinite(out)):
            logger.warning("numeric overflow: node %r produced non-finite values", nid)
        values[nid] = out

    missing = [o for o in graph.outputs if o not in values]
    if missing:
        raise EvalError(f"outputs not computed: {missing}")
    return {o: values[o] for o in graph.outputs}


# ---------------------------------------------------------------------------
# equivalence checking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EquivalenceReport:
    """Per-output maximum relative deviation between two graphs."""

    deviations: dict[str, float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(d <= self.tolerance for d in self.deviations.values())

    @property
    def max_deviation(self) -> float:
        return max(self.deviations.values(), default=0.0)

    def failures(self) -> list[str]:
        return sorted(o for o, d in self.deviations.items() if d > self.tolerance)


def _relative_deviation(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise EvalError(f"output shapes differ: {a.shape} vs {b.shape}")
    scale = max(float(np.abs(a).max(initial=0.0)), float(np.abs(b).max(initial=0.0)), 1e-30)
    return float(np.abs(a - b).max(initial=0.0)) / scale


def _reassemble(graph_b: Graph, base: str, replicas: list[str], vals: dict[str, np.ndarray]) -> np.ndarray | list[np.ndarray]:
    """Reconstruct the logical value of a replicated output.

    SgdUpdate replicas hold copies of one logical tensor: every replica must
    match, so all are returned for individual comparison. Per-device losses are
    means over equal shards: their mean is the global mean. Anything else is a
    batch shard: concatenation along the batch axis restores the original.
    """
    kind = graph_b.node(replicas[0]).kind
    parts = [vals[r] for r in replicas]
    if kind in (OpKind.SGD_UPDATE, OpKind.VARIABLE, OpKind.ALL_REDUCE_SUM):
        return parts
    if kind is OpKind.SOFTMAX_XENT_LOSS:
        return _left_fold_sum(parts) / len(parts)
    shape = graph_b.node(replicas[0]).output_shape
    return np.concatenate(parts, axis=shape.batch_axis if shape is not None else 0)


def compare(
    graph_a: Graph,
    graph_b: Graph,
    inputs: dict[str, np.ndarray],
    seed: int = 0,
    tol: float = 1e-6,
) -> EquivalenceReport:
    """Execute both graphs on one input binding and compare matched outputs.

    Outputs match either by identical id or by the replica naming scheme
    (`name` in graph_a vs `name/dev0..name/dev{d-1}` in graph_b). Raises
    EvalError when some output cannot be matched.
    """
    vals_a = execute(graph_a, inputs, seed)
    vals_b = execute(graph_b, inputs, seed)
    shaped_b = infer_shapes(graph_b)

    by_base: dict[str, list[str]] = {}
    for out in graph_b.outputs:
        by_base.setdefault(base_id(out), []).append(out)
    for group in by_base.values():
        group.sort(key=lambda o: replica_index(o) or 0)

    deviations: dict[str, float] = {}
    matched: set[str] = set()
    for out in graph_a.outputs:
        group = by_base.get(out)
        if not group:
            raise EvalError(f"output mismatch: {out!r} has no counterpart in {graph_b.name!r}")
        matched.update(group)
        if group == [out]:
            deviations[out] = _relative_deviation(vals_a[out], vals_b[out])
            continue
        rebuilt = _reassemble(shaped_b, out, group, vals_b)
        if isinstance(rebuilt, list):
            deviations[out] = max(_relative_deviation(vals_a[out], r) for r in rebuilt)
        else:
            deviations[out] = _relative_deviation(vals_a[out], rebuilt)

    extra = set(graph_b.outputs) - matched
    if extra:
        raise EvalError(f"output mismatch: {sorted(extra)} have no counterpart in {graph_a.name!r}")
    return EquivalenceReport(deviations, tol)
