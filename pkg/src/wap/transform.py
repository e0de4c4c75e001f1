"""Rewrite a single-device training graph into a data-parallel multi-device graph.

Three steps, each taking the previous step's output:

1. replicate_primary: every compute-heavy layer (MatMul, Conv2D) and its
   gradient companions get d replicas, one per device. Replica batch inputs
   always come from a Split of the full tensor and replica outputs are merged
   by a Concat, so this step deliberately routes every activation through one
   device. Variables are replicated per device (each device holds a full copy
   and applies the same update) and every variable's update is fed by a
   per-device AddN over all gradient producers, which is an all-to-all
   exchange of W*d*(d-1) bytes per variable.
2. localize_auxiliary: clones every auxiliary node that sits on a replicated
   path onto each device and cancels Concat/Split pairs that became exact
   inverses, leaving forward and backward paths device-local end to end.
   Gradient aggregation edges are the only remaining cross-device traffic.
3. optimize_gradient_aggregation: collapses each variable's d AddN aggregators
   into one logical AllReduceSum, dropping aggregation traffic to
   2*W*(d-1) bytes per variable. The ring decomposition into 2(d-1) chunk
   steps lives in the simulator, not here.

Replicas are named `<original>/dev<k>`; all rewrites are deterministic, so
identical inputs serialize to identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import TransformError
from .ir import (
    GRAD_COMPANION_KINDS,
    PRIMARY_KINDS,
    Graph,
    Node,
    OpKind,
    base_id,
    infer_shapes,
    replica_index,
    topo_order,
    validate,
)
from .planner import ParallelPlan

# Kinds introduced by the rewrites themselves.
_INFRA_KINDS = frozenset({OpKind.SPLIT, OpKind.CONCAT, OpKind.ALL_REDUCE_SUM})

# Auxiliary kinds localize_auxiliary knows how to clone per device, by what
# their per-shard clone produces.
_AUX_SHARD_KINDS = frozenset(
    {OpKind.RELU, OpKind.BIAS_ADD, OpKind.GRAD_RELU, OpKind.GRAD_SOFTMAX_XENT}
)
_AUX_PARTIAL_KINDS = frozenset({OpKind.GRAD_BIAS})  # shard clones are partial sums
_AUX_LOSS_KINDS = frozenset({OpKind.SOFTMAX_XENT_LOSS})  # shard clones are shard means

# Input slots of replicable kinds that carry a batch shard; the rest of the
# slots hold per-device weight replicas.
_SHARD_SLOTS: dict[OpKind, tuple[int, ...]] = {
    OpKind.MATMUL: (0,),
    OpKind.CONV2D: (0,),
    OpKind.GRAD_MATMUL_W: (0, 1),
    OpKind.GRAD_MATMUL_X: (0,),
    OpKind.GRAD_CONV2D_W: (0, 1),
    OpKind.GRAD_CONV2D_X: (0,),
}


@dataclass(frozen=True)
class TransformReport:
    """What one rewrite step did.

    `split_concat_pairs_removed` counts redundant shard-routing eliminations:
    exact-inverse Concat/Split pairs plus Splits retargeted off tensors that
    became per-device replicas. `cross_device_edges_*` counts edges whose
    endpoint devices differ, plus every edge incident to an AllReduceSum (the
    collective's internal traffic); after step 3 only the latter remain.
    """

    step: str
    nodes_replicated: int = 0
    splits_inserted: int = 0
    concats_inserted: int = 0
    split_concat_pairs_removed: int = 0
    cross_device_edges_before: int = 0
    cross_device_edges_after: int = 0
    allreduce_nodes_inserted: int = 0

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "nodes_replicated": self.nodes_replicated,
            "splits_inserted": self.splits_inserted,
            "concats_inserted": self.concats_inserted,
            "split_concat_pairs_removed": self.split_concat_pairs_removed,
            "cross_device_edges_before": self.cross_device_edges_before,
            "cross_device_edges_after": self.cross_device_edges_after,
            "allreduce_nodes_inserted": self.allreduce_nodes_inserted,
        }


def _effective_device(nodes: dict[str, Node], nid: str) -> int | None:
    node = nodes[nid]
    if node.kind is OpKind.SPLIT:
        return _effective_device(nodes, node.inputs[0])
    return node.device


def cross_device_edges(graph: Graph) -> int:
    """Count edges crossing devices; AllReduceSum edges always count as crossing."""
    count = 0
    for node in graph:
        for inp in node.inputs:
            producer = graph.node(inp)
            if node.kind is OpKind.ALL_REDUCE_SUM or producer.kind is OpKind.ALL_REDUCE_SUM:
                count += 1
                continue
            src = _effective_device(graph.nodes, inp)
            dst = _effective_device(graph.nodes, node.id)
            if src is not None and dst is not None and src != dst:
                count += 1
    return count


def _sweep_dead(nodes: dict[str, Node], outputs: tuple[str, ...]) -> tuple[dict[str, Node], int, int]:
    """Drop nodes unreachable from the outputs, keeping Input nodes.

    Returns the surviving nodes plus how many Splits and Concats were dropped.
    """
    live: set[str] = set()
    stack = [o for o in outputs]
    stack.extend(nid for nid, n in nodes.items() if n.kind is OpKind.INPUT)
    while stack:
        nid = stack.pop()
        if nid in live:
            continue
        live.add(nid)
        stack.extend(nodes[nid].inputs)
    dead = set(nodes) - live
    dropped_splits = sum(1 for nid in dead if nodes[nid].kind is OpKind.SPLIT)
    dropped_concats = sum(1 for nid in dead if nodes[nid].kind is OpKind.CONCAT)
    return {nid: n for nid, n in nodes.items() if nid in live}, dropped_splits, dropped_concats


def _finish(name: str, nodes: dict[str, Node], outputs: tuple[str, ...], step: str) -> Graph:
    graph = Graph(name, nodes, outputs)
    report = validate(graph)
    if not report.ok:
        raise TransformError(f"internal error: {step} produced an invalid graph:\n{report}")
    return graph


def _check_single_device(graph: Graph) -> None:
    for node in graph:
        if node.kind in _INFRA_KINDS or replica_index(node.id) is not None:
            raise TransformError(
                f"graph is already parallelized: node {node.id!r} is a {node.kind.value}"
            )
    if len(graph.devices()) > 1:
        raise TransformError(f"graph is already parallelized: devices {graph.devices()}")


def _empty_report(step: str, graph: Graph) -> TransformReport:
    edges = cross_device_edges(graph)
    return TransformReport(step=step, cross_device_edges_before=edges, cross_device_edges_after=edges)


# ---------------------------------------------------------------------------
# step 1
# ---------------------------------------------------------------------------


def replicate_primary(graph: Graph, plan: ParallelPlan) -> tuple[Graph, TransformReport]:
    """Replicate primary layers, their gradient companions, variables, and updates."""
    if plan.d == 1:
        return graph, _empty_report("step1", graph)
    if plan.devices != tuple(range(plan.d)):
        raise TransformError(
            f"replicas need device ids 0..{plan.d - 1}, got {plan.devices}"
        )
    _check_single_device(graph)
    report = validate(graph)
    if not report.ok:
        raise TransformError(f"input graph invalid:\n{report}")
    shaped = infer_shapes(graph)
    d = plan.d
    devices = plan.devices
    order = topo_order(shaped)

    to_replicate: list[str] = [
        nid
        for nid in order
        if shaped.node(nid).kind in PRIMARY_KINDS or (
            shaped.node(nid).kind in GRAD_COMPANION_KINDS and shaped.node(nid).attr("layer") is not None
        )
    ]
    variables = [nid for nid in order if shaped.node(nid).kind is OpKind.VARIABLE]
    updates = {
        shaped.node(nid).inputs[0]: nid
        for nid in order
        if shaped.node(nid).kind is OpKind.SGD_UPDATE
    }

    nodes: dict[str, Node] = {}
    replica_map: dict[str, tuple[str, ...]] = {}
    splits: dict[str, str] = {}
    concats: dict[str, str] = {}
    n_splits = 0
    n_concats = 0

    def rewired(tensor: str) -> str:
        """Where non-replicated consumers of `tensor` should now read the full value."""
        if tensor in concats:
            return concats[tensor]
        if tensor in replica_map:  # variables: the device-0 copy stands in
            return replica_map[tensor][0]
        return tensor

    # Pass 1: replicate variables so weight slots resolve anywhere.
    for v in variables:
        node = shaped.node(v)
        reps = []
        for k in range(d):
            rid = f"{v}/dev{k}"
            nodes[rid] = Node(rid, OpKind.VARIABLE, (), dict(node.attrs), devices[k])
            reps.append(rid)
        replica_map[v] = tuple(reps)

    def ensure_split(tensor: str) -> str:
        if tensor in splits:
            return splits[tensor]
        nonlocal n_splits
        if shaped.node(tensor).kind is OpKind.VARIABLE:
            raise TransformError(f"activation input {tensor!r} is a Variable; cannot batch-split it")
        shape = shaped.node(tensor).output_shape
        if shape.dims[shape.batch_axis] % d != 0:
            raise TransformError(
                f"batch {shape.dims[shape.batch_axis]} of {tensor!r} is not divisible by d={d}"
            )
        sid = f"{tensor}/split"
        nodes[sid] = Node(sid, OpKind.SPLIT, (rewired(tensor),), {"axis": shape.batch_axis, "parts": d})
        splits[tensor] = sid
        n_splits += 1
        return sid

    consumers = shaped.consumers()
    replicate_set = set(to_replicate)

    # Pass 2: walk in topological order, replicating layers and carrying the
    # rest over with rewired inputs.
    for nid in order:
        node = shaped.node(nid)
        if node.kind is OpKind.VARIABLE or node.kind is OpKind.SGD_UPDATE:
            continue  # variables done; updates rebuilt below
        if nid in replicate_set:
            shard_slots = _SHARD_SLOTS[node.kind]
            reps = []
            for k in range(d):
                rid = f"{nid}/dev{k}"
                rin = []
                for slot, inp in enumerate(node.inputs):
                    if slot in shard_slots:
                        # Shards always route through a Split of the full
                        # tensor, even when the producer is itself replicated;
                        # step 2 cancels the redundant Concat/Split pairs.
                        rin.append(ensure_split(inp))
                    else:
                        if inp not in replica_map or shaped.node(inp).kind is not OpKind.VARIABLE:
                            raise TransformError(
                                f"weight input {inp!r} of {nid!r} is not a Variable"
                            )
                        rin.append(replica_map[inp][k])
                nodes[rid] = Node(rid, node.kind, tuple(rin), dict(node.attrs), devices[k])
                reps.append(rid)
            replica_map[nid] = tuple(reps)
            # Batch-shaped outputs are concatenated back; partial weight
            # gradients are not (their consumers are the per-variable AddNs).
            produces_batch = node.kind in PRIMARY_KINDS or node.kind in (
                OpKind.GRAD_MATMUL_X,
                OpKind.GRAD_CONV2D_X,
            )
            if produces_batch:
                cid = f"{nid}/concat"
                axis = node.output_shape.batch_axis
                nodes[cid] = Node(cid, OpKind.CONCAT, tuple(reps), {"axis": axis}, devices[0])
                concats[nid] = cid
                n_concats += 1
            else:
                grad_consumers = [c for c in consumers[nid] if shaped.node(c).kind is not OpKind.SGD_UPDATE]
                extra = [c for c in grad_consumers if shaped.node(c).kind is not OpKind.ADD_N]
                if extra:
                    raise TransformError(
                        f"weight gradient {nid!r} is consumed outside its update: {extra}"
                    )
        else:
            rin = tuple(rewired(i) for i in node.inputs)
            device = node.device if node.device is not None else devices[0]
            if node.kind is OpKind.INPUT:
                device = None
            nodes[nid] = replace(node, inputs=rin, device=device, output_shape=None)

    # Pass 3: per-device updates, each fed by an AddN over every gradient
    # producer for the variable (the naive all-to-all aggregation).
    def gradient_producers(grad: str) -> tuple[str, ...]:
        if grad in replica_map:
            return replica_map[grad]
        gnode = shaped.node(grad)
        if gnode.kind is OpKind.ADD_N:
            combined: list[str] = []
            for part in gnode.inputs:
                combined.extend(gradient_producers(part))
            return tuple(combined)
        return (rewired(grad),)

    new_outputs: list[str] = []
    update_replicas: dict[str, tuple[str, ...]] = {}
    for v in variables:
        if v not in updates:
            continue
        unode = shaped.node(updates[v])
        producers = gradient_producers(unode.inputs[1])
        reps = []
        for k in range(d):
            agg = f"{v}/agg/dev{k}"
            nodes[agg] = Node(agg, OpKind.ADD_N, producers, {"aggregates": v}, devices[k])
            rid = f"{unode.id}/dev{k}"
            nodes[rid] = Node(rid, OpKind.SGD_UPDATE, (replica_map[v][k], agg), dict(unode.attrs), devices[k])
            reps.append(rid)
        update_replicas[unode.id] = tuple(reps)

    for out in graph.outputs:
        if out in update_replicas:
            new_outputs.extend(update_replicas[out])
        elif out in replica_map and shaped.node(out).kind is OpKind.VARIABLE:
            new_outputs.extend(replica_map[out])
        else:
            new_outputs.append(rewired(out))

    nodes, _, _ = _sweep_dead(nodes, tuple(new_outputs))
    result = _finish(graph.name, nodes, tuple(new_outputs), "step1")
    rep = TransformReport(
        step="step1",
        nodes_replicated=len(to_replicate) + len(variables) + len(updates),
        splits_inserted=n_splits,
        concats_inserted=n_concats,
        cross_device_edges_before=cross_device_edges(graph),
        cross_device_edges_after=cross_device_edges(result),
    )
    return result, rep


# ---------------------------------------------------------------------------
# step 2
# ---------------------------------------------------------------------------


def _replica_groups(graph: Graph, d: int) -> dict[str, tuple[str, ...]]:
    """Collect `base -> (base/dev0, ..)` groups with a full set of d replicas."""
    groups: dict[str, dict[int, str]] = {}
    for node in graph:
        idx = replica_index(node.id)
        if idx is not None:
            groups.setdefault(base_id(node.id), {})[idx] = node.id
    return {
        b: tuple(g[k] for k in range(d))
        for b, g in groups.items()
        if len(g) == d and sorted(g) == list(range(d))
    }


def localize_auxiliary(graph: Graph, plan: ParallelPlan) -> tuple[Graph, TransformReport]:
    """Clone auxiliary nodes per device and drop redundant Split/Concat routing."""
    if plan.d == 1:
        return graph, _empty_report("step2", graph)
    d = plan.d
    devices = plan.devices
    edges_before = cross_device_edges(graph)
    shaped = infer_shapes(graph)
    nodes: dict[str, Node] = dict(shaped.nodes)
    order = topo_order(shaped)

    replica_map: dict[str, tuple[str, ...]] = _replica_groups(shaped, d)
    pairs_removed = 0
    splits_inserted = 0
    cloned = 0

    def rewire_input(consumer: str, old: str, new: str) -> None:
        node = nodes[consumer]
        nodes[consumer] = replace(
            node, inputs=tuple(new if i == old else i for i in node.inputs), output_shape=None
        )

    def consumers_of(target: str) -> list[str]:
        return sorted(nid for nid, n in nodes.items() for i in n.inputs if i == target)

    # Per-device resolutions of a tensor, or None when it has none.
    def shards_of(tensor: str) -> tuple[str, ...] | None:
        if tensor in replica_map:
            return replica_map[tensor]
        if replica_index(tensor) is not None and base_id(tensor) in replica_map:
            # A reference pinned to one replica (variables pinned to /dev0 by
            # step 1) resolves to the matching replica on each device.
            return replica_map[base_id(tensor)]
        node = nodes[tensor]
        if node.kind is OpKind.SPLIT:
            return None  # handled slot-wise: the split id itself is kept
        if node.kind is OpKind.CONCAT and tuple(node.inputs) == replica_map.get(base_id(node.inputs[0]), ()):
            return tuple(node.inputs)
        return None

    # 1. Cancel exact-inverse Concat -> Split pairs left by step 1.
    for nid in list(nodes):
        node = nodes.get(nid)
        if node is None or node.kind is not OpKind.SPLIT:
            continue
        producer = nodes[node.inputs[0]]
        if producer.kind is not OpKind.CONCAT:
            continue
        if node.attr("axis") != producer.attr("axis") or node.attr("parts") != len(producer.inputs):
            raise TransformError(
                f"malformed pair: Concat {producer.id!r} feeds Split {nid!r} "
                f"with mismatched axis or arity"
            )
        for cid in consumers_of(nid):
            k = nodes[cid].device
            rewire_input(cid, nid, producer.inputs[k])
        del nodes[nid]
        pairs_removed += 1

    # 2. Clone auxiliary nodes whose inputs all resolve per device, in
    # topological order so clones feed later clones.
    clonable = _AUX_SHARD_KINDS | _AUX_PARTIAL_KINDS | _AUX_LOSS_KINDS
    global_batches: dict[str, int] = {}
    for nid in order:
        if nid not in nodes:
            continue
        node = nodes[nid]
        if node.kind not in clonable or replica_index(nid) is not None:
            continue

        per_device_inputs: list[tuple[str, ...]] | None = []
        for inp in node.inputs:
            if inp not in nodes:
                per_device_inputs = None
                break
            shards = shards_of(inp)
            if shards is not None:
                per_device_inputs.append(shards)
                continue
            inode = nodes[inp]
            if inode.kind is OpKind.SPLIT:
                per_device_inputs.append(tuple(inp for _ in range(d)))
                continue
            shape = shaped.node(inp).output_shape if inp in shaped.nodes else None
            if inode.kind is OpKind.INPUT and shape is not None and shape.batch % d == 0:
                sid = f"{inp}/split"
                if sid not in nodes:
                    nodes[sid] = Node(
                        sid, OpKind.SPLIT, (inp,), {"axis": shape.batch_axis, "parts": d}
                    )
                    splits_inserted += 1
                per_device_inputs.append(tuple(sid for _ in range(d)))
                continue
            per_device_inputs = None
            break
        if per_device_inputs is None:
            continue  # conservative: leave the node where it is

        reps = []
        for k in range(d):
            rid = f"{nid}/dev{k}"
            rin = tuple(slot[k] for slot in per_device_inputs)
            nodes[rid] = Node(rid, node.kind, rin, dict(node.attrs), devices[k])
            reps.append(rid)
        replica_map[nid] = tuple(reps)
        cloned += 1

        if node.kind in _AUX_PARTIAL_KINDS:
            # Partial per-shard sums: fold the clones into every aggregator
            # that consumed the original.
            for cid in consumers_of(nid):
                cons = nodes[cid]
                if cons.kind is OpKind.ADD_N and cons.attr("aggregates") is not None:
                    new_inputs = []
                    for i in cons.inputs:
                        if i == nid:
                            new_inputs.extend(reps)
                        else:
                            new_inputs.append(i)
                    nodes[cid] = replace(cons, inputs=tuple(new_inputs), output_shape=None)
        elif node.kind in _AUX_SHARD_KINDS:
            # Shard-preserving clones: any Split of the original now routes a
            # tensor that exists per device, so retarget its consumers.
            sid = f"{nid}/split"
            if sid in nodes and nodes[sid].inputs[0] == nid:
                for cid in consumers_of(sid):
                    k = nodes[cid].device
                    rewire_input(cid, sid, reps[k])
                del nodes[sid]
                pairs_removed += 1

    # 3. Outputs: replicated originals are replaced by their clone groups.
    new_outputs: list[str] = []
    for out in graph.outputs:
        if out in replica_map and out in nodes and replica_index(out) is None:
            new_outputs.extend(replica_map[out])
        else:
            new_outputs.append(out)

    nodes, dropped_s, dropped_c = _sweep_dead(nodes, tuple(new_outputs))
    pairs_removed += min(dropped_s, dropped_c)
    result = _finish(graph.name, nodes, tuple(new_outputs), "step2")
    rep = TransformReport(
        step="step2",
        nodes_replicated=cloned,
        splits_inserted=splits_inserted,
        split_concat_pairs_removed=pairs_removed,
        cross_device_edges_before=edges_before,
        cross_device_edges_after=cross_device_edges(result),
    )
    return result, rep


# ---------------------------------------------------------------------------
# step 3
# ---------------------------------------------------------------------------


def optimize_gradient_aggregation(graph: Graph, plan: ParallelPlan) -> tuple[Graph, TransformReport]:
    """Replace each variable's per-device AddN cluster with one AllReduceSum."""
    if plan.d == 1:
        return graph, _empty_report("step3", graph)
    d = plan.d
    edges_before = cross_device_edges(graph)
    nodes: dict[str, Node] = dict(graph.nodes)

    clusters: dict[str, list[Node]] = {}
    for node in graph:
        if node.kind is OpKind.ADD_N and node.attr("aggregates") is not None:
            clusters.setdefault(node.attr("aggregates"), []).append(node)

    update_targets = {
        base_id(n.inputs[0])
        for n in graph
        if n.kind is OpKind.SGD_UPDATE
    }
    missing = sorted(update_targets - set(clusters))
    if missing:
        raise TransformError(f"no AddN aggregation cluster found for variables: {missing}")

    inserted = 0
    for var, cluster in sorted(clusters.items()):
        if len(cluster) != d:
            raise TransformError(
                f"variable {var!r} has {len(cluster)} aggregators, expected {d}"
            )
        input_sets = {c.inputs for c in cluster}
        if len(input_sets) != 1:
            raise TransformError(f"aggregators of {var!r} disagree on inputs")
        arid = f"{var}/allreduce"
        nodes[arid] = Node(arid, OpKind.ALL_REDUCE_SUM, cluster[0].inputs, {"aggregates": var})
        inserted += 1
        cluster_ids = {c.id for c in cluster}
        for nid, node in list(nodes.items()):
            if any(i in cluster_ids for i in node.inputs):
                nodes[nid] = replace(
                    node,
                    inputs=tuple(arid if i in cluster_ids else i for i in node.inputs),
                    output_shape=None,
                )
        for cid in cluster_ids:
            del nodes[cid]

    result = _finish(graph.name, nodes, graph.outputs, "step3")
    rep = TransformReport(
        step="step3",
        cross_device_edges_before=edges_before,
        cross_device_edges_after=cross_device_edges(result),
        allreduce_nodes_inserted=inserted,
    )
    return result, rep


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


def transform(graph: Graph, plan: ParallelPlan) -> tuple[Graph, list[TransformReport]]:
    """Run the full three-step rewrite; identity when the plan keeps one device."""
    if plan.d == 1:
        return graph, [
            _empty_report("step1", graph),
            _empty_report("step2", graph),
            _empty_report("step3", graph),
        ]
    g1, r1 = replicate_primary(graph, plan)
    g2, r2 = localize_auxiliary(g1, plan)
    g3, r3 = optimize_gradient_aggregation(g2, plan)
    problems = check_parallel_structure(g3, plan)
    if problems:
        raise TransformError("transform broke structural invariants:\n" + "\n".join(problems))
    return g3, [r1, r2, r3]


def check_parallel_structure(graph: Graph, plan: ParallelPlan) -> list[str]:
    """Structural invariants of a fully transformed graph; returns violations.

    Checks: one AllReduceSum per variable and no AddN aggregators left; every
    edge between device-assigned nodes stays on one device except collective
    traffic; every device owns at least one primary replica.
    """
    problems: list[str] = []
    variables = {base_id(n.id) for n in graph if n.kind is OpKind.VARIABLE}
    allreduces = [n for n in graph if n.kind is OpKind.ALL_REDUCE_SUM]
    if len(allreduces) != len(variables):
        problems.append(
            f"expected {len(variables)} AllReduceSum nodes (one per variable), found {len(allreduces)}"
        )
    for node in graph:
        if node.kind is OpKind.ADD_N and node.attr("aggregates") is not None:
            problems.append(f"AddN aggregator {node.id!r} survived step 3")

    for node in graph:
        if node.kind is OpKind.ALL_REDUCE_SUM:
            continue
        dst = _effective_device(graph.nodes, node.id)
        for inp in node.inputs:
            if graph.node(inp).kind is OpKind.ALL_REDUCE_SUM:
                continue
            src = _effective_device(graph.nodes, inp)
            if src is not None and dst is not None and src != dst:
                problems.append(f"cross-device edge {inp!r} (dev {src}) -> {node.id!r} (dev {dst})")

    per_device = {k: 0 for k in range(plan.d)}
    for node in graph:
        if node.kind in PRIMARY_KINDS and node.device is not None:
            per_device[node.device] = per_device.get(node.device, 0) + 1
    empty = [k for k in range(plan.d) if per_device.get(k, 0) == 0]
    if empty and any(n.kind in PRIMARY_KINDS for n in graph):
        problems.append(f"devices without a primary replica: {empty}")
    return problems
