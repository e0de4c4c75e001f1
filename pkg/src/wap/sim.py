"""Event-driven timing, traffic, and energy simulation of a device-assigned graph.

Compute durations come from the same closed forms the planner uses: the nodes
of one layer (forward plus its gradient companions) on one device share an
efficiency factor evaluated at their combined work, so a zero-communication
graph simulates to exactly the planner's compute total. Auxiliary nodes take
zero time; their cost is what the efficiency curve absorbs.

Communication model:

* An edge between nodes on different devices becomes a transfer of the
  producer's tensor bytes (4 per element). Transfers share one interconnect
  and serialize in the order they are requested, each paying link_latency.
  Edges from Input nodes and Splits of them are free: feeding the input
  pipeline is out of scope of the step-time model.
* An AllReduceSum blocks all participating devices and runs the ring
  algorithm: the payload is cut into d chunks (remainder to the last chunk)
  and every device sends one chunk per step on its own link for 2(d-1)
  steps, so a step costs max_chunk/bandwidth + chunk latency. Total traffic
  is exactly 2*(d-1)*W bytes.

Devices execute their assigned nodes sequentially in topological order, like
a single in-order stream; compute never overlaps communication, matching the
additive step-time model.

Energy integrates the power model over the step: the host draws constant
power, every device that owns work draws idle power for the whole step plus
(peak - idle) during its compute spans scaled by the span's efficiency.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import SimError
from .ir import (
    BYTES_PER_ELEMENT,
    GRAD_COMPANION_KINDS,
    PRIMARY_KINDS,
    Graph,
    Node,
    OpKind,
    base_id,
    infer_shapes,
    topo_order,
)
from .planner import DeviceProfile
from .workloads import node_flops


@dataclass(frozen=True)
class LinkTransfer:
    src: int
    dst: int
    nbytes: int
    start: float
    end: float
    reason: str  # "agg:<variable>" for gradient aggregation, else "data:<producer>"


@dataclass(frozen=True)
class NodeSpan:
    device: int | None
    start: float
    end: float


@dataclass(frozen=True)
class ExecutionTrace:
    node_spans: dict[str, NodeSpan]
    link_transfers: tuple[LinkTransfer, ...]
    step_time: float

    def to_json(self) -> dict:
        return {
            "step_time": self.step_time,
            "node_spans": {
                nid: {"device": s.device, "start": s.start, "end": s.end}
                for nid, s in sorted(self.node_spans.items())
            },
            "link_transfers": [
                {
                    "src": t.src,
                    "dst": t.dst,
                    "bytes": t.nbytes,
                    "start": t.start,
                    "end": t.end,
                    "reason": t.reason,
                }
                for t in self.link_transfers
            ],
        }


@dataclass(frozen=True)
class SimResult:
    throughput: float  # samples per second
    energy_per_step: float  # joules
    comm_bytes_total: int
    comm_bytes_per_link: dict[tuple[int, int], int]
    step_time: float

    def to_json(self) -> dict:
        return {
            "throughput": self.throughput,
            "energy_per_step": self.energy_per_step,
            "comm_bytes_total": self.comm_bytes_total,
            "comm_bytes_per_link": {
                f"{src}->{dst}": b for (src, dst), b in sorted(self.comm_bytes_per_link.items())
            },
            "step_time": self.step_time,
        }


def _layer_key(node: Node) -> str | None:
    if node.kind in PRIMARY_KINDS:
        return base_id(node.id)
    if node.kind in GRAD_COMPANION_KINDS:
        layer = node.attr("layer")
        if layer is not None:
            return base_id(layer)
    return None


@dataclass
class _Bus:
    """Single shared interconnect; transfers serialize in request order."""

    free_at: float = 0.0
    transfers: list[LinkTransfer] = field(default_factory=list)

    def send(self, profile: DeviceProfile, src: int, dst: int, nbytes: int,
             ready: float, reason: str) -> float:
        start = max(ready, self.free_at)
        end = start + profile.link_latency + nbytes / profile.link_bandwidth
        self.free_at = end
        self.transfers.append(LinkTransfer(src, dst, nbytes, start, end, reason))
        return end


def simulate_timing(graph: Graph, profile: DeviceProfile) -> tuple[ExecutionTrace, SimResult]:
    """Schedule the graph on the profiled machine; returns trace and summary.

    Single-device graphs may leave devices unassigned (everything runs on
    device 0); in a multi-device graph every compute node needs a device.
    """
    shaped = infer_shapes(graph)
    order = topo_order(shaped)

    assigned = shaped.devices()
    single = len(assigned) <= 1

    def device_of(node: Node) -> int | None:
        if node.kind in (OpKind.INPUT,):
            return None
        if node.kind is OpKind.SPLIT:
            return device_of(shaped.node(node.inputs[0]))
        if node.kind is OpKind.ALL_REDUCE_SUM:
            return None
        if node.device is not None:
            return node.device
        if single:
            return assigned[0] if assigned else 0
        raise SimError(f"node {node.id!r} has no device in a multi-device graph")

    # Host-resident sources: their outbound edges cost nothing.
    def is_host(nid: str) -> bool:
        node = shaped.node(nid)
        if node.kind in (OpKind.INPUT, OpKind.VARIABLE):
            return node.kind is OpKind.INPUT
        if node.kind is OpKind.SPLIT:
            return is_host(node.inputs[0])
        return False

    # Shared efficiency per (layer, device) group, same formula as the planner.
    group_work: dict[tuple[str, int | None], int] = {}
    for nid in order:
        node = shaped.node(nid)
        key = _layer_key(node)
        if key is not None:
            group_work[(key, device_of(node))] = (
                group_work.get((key, device_of(node)), 0) + node_flops(shaped, nid)
            )

    def duration(node: Node) -> float:
        key = _layer_key(node)
        if key is None:
            return 0.0
        flops = node_flops(shaped, node.id)
        if flops == 0:
            return 0.0
        work = group_work[(key, device_of(node))]
        return flops / (profile.peak_flops * profile.efficiency(work))

    bus = _Bus()
    device_free: dict[int, float] = {}
    end_at: dict[str, float] = {}
    spans: dict[str, NodeSpan] = {}
    # One transfer per (producer tensor, destination device).
    arrived: dict[tuple[str, int], float] = {}

    def deliver(consumer: Node, producer_id: str) -> float:
        """Time at which the consumer's copy of the producer value is ready."""
        producer = shaped.node(producer_id)
        t = end_at[producer_id]
        if is_host(producer_id):
            return t
        src = device_of(producer)
        dst = device_of(consumer)
        if src is None or dst is None or src == dst:
            return t
        # For a Split producer, output_shape already describes one part.
        nbytes = shaped.node(producer_id).output_shape.nbytes()
        key = (producer_id, dst)
        if key not in arrived:
            if consumer.kind is OpKind.ADD_N and consumer.attr("aggregates") is not None:
                reason = f"agg:{consumer.attr('aggregates')}"
            else:
                reason = f"data:{base_id(producer_id)}"
            arrived[key] = bus.send(profile, src, dst, nbytes, t, reason)
        return arrived[key]

    def run_allreduce(node: Node) -> None:
        producers = [shaped.node(i) for i in node.inputs]
        devs = sorted({device_of(p) for p in producers})
        if len(devs) != len(node.inputs) or None in devs:
            raise SimError(f"AllReduceSum {node.id!r} needs one input per device")
        d = len(devs)
        ready = max(max(end_at[i] for i in node.inputs),
                    max(device_free.get(k, 0.0) for k in devs))
        elements = shaped.node(node.id).output_shape.elements()
        chunk = elements // d
        sizes = [chunk] * (d - 1) + [elements - chunk * (d - 1)]
        var = node.attr("aggregates")
        reason = f"agg:{var}" if var is not None else f"data:{base_id(node.id)}"
        t = ready
        for step in range(2 * (d - 1)):
            step_dur = 0.0
            for pos, k in enumerate(devs):
                nbytes = sizes[(pos - step) % d] * BYTES_PER_ELEMENT
                step_dur = max(step_dur, nbytes / profile.link_bandwidth)
            step_dur += profile.allreduce_chunk_latency
            for pos, k in enumerate(devs):
                nbytes = sizes[(pos - step) % d] * BYTES_PER_ELEMENT
                dst = devs[(pos + 1) % d]
                bus.transfers.append(LinkTransfer(k, dst, nbytes, t, t + step_dur, reason))
            t += step_dur
        for k in devs:
            device_free[k] = t
        end_at[node.id] = t
        spans[node.id] = NodeSpan(None, ready, t)

    busy_weighted: dict[int, float] = {}  # device -> sum(duration * efficiency)
    for nid in order:
        node = shaped.node(nid)
        if node.kind is OpKind.ALL_REDUCE_SUM:
            run_allreduce(node)
            continue
        if node.kind in (OpKind.INPUT, OpKind.VARIABLE):
            dev = device_of(node)
            end_at[nid] = 0.0
            spans[nid] = NodeSpan(dev, 0.0, 0.0)
            continue
        dev = device_of(node)
        ready = max((deliver(node, i) for i in node.inputs), default=0.0)
        if node.kind is OpKind.SPLIT:
            end_at[nid] = ready
            spans[nid] = NodeSpan(dev, ready, ready)
            continue
        start = max(ready, device_free.get(dev, 0.0))
        dur = duration(node)
        end = start + dur
        device_free[dev] = end
        end_at[nid] = end
        spans[nid] = NodeSpan(dev, start, end)
        if dur > 0.0:
            key = _layer_key(node)
            eff = profile.efficiency(group_work[(key, dev)])
            busy_weighted[dev] = busy_weighted.get(dev, 0.0) + dur * eff

    step_time = max(
        max((s.end for s in spans.values()), default=0.0),
        max((t.end for t in bus.transfers), default=0.0),
    )

    used_devices = sorted(
        {s.device for s in spans.values() if s.device is not None}
    )
    energy = profile.host_power * step_time
    for dev in used_devices:
        energy += profile.power_idle * step_time
        energy += (profile.power_peak - profile.power_idle) * busy_weighted.get(dev, 0.0)

    batches = [
        shaped.node(n.id).output_shape.batch for n in shaped if n.kind is OpKind.INPUT
    ]
    global_batch = max(batches, default=1)

    per_link: dict[tuple[int, int], int] = {}
    total = 0
    for t in bus.transfers:
        per_link[(t.src, t.dst)] = per_link.get((t.src, t.dst), 0) + t.nbytes
        total += t.nbytes

    trace = ExecutionTrace(spans, tuple(bus.transfers), step_time)
    result = SimResult(
        throughput=global_batch / step_time if step_time > 0 else float("inf"),
        energy_per_step=energy,
        comm_bytes_total=total,
        comm_bytes_per_link=per_link,
        step_time=step_time,
    )
    return trace, result


def comm_volume(trace: ExecutionTrace) -> tuple[int, dict[str, int]]:
    """Gradient-aggregation traffic in the trace: total bytes and per variable.

    Counts only transfers tagged as aggregation (naive all-to-all reads and
    ring steps); activation shuffling between devices is reported separately
    in SimResult.comm_bytes_total.
    """
    per_variable: dict[str, int] = {}
    for t in trace.link_transfers:
        if t.reason.startswith("agg:"):
            var = t.reason[4:]
            per_variable[var] = per_variable.get(var, 0) + t.nbytes
    return sum(per_variable.values()), per_variable
