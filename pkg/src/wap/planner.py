"""Analytical step-time model and replication-degree selection.

For a candidate degree d the predicted step time is the sum over layers of a
compute term and a communication term:

* compute: work = (flops_fwd + flops_bwd) / d on each device, running at
  peak_flops * efficiency(work), where efficiency(x) = x / (x + knee). The
  single knee parameter models utilization collapsing when per-device work
  gets small.
* communication (gradient aggregation of W bytes across d devices):
  - naive all-to-all: W * d * (d-1) / bandwidth + link_latency
  - ring all-reduce: 2 * W * (d-1) / d / bandwidth + 2 * (d-1) * chunk_latency
  Both are zero at d = 1 or W = 0. At zero latencies their ratio is exactly
  d^2 / 2.

Candidate degrees are the divisors of the global batch up to the number of
available devices; ties in predicted time go to the smaller degree, which
draws less power.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ParseError, WorkloadError
from .workloads import LayerWorkload, NetworkWorkload

PROFILE_DIR_ENV = "WAP_PROFILE_DIR"

_PROFILE_FIELDS = {
    "name",
    "peak_flops",
    "efficiency_knee_flops",
    "link_bandwidth",
    "link_latency",
    "allreduce_chunk_latency",
    "power_idle",
    "power_peak",
    "host_power",
}


@dataclass(frozen=True)
class DeviceProfile:
    """Analytical machine model; one profile describes every device in a box."""

    name: str
    peak_flops: float  # FLOP/s per device at full utilization
    efficiency_knee_flops: float  # per-device work at which efficiency is 0.5
    link_bandwidth: float  # bytes/s per link
    link_latency: float  # seconds per point-to-point transfer
    allreduce_chunk_latency: float  # seconds per ring step
    power_idle: float  # watts per active device at zero utilization
    power_peak: float  # watts per device at full utilization
    host_power: float  # constant watts for the host

    def __post_init__(self) -> None:
        for f in ("peak_flops", "link_bandwidth"):
            if getattr(self, f) <= 0:
                raise ValueError(f"{f} must be positive")
        for f in ("efficiency_knee_flops", "link_latency", "allreduce_chunk_latency",
                  "power_idle", "power_peak", "host_power"):
            if getattr(self, f) < 0:
                raise ValueError(f"{f} must be nonnegative")

    def efficiency(self, work_flops: float) -> float:
        """Fraction of peak achieved at the given per-device work; in (0, 1]."""
        if self.efficiency_knee_flops == 0:
            return 1.0
        if work_flops <= 0:
            return 0.0
        return work_flops / (work_flops + self.efficiency_knee_flops)

    def to_json(self) -> dict:
        return {f: getattr(self, f) for f in sorted(_PROFILE_FIELDS)}


def load_profile(name_or_path: str | Path) -> DeviceProfile:
    """Load a device profile by path, by name in $WAP_PROFILE_DIR, or built in.

    A bare name like "pcie-box" resolves against the search path with a .json
    suffix appended.
    """
    candidates: list[Path] = []
    p = Path(name_or_path)
    candidates.append(p)
    if p.suffix != ".json":
        candidates.append(p.with_name(p.name + ".json"))
    env_dir = os.environ.get(PROFILE_DIR_ENV)
    if env_dir and not p.is_absolute():
        for c in list(candidates):
            candidates.append(Path(env_dir) / c)
    for c in candidates:
        if c.is_file():
            return _profile_from_text(c.read_text("utf-8"), str(c))
    stem = p.name if p.suffix == ".json" else p.name + ".json"
    builtin = resources.files("wap").joinpath("profiles", stem)
    if builtin.is_file():
        return _profile_from_text(builtin.read_text("utf-8"), str(name_or_path))
    raise FileNotFoundError(f"no device profile named {name_or_path!r}")


def _profile_from_text(text: str, origin: str) -> DeviceProfile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid profile {origin}: {exc.msg} at line {exc.lineno}") from exc
    if not isinstance(doc, dict) or set(doc) != _PROFILE_FIELDS:
        raise ParseError(
            f"profile {origin} must have exactly the fields {sorted(_PROFILE_FIELDS)}"
        )
    return DeviceProfile(**doc)


@dataclass(frozen=True)
class CostEstimate:
    """Predicted step time decomposition for one candidate degree."""

    d: int
    t_c_total: float
    t_s_total: float
    predicted_throughput: float

    @property
    def t_estimate(self) -> float:
        return self.t_c_total + self.t_s_total


@dataclass(frozen=True)
class ParallelPlan:
    d: int
    devices: tuple[int, ...]
    estimates: tuple[CostEstimate, ...]
    predicted_power: float

    def estimate_for(self, d: int) -> CostEstimate:
        for e in self.estimates:
            if e.d == d:
                return e
        raise KeyError(f"no estimate for d={d}")

    @property
    def chosen(self) -> CostEstimate:
        return self.estimate_for(self.d)


def compute_time(layer: LayerWorkload, d: int, profile: DeviceProfile) -> float:
    """Seconds to run one layer's forward+backward work split across d devices."""
    if d < 1:
        raise WorkloadError(f"degree must be >= 1, got {d}")
    if layer.batch % d != 0:
        raise WorkloadError(f"degree {d} does not divide batch {layer.batch} of layer {layer.layer!r}")
    work = (layer.flops_fwd + layer.flops_bwd) / d
    if work == 0:
        return 0.0
    return work / (profile.peak_flops * profile.efficiency(work))


def comm_time(
    layer: LayerWorkload,
    d: int,
    profile: DeviceProfile,
    algo: str = "ring",
) -> float:
    """Seconds to aggregate one layer's gradients across d devices."""
    if algo not in ("ring", "naive_all_to_all"):
        raise WorkloadError(f"unknown aggregation algorithm {algo!r}")
    w = layer.weight_bytes
    if d <= 1 or w == 0:
        return 0.0
    if algo == "naive_all_to_all":
        return w * (d - 1) * d / profile.link_bandwidth + profile.link_latency
    return 2 * w * (d - 1) / d / profile.link_bandwidth + 2 * (d - 1) * profile.allreduce_chunk_latency


def estimate_total(
    workload: NetworkWorkload,
    d: int,
    profile: DeviceProfile,
    algo: str = "ring",
) -> CostEstimate:
    """Sum per-layer compute and communication times for one candidate degree."""
    if d < 1:
        raise WorkloadError(f"degree must be >= 1, got {d}")
    if workload.global_batch % d != 0:
        raise WorkloadError(f"degree {d} does not divide global batch {workload.global_batch}")
    t_c = sum(compute_time(l, d, profile) for l in workload.layers)
    t_s = sum(comm_time(l, d, profile, algo) for l in workload.layers)
    total = t_c + t_s
    throughput = workload.global_batch / total if total > 0 else float("inf")
    return CostEstimate(d=d, t_c_total=t_c, t_s_total=t_s, predicted_throughput=throughput)


def _utilization(est: CostEstimate, workload: NetworkWorkload, profile: DeviceProfile) -> float:
    busy = est.t_c_total / est.t_estimate if est.t_estimate > 0 else 0.0
    return busy * profile.efficiency(workload.total_flops / est.d)


def estimate_power(plan: ParallelPlan, workload: NetworkWorkload, profile: DeviceProfile) -> float:
    """Watts drawn by the host plus the plan's devices; unused devices draw none.

    Each used device draws idle power plus (peak - idle) scaled by utilization,
    where utilization is the compute fraction of the step times the efficiency
    at the per-device work.
    """
    if plan.d < 1:
        raise WorkloadError(f"plan must use at least one device, got d={plan.d}")
    util = _utilization(plan.chosen, workload, profile)
    per_device = profile.power_idle + (profile.power_peak - profile.power_idle) * util
    return profile.host_power + plan.d * per_device


def select_parallelism(
    workload: NetworkWorkload,
    devices: tuple[int, ...],
    profile: DeviceProfile,
    algo: str = "ring",
) -> ParallelPlan:
    """Sweep d from 1 to the available device count and keep the fastest plan.

    Only degrees dividing the global batch are candidates (the split must be
    exact); ties go to the smaller degree. d=1 always divides, so a plan
    always exists.
    """
    if not devices:
        raise WorkloadError("device set is empty")
    if len(set(devices)) != len(devices):
        raise WorkloadError(f"device set has duplicates: {devices}")
    estimates = tuple(
        estimate_total(workload, d, profile, algo)
        for d in range(1, len(devices) + 1)
        if workload.global_batch % d == 0
    )
    best = min(estimates, key=lambda e: (e.t_estimate, e.d))
    plan = ParallelPlan(
        d=best.d,
        devices=tuple(devices[: best.d]),
        estimates=estimates,
        predicted_power=0.0,
    )
    power = estimate_power(plan, workload, profile)
    return ParallelPlan(plan.d, plan.devices, plan.estimates, power)


def plan_for_degree(
    workload: NetworkWorkload,
    devices: tuple[int, ...],
    profile: DeviceProfile,
    d: int,
    algo: str = "ring",
) -> ParallelPlan:
    """Build a plan for a forced degree, still reporting the full sweep."""
    if not 1 <= d <= len(devices):
        raise WorkloadError(f"forced degree {d} outside [1, {len(devices)}]")
    if workload.global_batch % d != 0:
        raise WorkloadError(f"degree {d} does not divide global batch {workload.global_batch}")
    estimates = tuple(
        estimate_total(workload, cand, profile, algo)
        for cand in range(1, len(devices) + 1)
        if workload.global_batch % cand == 0
    )
    plan = ParallelPlan(d=d, devices=tuple(devices[:d]), estimates=estimates, predicted_power=0.0)
    power = estimate_power(plan, workload, profile)
    return ParallelPlan(plan.d, plan.devices, plan.estimates, power)
