"""Command-line frontend: validate, estimate, transform, verify, bench, auto.

Exit codes: 0 success, 1 validation/verification failure, 2 usage error
(bad arguments, unreadable files). Output files are written atomically (a
temp file in the target directory is renamed into place), so a failing run
never leaves partial artifacts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

# The interpreter must be bit-reproducible run to run; pin the BLAS thread
# pools before numpy loads so reductions cannot be repartitioned.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

from . import interp, planner, sim, transform as tf
from .errors import WapError
from .ir import Graph, deserialize, serialize, validate
from .workloads import extract_workloads

OK, FAIL, USAGE = 0, 1, 2


def _write_atomic(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _json_bytes(doc: dict) -> bytes:
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8")


def _load_graph(path: str) -> Graph:
    return deserialize(Path(path).read_bytes())


def _load_and_check(path: str) -> Graph:
    graph = _load_graph(path)
    report = validate(graph)
    if not report.ok:
        raise WapError(f"graph {path} is invalid:\n{report}")
    return graph


def _devices(count: int) -> tuple[int, ...]:
    return tuple(range(count))


def _plan_table(plan: planner.ParallelPlan) -> str:
    lines = ["  d   t_compute      t_comm         t_estimate     throughput"]
    for e in plan.estimates:
        marker = "*" if e.d == plan.d else " "
        lines.append(
            f" {marker}{e.d:<3d} {e.t_c_total:<14.6g} {e.t_s_total:<14.6g} "
            f"{e.t_estimate:<14.6g} {e.predicted_throughput:<14.6g}"
        )
    return "\n".join(lines)


def _plan_json(plan: planner.ParallelPlan) -> dict:
    return {
        "d": plan.d,
        "devices": list(plan.devices),
        "predicted_power": plan.predicted_power,
        "estimates": [
            {
                "d": e.d,
                "t_c_total": e.t_c_total,
                "t_s_total": e.t_s_total,
                "t_estimate": e.t_estimate,
                "predicted_throughput": e.predicted_throughput,
            }
            for e in plan.estimates
        ],
    }


def _cmd_validate(args: argparse.Namespace) -> int:
    graph = _load_graph(args.graph)
    report = validate(graph)
    print(report)
    return OK if report.ok else FAIL


def _cmd_estimate(args: argparse.Namespace) -> int:
    graph = _load_and_check(args.graph)
    profile = planner.load_profile(args.profile)
    workload = extract_workloads(_shaped(graph))
    plan = planner.select_parallelism(workload, _devices(args.devices), profile, args.algo)
    print(f"workload: {len(workload.layers)} primary layers, "
          f"batch {workload.global_batch}, {workload.total_weight_bytes} weight bytes")
    print(_plan_table(plan))
    print(f"selected d={plan.d} (predicted power {plan.predicted_power:.2f} W)")
    if args.dump_workloads:
        _write_atomic(Path(args.dump_workloads), _json_bytes(workload.to_json()))
    if args.report:
        _write_atomic(Path(args.report), _json_bytes(_plan_json(plan)))
    return OK


def _shaped(graph: Graph) -> Graph:
    from .ir import infer_shapes

    return infer_shapes(graph)


def _make_plan(graph: Graph, args: argparse.Namespace) -> planner.ParallelPlan:
    profile = planner.load_profile(args.profile)
    workload = extract_workloads(_shaped(graph))
    devices = _devices(args.devices)
    if getattr(args, "force_d", None):
        return planner.plan_for_degree(workload, devices, profile, args.force_d)
    return planner.select_parallelism(workload, devices, profile)


def _cmd_transform(args: argparse.Namespace) -> int:
    graph = _load_and_check(args.graph)
    plan = _make_plan(graph, args)
    steps = {"step1": 1, "step2": 2, "step3": 3}[args.stop_after] if args.stop_after else 3
    reports: list[tf.TransformReport] = []
    out = graph
    if plan.d == 1:
        out, reports = tf.transform(graph, plan)
    else:
        out, r1 = tf.replicate_primary(graph, plan)
        reports.append(r1)
        if steps >= 2:
            out, r2 = tf.localize_auxiliary(out, plan)
            reports.append(r2)
        if steps >= 3:
            out, r3 = tf.optimize_gradient_aggregation(out, plan)
            reports.append(r3)
    _write_atomic(Path(args.output), serialize(out))
    for r in reports:
        print(f"{r.step}: replicated={r.nodes_replicated} splits={r.splits_inserted} "
              f"concats={r.concats_inserted} pairs_removed={r.split_concat_pairs_removed} "
              f"cross_edges {r.cross_device_edges_before}->{r.cross_device_edges_after} "
              f"allreduce={r.allreduce_nodes_inserted}")
    if args.report:
        doc = {"plan": _plan_json(plan), "steps": [r.to_json() for r in reports]}
        _write_atomic(Path(args.report), _json_bytes(doc))
    print(f"wrote {args.output} (d={plan.d})")
    return OK


def _cmd_verify(args: argparse.Namespace) -> int:
    original = _load_and_check(args.original)
    transformed = _load_and_check(args.transformed)
    inputs = interp.generate_inputs(original, args.seed)
    report = interp.compare(original, transformed, inputs, args.seed, args.tol)
    for name in sorted(report.deviations):
        print(f"  {name}: max relative deviation {report.deviations[name]:.3e}")
    if report.passed:
        print(f"verification PASSED at tolerance {args.tol:g}")
        return OK
    print(f"verification FAILED at tolerance {args.tol:g}: " + ", ".join(report.failures()))
    return FAIL


def _cmd_bench(args: argparse.Namespace) -> int:
    graph = _load_and_check(args.graph)
    profile = planner.load_profile(args.profile)
    trace, result = sim.simulate_timing(graph, profile)
    agg_bytes, per_var = sim.comm_volume(trace)
    print(f"step_time {result.step_time:.6g} s, throughput {result.throughput:.6g} samples/s")
    print(f"energy {result.energy_per_step:.6g} J, comm {result.comm_bytes_total} bytes "
          f"({agg_bytes} aggregation)")
    if args.trace:
        _write_atomic(Path(args.trace), _json_bytes(trace.to_json()))
    if args.report:
        doc = result.to_json()
        doc["aggregation_bytes"] = agg_bytes
        doc["aggregation_bytes_per_variable"] = dict(sorted(per_var.items()))
        _write_atomic(Path(args.report), _json_bytes(doc))
    return OK


def _cmd_auto(args: argparse.Namespace) -> int:
    graph = _load_and_check(args.graph)
    profile = planner.load_profile(args.profile)
    plan = _make_plan(graph, args)
    out, reports = tf.transform(graph, plan)

    doc: dict = {"plan": _plan_json(plan), "steps": [r.to_json() for r in reports]}
    if plan.d == 1:
        print("WAU decision: a single device minimizes estimated step time; "
              "graph left unchanged")
    else:
        inputs = interp.generate_inputs(graph, args.seed)
        eq = interp.compare(graph, out, inputs, args.seed, args.tol)
        doc["verify"] = {
            "passed": eq.passed,
            "tolerance": args.tol,
            "max_deviation": eq.max_deviation,
            "deviations": dict(sorted(eq.deviations.items())),
        }
        if not eq.passed:
            print(f"refusing to emit transformed graph: verification failed for "
                  + ", ".join(eq.failures()))
            return FAIL
        problems = tf.check_parallel_structure(out, plan)
        if problems:
            print("refusing to emit transformed graph: structural check failed")
            for p in problems:
                print(f"  {p}")
            return FAIL

    _, bench_orig = sim.simulate_timing(graph, profile)
    _, bench_out = sim.simulate_timing(out, profile)
    doc["bench"] = {"original": bench_orig.to_json(), "transformed": bench_out.to_json()}

    _write_atomic(Path(args.output), serialize(out))
    if args.report:
        _write_atomic(Path(args.report), _json_bytes(doc))
    print(f"selected d={plan.d}; simulated throughput "
          f"{bench_orig.throughput:.6g} -> {bench_out.throughput:.6g} samples/s")
    print(f"wrote {args.output}")
    return OK


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wap", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check graph structural invariants")
    v.add_argument("--graph", required=True)
    v.set_defaults(fn=_cmd_validate)

    e = sub.add_parser("estimate", help="sweep replication degrees through the cost model")
    e.add_argument("--graph", required=True)
    e.add_argument("--profile", required=True)
    e.add_argument("--devices", type=int, required=True)
    e.add_argument("--algo", choices=["ring", "naive_all_to_all"], default="ring")
    e.add_argument("--dump-workloads", metavar="PATH")
    e.add_argument("--report", metavar="PATH")
    e.set_defaults(fn=_cmd_estimate)

    t = sub.add_parser("transform", help="rewrite a graph for data parallelism")
    t.add_argument("--graph", required=True)
    t.add_argument("--profile", required=True)
    t.add_argument("--devices", type=int, required=True)
    t.add_argument("--force-d", type=int, dest="force_d")
    t.add_argument("--stop-after", choices=["step1", "step2", "step3"])
    t.add_argument("-o", "--output", required=True)
    t.add_argument("--report", metavar="PATH")
    t.set_defaults(fn=_cmd_transform)

    w = sub.add_parser("verify", help="compare two graphs with the reference interpreter")
    w.add_argument("--original", required=True)
    w.add_argument("--transformed", required=True)
    w.add_argument("--seed", type=int, default=42)
    w.add_argument("--tol", type=float, default=1e-6)
    w.set_defaults(fn=_cmd_verify)

    b = sub.add_parser("bench", help="simulate step time, traffic, and energy")
    b.add_argument("--graph", required=True)
    b.add_argument("--profile", required=True)
    b.add_argument("--trace", metavar="PATH")
    b.add_argument("--report", metavar="PATH")
    b.set_defaults(fn=_cmd_bench)

    a = sub.add_parser("auto", help="estimate, transform, verify, and bench in one run")
    a.add_argument("--graph", required=True)
    a.add_argument("--profile", required=True)
    a.add_argument("--devices", type=int, required=True)
    a.add_argument("--force-d", type=int, dest="force_d")
    a.add_argument("-o", "--output", required=True)
    a.add_argument("--report", metavar="PATH")
    a.add_argument("--seed", type=int, default=42)
    a.add_argument("--tol", type=float, default=1e-6)
    a.set_defaults(fn=_cmd_auto)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code not in (0, None) else OK

    if getattr(args, "devices", None) is not None and args.devices < 1:
        print("error: --devices must be >= 1", file=sys.stderr)
        return USAGE
    force_d = getattr(args, "force_d", None)
    if force_d is not None and not 1 <= force_d <= args.devices:
        print(f"error: --force-d must be in [1, {args.devices}]", file=sys.stderr)
        return USAGE

    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    except WapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAIL


if __name__ == "__main__":
    sys.exit(main())
