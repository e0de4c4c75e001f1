"""Workload-aware data parallelization of DNN training graphs.

The package turns a single-device training dataflow graph into a multi-device
data-parallel graph in three rewrite steps, picks how many devices are worth
using with an analytical step-time model, and checks both the semantics (a
reference interpreter) and the performance claims (an event-driven simulator)
of every rewrite.
"""

from .errors import (
    BuildError,
    CycleError,
    EvalError,
    ParseError,
    ShapeError,
    SimError,
    TransformError,
    WapError,
    WorkloadError,
)
from .interp import (
    EquivalenceReport,
    compare,
    execute,
    generate_inputs,
    initial_variables,
)
from .ir import (
    BYTES_PER_ELEMENT,
    Finding,
    Graph,
    GraphBuilder,
    Node,
    OpKind,
    TensorShape,
    ValidationReport,
    base_id,
    deserialize,
    infer_shapes,
    replica_index,
    serialize,
    topo_order,
    validate,
)
from .planner import (
    CostEstimate,
    DeviceProfile,
    ParallelPlan,
    comm_time,
    compute_time,
    estimate_power,
    estimate_total,
    load_profile,
    plan_for_degree,
    select_parallelism,
)
from .sim import ExecutionTrace, LinkTransfer, SimResult, comm_volume, simulate_timing
from .training import TrainingGraphSpec, build_training_graph
from .transform import (
    TransformReport,
    check_parallel_structure,
    localize_auxiliary,
    optimize_gradient_aggregation,
    replicate_primary,
    transform,
)
from .workloads import LayerWorkload, NetworkWorkload, extract_workloads, flops_of, node_flops

__version__ = "0.1.0"
