"""tendist: compile dense tensor statements for a virtual distributed
machine and simulate them deterministically.

The pipeline, bottom to top:

- tensors / machine: dense storage and the processor grid.
- ir: tensor index notation (parse or build statements, sequential
  reference evaluation).
- cin: the loop-level form statements lower to, plus its interpreter
  and pretty printer.
- distribution: block placements of tensors onto machines.
- scheduling: loop transformations (split, divide, reorder, distribute,
  communicate, rotate, leaf kernels) as data.
- simulator: lowers a scheduled statement to per-processor tasks, runs
  them, and records every transfer in a ledger.
- algorithms: ready-made distributed matrix/tensor algorithm bundles.
"""

from . import errors
from .errors import ConfigError, TendistError, VerifyFail
from .tensors import (
    DenseTensor,
    from_bytes,
    from_json_obj,
    load_tensor,
    load_tensor_json,
    save_tensor,
    save_tensor_json,
    to_bytes,
    to_json_obj,
    zeros,
)
from .machine import Machine, grid, make_machine, parse_machine
from .ir import (
    Access,
    Add,
    Const,
    IndexVar,
    Mul,
    TensorIndexStmt,
    TensorVar,
    build_statement,
    format_expr,
    format_statement,
    parse_statement,
    sequential_evaluate,
)
from .cin import (
    Assign,
    Communicate,
    Distribute,
    Divide,
    Forall,
    LeafKernel,
    Place,
    Reduce,
    Rotate,
    Seq,
    Split,
    Suchthat,
    interpret,
    leaf_kernel_registered,
    lower_to_cin,
    pretty,
    register_leaf_kernel,
)
from .distribution import (
    HyperRect,
    TensorDistribution,
    block_range,
    full_rect,
    lower_placement,
    parse_distribution,
    subtract_rects,
)
from .scheduling import (
    Schedule,
    communicate,
    distribute,
    distribute_grid,
    divide,
    parallelize,
    parse_schedule,
    reorder,
    rotate,
    schedule,
    split,
    substitute_leaf,
)
from .simulator import (
    CommEvent,
    ExecutionTrace,
    RegionStore,
    RunResult,
    access_rect,
    execute,
    lower_to_tasks,
    redistribute,
    run_statement,
    var_interval,
    verify_result,
    write_edge_csv,
)
from .algorithms import (
    ALGORITHMS,
    AlgorithmBundle,
    bundle_from_config,
    cannon,
    cosma_like,
    innerprod,
    johnson,
    mttkrp,
    pumma,
    random_inputs,
    solomonik,
    summa,
    summa_hier,
    ttm,
    ttv,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "TendistError",
    "ConfigError",
    "VerifyFail",
    "DenseTensor",
    "zeros",
    "to_bytes",
    "from_bytes",
    "save_tensor",
    "load_tensor",
    "to_json_obj",
    "from_json_obj",
    "save_tensor_json",
    "load_tensor_json",
    "Machine",
    "grid",
    "make_machine",
    "parse_machine",
    "IndexVar",
    "TensorVar",
    "Access",
    "Add",
    "Mul",
    "Const",
    "TensorIndexStmt",
    "build_statement",
    "parse_statement",
    "format_expr",
    "format_statement",
    "sequential_evaluate",
    "Forall",
    "Assign",
    "Reduce",
    "Place",
    "Seq",
    "Suchthat",
    "Split",
    "Divide",
    "Distribute",
    "Rotate",
    "Communicate",
    "LeafKernel",
    "lower_to_cin",
    "interpret",
    "pretty",
    "register_leaf_kernel",
    "leaf_kernel_registered",
    "HyperRect",
    "full_rect",
    "block_range",
    "subtract_rects",
    "TensorDistribution",
    "parse_distribution",
    "lower_placement",
    "Schedule",
    "schedule",
    "parse_schedule",
    "split",
    "divide",
    "reorder",
    "parallelize",
    "distribute",
    "distribute_grid",
    "communicate",
    "rotate",
    "substitute_leaf",
    "var_interval",
    "access_rect",
    "CommEvent",
    "ExecutionTrace",
    "RegionStore",
    "RunResult",
    "lower_to_tasks",
    "execute",
    "run_statement",
    "redistribute",
    "verify_result",
    "write_edge_csv",
    "ALGORITHMS",
    "AlgorithmBundle",
    "bundle_from_config",
    "random_inputs",
    "summa",
    "cannon",
    "pumma",
    "johnson",
    "solomonik",
    "cosma_like",
    "summa_hier",
    "ttv",
    "ttm",
    "innerprod",
    "mttkrp",
]
