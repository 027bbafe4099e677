"""Block-angular min-max resource sharing with multiplicative price updates."""

from .core import CoreParams, CoreResult, average_dual, certify_dual, run_core, step_size, theta
from .errors import (
    CallCapExceeded,
    ContractViolation,
    DegenerateInstance,
    InfeasibleBlockError,
    InputError,
    InternalInvariantError,
    ResShareError,
    UnsupportedInstanceError,
)
from .model import (
    DEFAULT_POLICY,
    DecomposedSolution,
    DualCertificate,
    Instance,
    LocalDualityCert,
    NumericPolicy,
    Ordering,
    PriceState,
    RunStats,
    dec_compare,
    l1_log,
    sorted_decreasing,
)
from .oracles import (
    ApproxWrapper,
    BlockOracle,
    FunctionBlock,
    PathBlock,
    ProductBlock,
    ScaledSimplexBlock,
    VertexListBlock,
    ZeroBlock,
    minkowski_opt,
    oracle_evaluate,
    shortest_path_evaluate,
)
from .scaling import PipelineResult, bootstrap_scale, run_constant_factor, solve_fptas

__version__ = "0.1.0"
