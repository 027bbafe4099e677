"""Scaling stages and the full approximation pipeline.

``bootstrap_scale`` uses one oracle call per customer at unit prices to
bring the optimum into ``[1, sigma*m]``.  ``run_constant_factor`` is the
restart-based method that returns a solution within a factor ``16*sigma``
after ``ceil(ln m)`` phases.  ``solve_fptas`` chains both with the core
algorithm at the accuracy parameters that give a ``(1+delta)*sigma``
guarantee.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (
    CoreParams,
    CoreResult,
    PhaseSnapshot,
    build_primal,
    certify_dual,
    run_core,
    run_engine,
)
from .errors import DegenerateInstance, InputError
from .model import (
    DEFAULT_POLICY,
    DecomposedSolution,
    DualCertificate,
    Instance,
    NumericPolicy,
    PriceState,
    RunStats,
)
from .oracles import check_allocation

MAX_CORE_PHASES = 10_000_000


@dataclass
class ScalingState:
    """Final state of the restart loop."""

    lambda_guess: float
    epsilon_current: float
    phase_snapshot: PriceState
    restart_log: list = field(default_factory=list)


@dataclass(frozen=True)
class BootstrapResult:
    instance: Instance
    x0: DecomposedSolution
    factor: float
    stats: RunStats


@dataclass(frozen=True)
class ConstantFactorResult:
    primal: DecomposedSolution
    stats: RunStats
    state: ScalingState
    dual: DualCertificate
    phases: int
    epsilon_initial: float


@dataclass(frozen=True)
class PipelineResult:
    """Output of :func:`solve_fptas`; ``primal`` and ``dual`` are in original units."""

    primal: DecomposedSolution
    dual: DualCertificate
    lambda_star_bounds: tuple
    stats_bootstrap: RunStats
    stats_constfactor: RunStats
    stats_core: RunStats
    delta: float
    bootstrap_factor: float = 1.0
    constfactor_factor: float = 1.0
    degenerate: bool = False
    core_params: CoreParams | None = None
    core: CoreResult | None = None
    constant_factor: ConstantFactorResult | None = None

    @property
    def total_factor(self) -> float:
        """Multiplier from original units to the units the core stage ran in."""
        return self.bootstrap_factor * self.constfactor_factor


def bootstrap_scale(instance: Instance) -> BootstrapResult:
    """Rescale so that the optimum lies in ``[1, sigma*m]``.

    Raises :class:`DegenerateInstance` (carrying the zero solution) when the
    unit-price answers sum to the zero vector, i.e. the optimum is 0.
    """
    m, n = instance.m, instance.n
    ones = np.ones(m)
    stats = RunStats.for_customers(n)
    parts = []
    x0 = np.zeros(m)
    for c, block in enumerate(instance.blocks):
        b, _ = block.evaluate(ones)
        b, _ = check_allocation(b, m)
        parts.append(((1.0, b.copy() if b.flags.writeable else b),))
        x0 += b
        stats.standard_calls += 1
        stats.customer_standard[c] += 1
    sol = DecomposedSolution(tuple(parts), x0)
    width = float(x0.max())
    if width == 0.0:
        raise DegenerateInstance("all oracle answers at unit prices are zero; the optimum is 0", sol)
    factor = instance.sigma * m / width
    return BootstrapResult(instance.scaled(factor), sol.scaled(factor), factor, stats)


def constant_factor_phases(m: int) -> int:
    return max(1, math.ceil(math.log(m)))


def max_restarts(instance: Instance) -> int:
    return math.ceil(math.log2(instance.sigma * instance.m)) + 1


def run_constant_factor(
    instance: Instance,
    observer: Callable[[PhaseSnapshot], None] | None = None,
    call_cap: int | None = None,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> ConstantFactorResult:
    """Restart-based constant-factor approximation on a bootstrapped instance."""
    T = constant_factor_phases(instance.m)
    eps0 = 1.0 / (4.0 * instance.sigma)
    out = run_engine(instance, eps0, T, restart=True, observer=observer, call_cap=call_cap,
                     policy=policy, max_restarts=max_restarts(instance))
    primal = build_primal(out, instance.m)
    dual = certify_dual(instance, out.zsum / T)
    if not dual.exact:
        out.stats.aux_calls += instance.n
    state = ScalingState(out.stats.lambda_guess_final, out.stats.epsilon_final,
                         PriceState(out.exponents.copy()), list(out.stats.restart_phases))
    return ConstantFactorResult(primal, out.stats, state, dual, T, eps0)


def fptas_params(m: int, sigma: float, delta: float) -> CoreParams:
    """Core parameters for a ``(1+delta)*sigma`` guarantee after the 16-sigma stage."""
    eps = delta / (8.0 * sigma)
    c = 1.0 / (16.0 * sigma)
    T = max(1, math.ceil(math.log(m) / (2.0 * sigma * c * eps * eps)))
    if T > MAX_CORE_PHASES:
        raise InputError(f"{T} core phases exceed the limit of {MAX_CORE_PHASES}; increase delta")
    return CoreParams(eps, T)


def _degenerate_result(instance: Instance, delta: float, exc: DegenerateInstance) -> PipelineResult:
    m, n = instance.m, instance.n
    zero = np.zeros(m)
    primal = DecomposedSolution(tuple(((1.0, zero),) for _ in range(n)), zero.copy())
    boot = RunStats.for_customers(n)
    boot.standard_calls = n
    boot.customer_standard = [1] * n
    dual = DualCertificate(np.full(m, 1.0 / m), 0.0, True)
    return PipelineResult(primal, dual, (0.0, 0.0), boot, RunStats.for_customers(n),
                          RunStats.for_customers(n), delta, degenerate=True)


def solve_fptas(
    instance: Instance,
    delta: float,
    observer: Callable[[PhaseSnapshot], None] | None = None,
    constfactor_observer: Callable[[PhaseSnapshot], None] | None = None,
    policy: NumericPolicy = DEFAULT_POLICY,
    backend: str = "auto",
) -> PipelineResult:
    """Bootstrap, constant-factor stage, rescale, core run; results in original units."""
    if not (0.0 < delta <= 1.0):
        raise InputError(f"delta must lie in (0, 1], got {delta!r}")
    try:
        boot = bootstrap_scale(instance)
    except DegenerateInstance as exc:
        return _degenerate_result(instance, delta, exc)
    cf = run_constant_factor(boot.instance, observer=constfactor_observer, policy=policy)
    width = cf.primal.max_entry()
    if not (width > 0.0):  # pragma: no cover - excluded by the bootstrap bounds
        raise InputError("constant-factor stage returned a zero solution")
    cf_factor = 1.0 / width
    normalized = boot.instance.scaled(cf_factor)
    params = fptas_params(instance.m, instance.sigma, delta)
    core = run_core(normalized, params, observer=observer, policy=policy, backend=backend)

    total = boot.factor * cf_factor
    primal = core.primal.scaled(1.0 / total)
    dual = certify_dual(instance, core.dual.weights)
    if not dual.exact:
        core.stats.aux_calls += instance.n

    x0_orig = boot.x0.aggregate / boot.factor
    lower = max(dual.certified_value, float(x0_orig.sum()) / (instance.sigma * instance.m))
    upper = min(primal.max_entry(), float(x0_orig.max()), width / boot.factor)
    return PipelineResult(
        primal, dual, (lower, upper), boot.stats, cf.stats, core.stats, delta,
        bootstrap_factor=boot.factor, constfactor_factor=cf_factor, core_params=params,
        core=core, constant_factor=cf,
    )
