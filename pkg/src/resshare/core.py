"""Phased multiplicative-price solver with restricted steps.

One engine serves both the fixed-step core algorithm (``run_core``) and the
restart-based constant-factor method (see :mod:`resshare.scaling`).  Each
phase gives every customer, in list order, a full unit of step mass drawn
from repeated oracle calls; after each call the prices of the touched
resources are multiplied by ``exp(eps * xi * b_r)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import CallCapExceeded, ContractViolation, InputError, InternalInvariantError
from .model import (
    DEFAULT_POLICY,
    DecomposedSolution,
    DualCertificate,
    Instance,
    NumericPolicy,
    PriceState,
    RunStats,
    l1_log,
)

DEFAULT_CALL_CAP = 10_000_000


@dataclass(frozen=True)
class CoreParams:
    epsilon: float
    phases: int

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 1.0):
            raise InputError(f"epsilon must lie in (0, 1], got {self.epsilon!r}")
        if int(self.phases) != self.phases or self.phases < 1:
            raise InputError(f"phases must be a positive integer, got {self.phases!r}")
        object.__setattr__(self, "phases", int(self.phases))

    @property
    def eta(self) -> float:
        return math.expm1(self.epsilon)


@dataclass(frozen=True)
class PhaseSnapshot:
    """What an observer sees after each completed phase."""

    phase: int
    exponents: np.ndarray
    x: np.ndarray
    l1_log: float
    theta: float
    theta_exact: bool
    calls: int
    standard_calls: int
    restricted_calls: int
    phase_calls: int
    phase_standard: int
    epsilon: float
    lambda_guess: float
    restarts: int


@dataclass(frozen=True)
class CoreResult:
    primal: DecomposedSolution
    dual: DualCertificate
    stats: RunStats
    prices: PriceState
    phase_solutions_kept: bool
    params: CoreParams | None = None


def step_size(alpha: float, b, scale: float = 1.0) -> float:
    """``min(1 - alpha, scale / max(b))`` with ``scale / 0 = inf``."""
    if not (0.0 <= alpha < 1.0):
        raise InputError("alpha must lie in [0, 1)")
    bmax = float(np.max(b)) if np.size(b) else 0.0
    rem = 1.0 - alpha
    if bmax <= 0.0:
        return rem
    return min(rem, scale / bmax)


def _exact_sum(blocks, prices) -> float | None:
    total = 0.0
    for block in blocks:
        v = block.exact_opt(prices)
        if v is None:
            return None
        total += v
    return total


def _discounted_sum(blocks, prices, sigma) -> float:
    total = 0.0
    for block in blocks:
        b, _ = block.evaluate(prices)
        total += float(np.dot(b, prices))
    return total / sigma


def theta_normalized(instance: Instance, yhat: np.ndarray) -> tuple[float, bool, int]:
    """Dual value of the price direction ``yhat``; returns (value, exact, aux calls)."""
    norm = float(yhat.sum())
    exact = _exact_sum(instance.blocks, yhat)
    if exact is not None:
        return exact / norm, True, 0
    return _discounted_sum(instance.blocks, yhat, instance.sigma) / norm, False, instance.n


def theta(instance: Instance, prices: PriceState) -> tuple[float, bool]:
    """Dual value at ``prices``: exact if all blocks expose optima, else sigma-discounted."""
    value, exact, _ = theta_normalized(instance, prices.normalized())
    return value, exact


def certify_dual(instance: Instance, weights) -> DualCertificate:
    """Certified lower bound ``min_x <weights, x>`` (or its sigma-discounted version)."""
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    exact = _exact_sum(instance.blocks, w)
    if exact is not None:
        return DualCertificate(w, max(0.0, exact), True)
    return DualCertificate(w, max(0.0, _discounted_sum(instance.blocks, w, instance.sigma)), False)


def average_dual(instance: Instance, history: Sequence[PriceState]) -> DualCertificate:
    """Mean of the simplex-normalized price vectors in ``history``, certified."""
    if not history:
        raise InputError("average_dual needs a non-empty history")
    acc = np.zeros(instance.m)
    for p in history:
        acc += p.distribution()
    return certify_dual(instance, acc / len(history))


def default_call_cap(instance: Instance, epsilon: float, phase: int) -> int:
    """Per-phase oracle-call limit used when the caller gives none."""
    widths = [getattr(b, "width_hint", lambda: None)() for b in instance.blocks]
    if any(w is None for w in widths):
        return DEFAULT_CALL_CAP
    sigma_guess = instance.sigma * sum(widths)
    eta = math.expm1(epsilon)
    if eta * sigma_guess >= 1.0:
        return DEFAULT_CALL_CAP
    growth = phase * eta * sigma_guess / (1.0 - eta * sigma_guess)
    return int(min(DEFAULT_CALL_CAP, 10 * (instance.n + math.ceil(instance.m / epsilon * growth))))


def _as_checked(b, m: int):
    if type(b) is not np.ndarray:
        b = np.asarray(b, dtype=float)
    if b.shape != (m,):
        raise ContractViolation(f"oracle returned shape {b.shape}, expected ({m},)")
    bmax = float(b.max())
    if not (b.min() >= 0.0):
        raise ContractViolation("oracle returned an allocation with a negative or NaN entry")
    if bmax == math.inf:
        raise ContractViolation("oracle returned an infinite allocation")
    return b, bmax


@dataclass
class EngineOutput:
    columns: list
    total: np.ndarray
    exponents: np.ndarray
    zsum: np.ndarray
    stats: RunStats
    phases: int


def run_engine(
    instance: Instance,
    epsilon: float,
    phases: int,
    *,
    restart: bool = False,
    observer: Callable[[PhaseSnapshot], None] | None = None,
    call_cap: int | None = None,
    policy: NumericPolicy = DEFAULT_POLICY,
    max_restarts: int | None = None,
) -> EngineOutput:
    """Shared phase loop.

    With ``restart=False`` the step is ``min(1 - alpha, 1/max b)`` throughout.
    With ``restart=True`` the step is ``min(1 - alpha, lam/max b)`` and,
    whenever ``ln ||y||_1`` exceeds ``ln m + t`` right after an update, the
    phase is rolled back, ``eps`` halved and ``lam`` doubled.
    """
    m, n = instance.m, instance.n
    blocks = instance.blocks
    sigma = instance.sigma
    tol = policy.alpha_tol
    ln_m = math.log(m)
    eps = float(epsilon)
    lam = 1.0

    a = np.zeros(m)
    yhat = np.ones(m)
    total = np.zeros(m)
    zsum = np.zeros(m)
    columns = [dict() for _ in range(n)]
    stats = RunStats.for_customers(n)
    cust_std = stats.customer_standard
    cust_res = stats.customer_restricted
    n_std = 0
    n_res = 0
    exact_theta = True

    t = 1
    while t <= phases:
        snapshot = a.copy() if restart else None
        cap = call_cap if call_cap is not None else default_call_cap(instance, eps, t)
        limit = ln_m + t
        phase_total = np.zeros(m)
        phase_cols = {}
        phase_calls = 0
        phase_std = 0
        rolled_back = False
        for c in range(n):
            block = blocks[c]
            alpha = 0.0
            while True:
                b, _ = block.evaluate(yhat)
                b, bmax = _as_checked(b, m)
                phase_calls += 1
                rem = 1.0 - alpha
                inv = lam / bmax if bmax > 0.0 else math.inf
                if inv >= rem - tol:
                    xi = rem
                    done = True
                    if inv <= rem + tol:
                        n_res += 1
                        cust_res[c] += 1
                    else:
                        n_std += 1
                        phase_std += 1
                        cust_std[c] += 1
                else:
                    xi = inv
                    done = False
                    n_res += 1
                    cust_res[c] += 1
                if bmax > 0.0:
                    a += (eps * xi) * b
                    phase_total += xi * b
                    key = (c, b.tobytes())
                    col = phase_cols.get(key)
                    if col is None:
                        phase_cols[key] = [xi, b.copy() if b.flags.writeable else b]
                    else:
                        col[0] += xi
                    amax = a.max()
                    yhat = np.exp(a - amax)
                    if restart and amax + math.log(yhat.sum()) > limit:
                        rolled_back = True
                        break
                else:
                    key = (c, b.tobytes())
                    col = phase_cols.get(key)
                    if col is None:
                        phase_cols[key] = [xi, b]
                    else:
                        col[0] += xi
                if phase_calls > cap:
                    raise CallCapExceeded(
                        f"phase {t} issued more than {cap} oracle calls; "
                        "the instance is probably not normalized (optimum far above 1)"
                    )
                if done:
                    break
                alpha += xi
            if rolled_back:
                break
        stats.standard_calls = n_std
        stats.restricted_calls = n_res
        if rolled_back:
            a = snapshot
            yhat = np.exp(a - a.max())
            eps /= 2.0
            lam *= 2.0
            stats.restarts += 1
            stats.restart_phases.append(t)
            if max_restarts is not None and stats.restarts > max_restarts:
                raise InternalInvariantError(
                    f"{stats.restarts} restarts exceed the admissible {max_restarts}; "
                    "an oracle probably breaks its approximation contract"
                )
            continue

        total += phase_total
        for (c, key), (xi_sum, b) in phase_cols.items():
            col = columns[c].get(key)
            if col is None:
                columns[c][key] = [xi_sum, b]
            else:
                col[0] += xi_sum
        l1 = l1_log(a)
        th, th_exact, aux = theta_normalized(instance, yhat)
        exact_theta = exact_theta and th_exact
        stats.aux_calls += aux
        zsum += np.exp(a - l1)
        max_x = float(total.max()) / t
        stats.phases_completed = t
        stats.theta_trace.append(th)
        stats.l1_log_price_trace.append(l1)
        stats.calls_trace.append(n_std + n_res)
        stats.standard_trace.append(n_std)
        stats.max_x_trace.append(max_x)
        stats.epsilon_trace.append(eps)
        if observer is not None:
            observer(PhaseSnapshot(
                phase=t, exponents=a.copy(), x=total / t, l1_log=l1, theta=th,
                theta_exact=th_exact, calls=n_std + n_res, standard_calls=n_std,
                restricted_calls=n_res, phase_calls=phase_calls, phase_standard=phase_std,
                epsilon=eps, lambda_guess=lam, restarts=stats.restarts,
            ))
        t += 1

    stats.theta_exact = exact_theta
    stats.epsilon_final = eps
    stats.lambda_guess_final = lam
    return EngineOutput(columns, total, a, zsum, stats, phases)


def build_primal(out: EngineOutput, m: int, keep_decomposition: bool = True) -> DecomposedSolution:
    """Average the engine's phase solutions into a decomposition."""
    T = out.phases
    per_customer = []
    for cols in out.columns:
        terms = [(xi_sum / T, b) for xi_sum, b in cols.values()]
        if not keep_decomposition:
            agg = np.zeros(m)
            for coef, b in terms:
                agg += coef * b
            terms = [(1.0, agg)]
        per_customer.append(tuple(terms))
    return DecomposedSolution(tuple(per_customer), out.total / T)


def cap_growth(instance: Instance, epsilon: float) -> float:
    """Per-phase growth factor of the default call cap, or -1 if unbounded."""
    widths = [getattr(b, "width_hint", lambda: None)() for b in instance.blocks]
    if any(w is None for w in widths):
        return -1.0
    sigma_guess = instance.sigma * sum(widths)
    eta = math.expm1(epsilon)
    if eta * sigma_guess >= 1.0:
        return -1.0
    return eta * sigma_guess / (1.0 - eta * sigma_guess)


def _run_compiled(ci, instance, params, observer, call_cap, policy) -> EngineOutput:
    from .fastpath import run_kernel

    T = params.phases
    (status, fail_phase, a, total, zsum, theta_tr, l1_tr, calls_tr, std_tr, maxx_tr,
     cust_std, cust_res, n_std, n_res, keys, vals, exps_rec, tot_rec) = run_kernel(
        ci, params.epsilon, T, policy.alpha_tol, call_cap,
        cap_growth(instance, params.epsilon), observer is not None)
    if status == 1:
        raise CallCapExceeded(
            f"phase {fail_phase} exceeded the oracle-call cap; "
            "the instance is probably not normalized (optimum far above 1)"
        )
    columns = [dict() for _ in range(instance.n)]
    for key, v in zip(keys.tolist(), vals.tolist()):
        c, alloc = ci.allocation(key)
        columns[c][key] = [v, alloc]
    stats = RunStats(
        num_customers=instance.n, phases_completed=T, standard_calls=int(n_std),
        restricted_calls=int(n_res), theta_trace=theta_tr.tolist(), theta_exact=ci.all_exact,
        l1_log_price_trace=l1_tr.tolist(), calls_trace=calls_tr.tolist(),
        standard_trace=std_tr.tolist(), max_x_trace=maxx_tr.tolist(),
        epsilon_trace=[params.epsilon] * T, customer_standard=cust_std.tolist(),
        customer_restricted=cust_res.tolist(), aux_calls=0 if ci.all_exact else instance.n * T,
        epsilon_final=params.epsilon, lambda_guess_final=1.0,
    )
    if observer is not None:
        prev_calls = prev_std = 0
        for i in range(T):
            calls, std = int(calls_tr[i]), int(std_tr[i])
            observer(PhaseSnapshot(
                phase=i + 1, exponents=exps_rec[i].copy(), x=tot_rec[i] / (i + 1),
                l1_log=float(l1_tr[i]), theta=float(theta_tr[i]), theta_exact=ci.all_exact,
                calls=calls, standard_calls=std, restricted_calls=calls - std,
                phase_calls=calls - prev_calls, phase_standard=std - prev_std,
                epsilon=params.epsilon, lambda_guess=1.0, restarts=0,
            ))
            prev_calls, prev_std = calls, std
    return EngineOutput(columns, total, a, zsum, stats, T)


def run_core(
    instance: Instance,
    params: CoreParams,
    observer: Callable[[PhaseSnapshot], None] | None = None,
    call_cap: int | None = None,
    keep_decomposition: bool = True,
    policy: NumericPolicy = DEFAULT_POLICY,
    backend: str = "auto",
) -> CoreResult:
    """Run ``params.phases`` phases of the fixed-step algorithm.

    The caller is responsible for normalizing the instance so that the
    optimum is at most about 1; otherwise phases can take very many calls
    and the per-phase call cap raises :class:`CallCapExceeded`.

    ``backend`` is ``"python"``, ``"compiled"`` (enumerable blocks only) or
    ``"auto"`` (compiled when possible).
    """
    if backend not in ("auto", "python", "compiled"):
        raise InputError(f"unknown backend {backend!r}")
    ci = None
    if backend != "python":
        from .fastpath import compile_instance

        ci = compile_instance(instance)
        if ci is None and backend == "compiled":
            raise InputError("instance cannot be run by the compiled backend")
    if ci is not None:
        out = _run_compiled(ci, instance, params, observer, call_cap, policy)
    else:
        out = run_engine(instance, params.epsilon, params.phases, observer=observer,
                         call_cap=call_cap, policy=policy)
    primal = build_primal(out, instance.m, keep_decomposition)
    dual = certify_dual(instance, out.zsum / out.phases)
    if not dual.exact:
        out.stats.aux_calls += instance.n
    return CoreResult(primal, dual, out.stats, PriceState(out.exponents), keep_decomposition, params)
