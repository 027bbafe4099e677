"""Shared data model: instances, prices, allocations and run statistics.

Prices are only ever stored as exponents ``a_r = ln y_r``; the multiplicative
updates drive ``y`` far outside double range at FPTAS parameter choices.
Resource indices are 0-based throughout.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class NumericPolicy:
    """Tolerances used across the package (one knob for all checks)."""

    decomposition_tol: float = 1e-9
    simplex_tol: float = 1e-9
    alpha_tol: float = 1e-12


DEFAULT_POLICY = NumericPolicy()


def as_allocation(x, m: int | None = None) -> np.ndarray:
    """Validate ``x`` as a finite non-negative vector and return a float copy."""
    arr = np.array(x, dtype=float).reshape(-1)
    if m is not None and arr.shape[0] != m:
        raise InputError(f"allocation has length {arr.shape[0]}, expected {m}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise InputError("allocation entries must be finite and non-negative")
    return arr


@dataclass(frozen=True)
class Instance:
    """A block-angular min-max resource sharing instance.

    ``blocks`` holds one oracle per customer.  ``scale`` records the factor
    by which the blocks have been multiplied relative to the loaded instance,
    so results can be mapped back to original units.
    """

    num_resources: int
    blocks: tuple
    sigma: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if int(self.num_resources) != self.num_resources or self.num_resources < 1:
            raise InputError("num_resources must be a positive integer")
        if not self.blocks:
            raise InputError("an instance needs at least one customer")
        if not (self.sigma >= 1.0) or not math.isfinite(self.sigma):
            raise InputError("sigma must be a finite real >= 1")
        if not (self.scale > 0) or not math.isfinite(self.scale):
            raise InputError("scale must be a finite positive real")
        for c, block in enumerate(self.blocks):
            bm = getattr(block, "num_resources", None)
            if bm is not None and bm != self.num_resources:
                raise InputError(
                    f"block {c} acts on {bm} resources, instance has {self.num_resources}"
                )

    @property
    def n(self) -> int:
        return len(self.blocks)

    @property
    def m(self) -> int:
        return self.num_resources

    def scaled(self, factor: float) -> "Instance":
        """Return the instance with every block multiplied by ``factor``."""
        from .oracles import scale_block

        if not (factor > 0) or not math.isfinite(factor):
            raise InputError("scaling factor must be a finite positive real")
        return Instance(
            self.num_resources,
            tuple(scale_block(b, factor) for b in self.blocks),
            sigma=self.sigma,
            scale=self.scale * factor,
        )


@dataclass
class PriceState:
    """Log-domain resource prices; ``exponents[r] = ln y_r``."""

    exponents: np.ndarray

    def __post_init__(self):
        self.exponents = np.asarray(self.exponents, dtype=float)

    @classmethod
    def uniform(cls, m: int) -> "PriceState":
        return cls(np.zeros(m))

    def normalized(self) -> np.ndarray:
        """Prices divided by their maximum: ``exp(a - max a)``, entries in (0, 1]."""
        a = self.exponents
        return np.exp(a - a.max())

    def distribution(self) -> np.ndarray:
        """Prices divided by their l1 norm (an element of the simplex)."""
        return np.exp(self.exponents - l1_log(self))

    def copy(self) -> "PriceState":
        return PriceState(self.exponents.copy())


def l1_log(prices) -> float:
    """Return ``ln ||y||_1`` for log-prices ``a`` without overflow.

    Accepts a :class:`PriceState` or a raw exponent vector.
    """
    a = prices.exponents if isinstance(prices, PriceState) else np.asarray(prices, dtype=float)
    amax = a.max()
    return float(amax + math.log(np.exp(a - amax).sum()))


def sorted_decreasing(x) -> np.ndarray:
    """Entries of ``x`` sorted in non-increasing order."""
    arr = np.asarray(x, dtype=float).reshape(-1)
    return np.sort(arr, kind="stable")[::-1].copy()


class Ordering(enum.Enum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


def dec_compare(x, y, tol: float = 0.0) -> Ordering:
    """Compare ``x`` and ``y`` in the decreasing preorder.

    The decreasingly sorted vectors are compared lexicographically.  With the
    default ``tol=0`` entries are equal only if they coincide exactly.
    """
    xs, ys = sorted_decreasing(x), sorted_decreasing(y)
    if xs.shape != ys.shape:
        raise InputError("dec_compare needs vectors of equal length")
    for u, v in zip(xs, ys):
        if abs(u - v) <= tol:
            continue
        return Ordering.LESS if u < v else Ordering.GREATER
    return Ordering.EQUAL


@dataclass(frozen=True)
class DecomposedSolution:
    """Per-customer convex combinations of oracle outputs and their sum.

    ``per_customer[c]`` is a tuple of ``(coefficient, allocation)`` pairs.
    """

    per_customer: tuple
    aggregate: np.ndarray

    @classmethod
    def from_parts(cls, per_customer: Sequence[Sequence[tuple[float, np.ndarray]]], m: int):
        parts = tuple(
            tuple((float(coef), np.asarray(alloc, dtype=float)) for coef, alloc in terms)
            for terms in per_customer
        )
        agg = np.zeros(m)
        for terms in parts:
            for coef, alloc in terms:
                agg += coef * alloc
        return cls(parts, agg)

    @property
    def num_resources(self) -> int:
        return int(self.aggregate.shape[0])

    def max_entry(self) -> float:
        return float(self.aggregate.max())

    def customer_allocation(self, c: int) -> np.ndarray:
        out = np.zeros(self.num_resources)
        for coef, alloc in self.per_customer[c]:
            out += coef * alloc
        return out

    def scaled(self, factor: float) -> "DecomposedSolution":
        """Multiply every allocation (not the coefficients) by ``factor``."""
        parts = tuple(
            tuple((coef, alloc * factor) for coef, alloc in terms) for terms in self.per_customer
        )
        return DecomposedSolution(parts, self.aggregate * factor)

    def violations(self, policy: NumericPolicy = DEFAULT_POLICY) -> list[str]:
        """Describe every broken invariant; an empty list means consistent.

        The re-summation tolerance is relative to the entry magnitude (with an
        absolute floor of 1), since oracle outputs can be huge.
        """
        tol = policy.decomposition_tol
        problems = []
        total = np.zeros(self.num_resources)
        for c, terms in enumerate(self.per_customer):
            s = math.fsum(coef for coef, _ in terms)
            if abs(s - 1.0) > tol:
                problems.append(f"customer {c}: coefficients sum to {s!r}")
            for coef, alloc in terms:
                if not (0.0 < coef <= 1.0 + tol):
                    problems.append(f"customer {c}: coefficient {coef!r} outside (0, 1]")
                if np.any(alloc < 0):
                    problems.append(f"customer {c}: negative allocation entry")
                total += coef * alloc
        err = np.abs(total - self.aggregate) / np.maximum(1.0, np.abs(self.aggregate))
        if err.size and err.max() > tol:
            problems.append(f"aggregate differs from re-summed decomposition by {err.max():.3e}")
        return problems


@dataclass(frozen=True)
class DualCertificate:
    """A dual point ``weights`` in the simplex with a certified lower bound.

    When ``exact`` is False the value is the sigma-discounted bound built from
    oracle answers rather than exact block optima.
    """

    weights: np.ndarray
    certified_value: float
    exact: bool

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if np.any(w < 0) or abs(w.sum() - 1.0) > DEFAULT_POLICY.simplex_tol:
            raise InputError("dual weights must lie in the probability simplex")
        if not (self.certified_value >= 0):
            raise InputError("certified dual value must be non-negative")


@dataclass
class RunStats:
    """Counters and per-phase traces of one solver run.

    ``*_trace`` lists carry one entry per completed phase.  Oracle calls made
    only to evaluate dual values are counted separately in ``aux_calls``.
    """

    num_customers: int = 0
    phases_completed: int = 0
    standard_calls: int = 0
    restricted_calls: int = 0
    restarts: int = 0
    restart_phases: list = field(default_factory=list)
    theta_trace: list = field(default_factory=list)
    theta_exact: bool = True
    l1_log_price_trace: list = field(default_factory=list)
    calls_trace: list = field(default_factory=list)
    standard_trace: list = field(default_factory=list)
    max_x_trace: list = field(default_factory=list)
    epsilon_trace: list = field(default_factory=list)
    customer_standard: list = field(default_factory=list)
    customer_restricted: list = field(default_factory=list)
    aux_calls: int = 0
    epsilon_final: float = float("nan")
    lambda_guess_final: float = 1.0

    @classmethod
    def for_customers(cls, n: int) -> "RunStats":
        return cls(num_customers=n, customer_standard=[0] * n, customer_restricted=[0] * n)

    @property
    def total_calls(self) -> int:
        return self.standard_calls + self.restricted_calls


@dataclass(frozen=True)
class LocalDualityCert:
    """A claim that local weak duality holds for ``subset`` with bound ``mu``."""

    subset: frozenset
    mu: float

    def __post_init__(self):
        s = frozenset(int(r) for r in self.subset)
        object.__setattr__(self, "subset", s)
        if not s:
            raise InputError("a local duality certificate needs a non-empty subset")
        if min(s) < 0:
            raise InputError("resource indices are 0-based and non-negative")
        if not (self.mu >= 0):
            raise InputError("mu must be non-negative")

    def indices(self) -> np.ndarray:
        return np.array(sorted(self.subset), dtype=int)

    def fits(self, m: int) -> bool:
        return max(self.subset) < m
