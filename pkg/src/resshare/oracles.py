"""Block oracles: approximate linear minimization over one customer's block.

Every oracle answers ``evaluate(y) -> (allocation, cost)`` for a non-negative
price vector ``y``.  The solvers pass prices divided by their maximum, so an
oracle must return an allocation that is valid for every positive multiple of
the prices it sees.  Exact oracles also answer ``exact_opt(y)``.
"""

from __future__ import annotations

import abc
import heapq
import math
from collections import deque
from typing import Callable, Sequence

import numpy as np

from .errors import ContractViolation, InfeasibleBlockError, InputError
from .model import Instance, PriceState


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class BlockOracle(abc.ABC):
    """Interface of a customer's block solver."""

    num_resources: int
    sigma: float = 1.0

    @abc.abstractmethod
    def evaluate(self, prices: np.ndarray) -> tuple[np.ndarray, float]:
        """Return an allocation in the block and its cost ``<prices, allocation>``."""

    def exact_opt(self, prices: np.ndarray) -> float | None:
        """``min_x <prices, x>`` over the block, or None if not available."""
        return None

    def width_hint(self) -> float | None:
        """Upper bound on the largest entry of any allocation, if known."""
        return None

    def candidates(self) -> np.ndarray | None:
        """All allocations the oracle can return, as rows, when enumerable."""
        return None

    @property
    def supports_exact(self) -> bool:
        return type(self).exact_opt is not BlockOracle.exact_opt


NEAR_TIE_RTOL = 1e-12


def refine_argmin(V: np.ndarray, prices: np.ndarray, costs: np.ndarray, i: int) -> int:
    """Re-decide near-ties among vertex costs by comparing cost differences.

    When a heavily priced resource dominates, ``<y, v>`` for different
    vertices can round to the same value even though ``<y, v - w>`` is
    clearly signed; the shared dominant term cancels exactly in ``v - w``.
    Candidates are scanned in index order; a later vertex wins only when the
    difference is clearly negative relative to its own rounding error, so
    exact ties keep the lowest index.
    """
    lo = costs[i]
    near = np.flatnonzero(costs <= lo + NEAR_TIE_RTOL * abs(lo))
    if near.size < 2:
        return i
    best = int(near[0])
    for j in near[1:]:
        diff = V[j] - V[best]
        if float(np.dot(diff, prices)) < -NEAR_TIE_RTOL * float(np.dot(np.abs(diff), prices)):
            best = int(j)
    return best


class VertexListBlock(BlockOracle):
    """Convex hull of an explicit list of vertices.

    Ties between equally cheap vertices go to the lowest vertex index.
    """

    def __init__(self, vertices):
        V = np.array(vertices, dtype=float)
        if V.ndim != 2 or V.shape[0] == 0 or V.shape[1] == 0:
            raise InputError("vertex block needs a non-empty (k, m) vertex array")
        if not np.all(np.isfinite(V)) or np.any(V < 0):
            raise InputError("vertices must be finite and non-negative")
        self.vertices = _readonly(V)
        self.num_resources = V.shape[1]
        self._width = float(V.max())

    def evaluate(self, prices):
        costs = self.vertices @ prices
        i = int(costs.argmin())
        i = refine_argmin(self.vertices, prices, costs, i)
        return self.vertices[i], float(costs[i])

    def exact_opt(self, prices):
        return float((self.vertices @ prices).min())

    def width_hint(self):
        return self._width

    def candidates(self):
        return self.vertices

    def __repr__(self):
        return f"VertexListBlock({self.vertices.tolist()})"


class ScaledSimplexBlock(BlockOracle):
    """The scaled probability simplex ``c * Delta_m``; allocations ``c * e_i``."""

    def __init__(self, num_resources: int, scale: float):
        if num_resources < 1:
            raise InputError("simplex block needs at least one resource")
        if not (scale > 0) or not math.isfinite(scale):
            raise InputError("simplex scale must be a finite positive real")
        self.num_resources = int(num_resources)
        self.scale = float(scale)
        self._rows = _readonly(np.eye(self.num_resources) * self.scale)

    def evaluate(self, prices):
        i = int(prices.argmin())
        return self._rows[i], self.scale * float(prices[i])

    def exact_opt(self, prices):
        return self.scale * float(prices.min())

    def width_hint(self):
        return self.scale

    def candidates(self):
        return self._rows

    def __repr__(self):
        return f"ScaledSimplexBlock(m={self.num_resources}, scale={self.scale})"


class ZeroBlock(BlockOracle):
    """The block ``{0}``."""

    def __init__(self, num_resources: int):
        self.num_resources = int(num_resources)
        self._zero = _readonly(np.zeros(self.num_resources))

    def evaluate(self, prices):
        return self._zero, 0.0

    def exact_opt(self, prices):
        return 0.0

    def width_hint(self):
        return 0.0

    def candidates(self):
        return self._zero.reshape(1, -1)

    def __repr__(self):
        return f"ZeroBlock(m={self.num_resources})"


def _window_index(window) -> slice | np.ndarray:
    idx = np.asarray(window, dtype=int)
    if idx.size and np.array_equal(idx, np.arange(idx[0], idx[0] + idx.size)):
        return slice(int(idx[0]), int(idx[0]) + idx.size)
    return idx


class ProductBlock(BlockOracle):
    """Cartesian product of sub-blocks acting on disjoint resource windows.

    ``parts`` is a sequence of ``(block, window)`` where the windows partition
    ``range(num_resources)``.
    """

    def __init__(self, parts: Sequence[tuple[BlockOracle, Sequence[int]]], num_resources: int | None = None):
        if not parts:
            raise InputError("product block needs at least one part")
        windows = [np.asarray(w, dtype=int).reshape(-1) for _, w in parts]
        m = sum(w.size for w in windows) if num_resources is None else int(num_resources)
        seen = np.concatenate(windows) if windows else np.zeros(0, dtype=int)
        if seen.size != m or not np.array_equal(np.sort(seen), np.arange(m)):
            raise InputError("product windows must partition the resource set")
        for (blk, _), w in zip(parts, windows):
            bm = getattr(blk, "num_resources", None)
            if bm is not None and bm != w.size:
                raise InputError("sub-block size does not match its window")
        self.num_resources = m
        self.parts = tuple((blk, w) for (blk, _), w in zip(parts, windows))
        self._index = tuple(_window_index(w) for w in windows)
        self.sigma = max(getattr(blk, "sigma", 1.0) for blk, _ in self.parts)

    def evaluate(self, prices):
        out = np.zeros(self.num_resources)
        cost = 0.0
        for (blk, _), idx in zip(self.parts, self._index):
            sub, c = blk.evaluate(prices[idx])
            out[idx] = sub
            cost += c
        return out, cost

    def exact_opt(self, prices):
        total = 0.0
        for (blk, _), idx in zip(self.parts, self._index):
            v = blk.exact_opt(prices[idx])
            if v is None:
                return None
            total += v
        return total

    @property
    def supports_exact(self):
        return all(blk.supports_exact for blk, _ in self.parts)

    def width_hint(self):
        widths = [blk.width_hint() for blk, _ in self.parts]
        return None if any(w is None for w in widths) else max(widths)

    def __repr__(self):
        return f"ProductBlock({[(blk, w.tolist()) for blk, w in self.parts]})"


class PathBlock(BlockOracle):
    """``demand`` times the convex hull of s-t path incidence vectors.

    ``arcs`` are directed ``(tail, head, resource)`` triples; ``resource`` may
    be None for arcs that consume nothing.  Undirected edges are two arcs
    sharing one resource.
    """

    def __init__(self, num_nodes: int, arcs, source: int, sink: int, demand: float, num_resources: int):
        if not (demand > 0) or not math.isfinite(demand):
            raise InputError("path demand must be a finite positive real")
        self.num_nodes = int(num_nodes)
        self.arcs = tuple((int(u), int(v), None if r is None else int(r)) for u, v, r in arcs)
        self.source, self.sink = int(source), int(sink)
        self.demand = float(demand)
        self.num_resources = int(num_resources)
        for u, v, r in self.arcs:
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise InputError("arc endpoint out of range")
            if r is not None and not (0 <= r < self.num_resources):
                raise InputError("arc resource index out of range")
        if not (0 <= self.source < self.num_nodes and 0 <= self.sink < self.num_nodes):
            raise InputError("source/sink out of range")
        self._rev = [[] for _ in range(self.num_nodes)]
        self._out = [[] for _ in range(self.num_nodes)]
        for e, (u, v, r) in enumerate(self.arcs):
            self._out[u].append(e)
            self._rev[v].append(e)

    def evaluate(self, prices):
        return shortest_path_evaluate(self, prices)

    def exact_opt(self, prices):
        return shortest_path_evaluate(self, prices)[1]

    def width_hint(self):
        return self.demand

    def __repr__(self):
        return f"PathBlock({self.source}->{self.sink}, demand={self.demand}, arcs={len(self.arcs)})"


def shortest_path_evaluate(block: PathBlock, prices) -> tuple[np.ndarray, float]:
    """Minimum-price s-t path of ``block`` as ``(demand * incidence, demand * length)``.

    Among shortest paths the one with the fewest arcs and then the
    lexicographically smallest arc-index sequence is returned.
    """
    y = np.asarray(prices, dtype=float)
    if np.any(y < 0):
        raise InputError("path oracle needs non-negative prices")
    weight = [0.0 if r is None else float(y[r]) for _, _, r in block.arcs]
    n = block.num_nodes
    dist = [math.inf] * n
    dist[block.sink] = 0.0
    heap = [(0.0, block.sink)]
    while heap:
        d, v = heapq.heappop(heap)
        if d > dist[v]:
            continue
        for e in block._rev[v]:
            u = block.arcs[e][0]
            nd = d + weight[e]
            if nd < dist[u]:
                dist[u] = nd
                heapq.heappush(heap, (nd, u))
    if math.isinf(dist[block.source]):
        raise InfeasibleBlockError(f"sink {block.sink} unreachable from source {block.source}")

    def tight(e):
        u, v, _ = block.arcs[e]
        return weight[e] + dist[v] <= dist[u] * (1.0 + 1e-12) + 1e-300

    # hop counts to the sink inside the subgraph of tight arcs
    hops = [math.inf] * n
    hops[block.sink] = 0
    queue = deque([block.sink])
    while queue:
        v = queue.popleft()
        for e in block._rev[v]:
            u = block.arcs[e][0]
            if math.isinf(hops[u]) and not math.isinf(dist[u]) and tight(e):
                hops[u] = hops[v] + 1
                queue.append(u)

    alloc = np.zeros(block.num_resources)
    length = 0.0
    u = block.source
    while u != block.sink:
        step = None
        for e in sorted(block._out[u]):
            v = block.arcs[e][1]
            if hops[v] == hops[u] - 1 and tight(e):
                step = e
                break
        if step is None:  # pragma: no cover - guarded by construction of hops
            raise InfeasibleBlockError("no tight arc found while tracing path")
        _, v, r = block.arcs[step]
        if r is not None:
            alloc[r] += block.demand
        length += weight[step]
        u = v
    return alloc, block.demand * length


class ApproxWrapper(BlockOracle):
    """Turn an exact block into a ``sigma_target``-approximate one.

    In adversarial mode the most expensive enumerable candidate whose cost is
    within ``sigma_target`` times the optimum is returned (lowest index on
    ties); otherwise, and whenever the inner block cannot enumerate its
    candidates, the exact answer is returned.  ``expose_exact=False`` hides
    the inner optimum so that solvers must fall back to discounted bounds.
    """

    def __init__(self, inner: BlockOracle, sigma_target: float, adversarial_mode: bool = True,
                 expose_exact: bool = True):
        if not inner.supports_exact:
            raise InputError("ApproxWrapper needs an inner block with exact optima")
        if not (sigma_target >= 1.0):
            raise InputError("sigma_target must be >= 1")
        self.inner = inner
        self.sigma = float(sigma_target)
        self.adversarial_mode = bool(adversarial_mode)
        self.expose_exact = bool(expose_exact)
        self.num_resources = inner.num_resources
        self._cands = inner.candidates() if self.adversarial_mode else None

    def evaluate(self, prices):
        if self._cands is None:
            return self.inner.evaluate(prices)
        costs = self._cands @ prices
        limit = self.sigma * costs.min()
        masked = np.where(costs <= limit, costs, -np.inf)
        i = int(masked.argmax())
        return self._cands[i], float(costs[i])

    def exact_opt(self, prices):
        if not self.expose_exact:
            return None
        return self.inner.exact_opt(prices)

    @property
    def supports_exact(self):
        return self.expose_exact

    def width_hint(self):
        return self.inner.width_hint()

    def candidates(self):
        return self.inner.candidates()

    def __repr__(self):
        return (f"ApproxWrapper({self.inner!r}, sigma={self.sigma}, "
                f"adversarial={self.adversarial_mode}, expose_exact={self.expose_exact})")


class ScaledBlock(BlockOracle):
    """``factor`` times an arbitrary block (used for user-defined oracles)."""

    def __init__(self, inner: BlockOracle, factor: float):
        self.inner = inner
        self.factor = float(factor)
        self.num_resources = inner.num_resources
        self.sigma = getattr(inner, "sigma", 1.0)

    def evaluate(self, prices):
        b, c = self.inner.evaluate(prices)
        return np.asarray(b) * self.factor, c * self.factor

    def exact_opt(self, prices):
        v = self.inner.exact_opt(prices)
        return None if v is None else v * self.factor

    @property
    def supports_exact(self):
        return self.inner.supports_exact

    def width_hint(self):
        w = self.inner.width_hint()
        return None if w is None else w * self.factor

    def candidates(self):
        c = self.inner.candidates()
        return None if c is None else c * self.factor


class FunctionBlock(BlockOracle):
    """Adapter for a plain callable ``fn(prices) -> allocation``."""

    def __init__(self, num_resources: int, fn: Callable, exact: Callable | None = None,
                 width: float | None = None, sigma: float = 1.0):
        self.num_resources = int(num_resources)
        self._fn, self._exact, self._width = fn, exact, width
        self.sigma = float(sigma)

    def evaluate(self, prices):
        b, _ = check_allocation(self._fn(prices), self.num_resources)
        return b, float(b @ prices)

    def exact_opt(self, prices):
        return None if self._exact is None else float(self._exact(prices))

    @property
    def supports_exact(self):
        return self._exact is not None

    def width_hint(self):
        return self._width


def scale_block(block: BlockOracle, factor: float) -> BlockOracle:
    """``factor`` times ``block``, natively for the built-in block types."""
    if factor == 1.0:
        return block
    if isinstance(block, VertexListBlock):
        return VertexListBlock(block.vertices * factor)
    if isinstance(block, ScaledSimplexBlock):
        return ScaledSimplexBlock(block.num_resources, block.scale * factor)
    if isinstance(block, ZeroBlock):
        return block
    if isinstance(block, ProductBlock):
        return ProductBlock([(scale_block(b, factor), w) for b, w in block.parts], block.num_resources)
    if isinstance(block, PathBlock):
        return PathBlock(block.num_nodes, block.arcs, block.source, block.sink,
                         block.demand * factor, block.num_resources)
    if isinstance(block, ApproxWrapper):
        return ApproxWrapper(scale_block(block.inner, factor), block.sigma,
                             block.adversarial_mode, block.expose_exact)
    if isinstance(block, ScaledBlock):
        return ScaledBlock(block.inner, block.factor * factor)
    return ScaledBlock(block, factor)


def check_allocation(b, m: int) -> tuple[np.ndarray, float]:
    """Validate an oracle answer; return it with its largest entry."""
    b = np.asarray(b, dtype=float)
    if b.shape != (m,):
        raise ContractViolation(f"oracle returned shape {b.shape}, expected ({m},)")
    bmax = float(b.max())
    if not (b.min() >= 0.0):
        raise ContractViolation("oracle returned an allocation with a negative or NaN entry")
    if bmax == math.inf:
        raise ContractViolation("oracle returned an infinite allocation")
    return b, bmax


def oracle_evaluate(block: BlockOracle, prices: PriceState) -> tuple[np.ndarray, float]:
    """Query ``block`` at the max-normalized version of ``prices``.

    The returned cost refers to the normalized prices.
    """
    yhat = prices.normalized()
    b, cost = block.evaluate(yhat)
    b, _ = check_allocation(b, yhat.shape[0])
    return b, float(cost)


def minkowski_opt(instance: Instance, prices: PriceState) -> float | None:
    """Sum of the exact block optima at the normalized prices, or None."""
    yhat = prices.normalized()
    total = 0.0
    for block in instance.blocks:
        v = block.exact_opt(yhat)
        if v is None:
            return None
        total += v
    return total
