"""Deterministic instance families with declared ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .errors import InfeasibleBlockError, InputError
from .model import Instance, LocalDualityCert
from .oracles import BlockOracle, PathBlock, ProductBlock, ScaledSimplexBlock, VertexListBlock, ZeroBlock


@dataclass(frozen=True)
class GeneratedInstance:
    instance: Instance
    declared_lambda_star: float | None = None
    declared_decmin: np.ndarray | None = None
    declared_certs: tuple = ()
    provenance: dict = field(default_factory=dict)
    windows: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "declared_certs", tuple(self.declared_certs))
        if self.declared_decmin is not None:
            d = np.asarray(self.declared_decmin, dtype=float)
            object.__setattr__(self, "declared_decmin", d)
            if d.shape != (self.instance.m,):
                raise InputError("declared dec-min has the wrong length")
            if self.declared_lambda_star is not None and not math.isclose(
                    float(d.max()), self.declared_lambda_star, rel_tol=1e-12, abs_tol=1e-12):
                raise InputError("declared dec-min maximum differs from the declared optimum")
        for cert in self.declared_certs:
            if not cert.fits(self.instance.m):
                raise InputError("declared certificate exceeds the resource range")


def _check(cond: bool, what: str) -> None:
    if not cond:
        raise InputError(f"generator self-check failed: {what}")


def gen_adversarial(m: int, epsilon: float) -> GeneratedInstance:
    """One customer, hull of ``(1,1,0,...)`` and ``(5/4, 0, W, ..., W)`` with ``W = m**(1/sqrt(eps))``."""
    if int(m) != m or m < 3:
        raise InputError("the adversarial family needs m >= 3")
    if not (0.0 < epsilon < 1.0):
        raise InputError("epsilon must lie in (0, 1)")
    m = int(m)
    try:
        W = float(m) ** (1.0 / math.sqrt(epsilon))
    except OverflowError:
        W = math.inf
    if not math.isfinite(W) or W > 1e300:
        raise InputError(f"m**(1/sqrt(epsilon)) is not representable (m={m}, epsilon={epsilon})")
    lam = np.zeros(m)
    lam[:2] = 1.0
    v = np.full(m, W)
    v[0], v[1] = 1.25, 0.0
    block = VertexListBlock([lam, v])
    inst = Instance(m, [block])
    # optimum 1: attained by the first vertex, certified by the price vector e_1
    e1 = np.zeros(m)
    e1[0] = 1.0
    _check(block.exact_opt(e1) == 1.0 and lam.max() == 1.0, "adversarial optimum")
    return GeneratedInstance(inst, 1.0, lam, (), {"family": "adversarial", "m": m, "epsilon": epsilon})


def gen_simplex(m: int, lam: float = 1.0) -> GeneratedInstance:
    """Single customer ``m*lam * Delta_m``; optimum ``lam`` by symmetry."""
    if m < 1 or not (lam > 0):
        raise InputError("simplex family needs m >= 1 and lam > 0")
    block = ScaledSimplexBlock(m, m * lam)
    inst = Instance(m, [block])
    _check(math.isclose(block.exact_opt(np.full(m, 1.0 / m)), lam, rel_tol=1e-12), "simplex optimum")
    return GeneratedInstance(inst, float(lam), np.full(m, float(lam)),
                             (LocalDualityCert(frozenset(range(m)), float(lam)),),
                             {"family": "simplex", "m": m, "lam": lam})


def gen_decoy_uniform(n: int, m: int, lam: float) -> GeneratedInstance:
    """Customers with vertices ``(m/n) e_1`` and ``(lam/n) * ones``; optimum ``lam``.

    At unit prices every oracle picks the spike, so the bootstrap factor is
    exactly 1 and the optimum stays at ``lam`` (needs ``1 <= lam <= m``).
    """
    if n < 1 or m < 2 or not (1.0 <= lam <= m):
        raise InputError("decoy family needs n >= 1, m >= 2 and 1 <= lam <= m")
    spike = np.zeros(m)
    spike[0] = m / n
    flat = np.full(m, lam / n)
    inst = Instance(m, [VertexListBlock([spike, flat]) for _ in range(n)])
    # the flat point has max entry lam; the price vector e_1 certifies lam from below
    e1 = np.zeros(m)
    e1[0] = 1.0
    _check(math.isclose(sum(b.exact_opt(e1) for b in inst.blocks), lam, rel_tol=1e-12),
           "decoy optimum")
    return GeneratedInstance(inst, float(lam), np.full(m, float(lam)),
                             (LocalDualityCert(frozenset(range(m)), float(lam)),),
                             {"family": "decoy", "n": n, "m": m, "lam": lam})


def gen_lowerbound_composite(n: int, m: int, hard_block: BlockOracle | None = None) -> GeneratedInstance:
    """Hard block on resources ``0..m-1``, ``m * Delta_m`` on ``m..2m-1``, plus ``n`` zero blocks."""
    if n < 0 or m < 1:
        raise InputError("lower-bound composite needs n >= 0 and m >= 1")
    hard = VertexListBlock([np.ones(m)]) if hard_block is None else hard_block
    if getattr(hard, "num_resources", m) != m:
        raise InputError("hard block must act on m resources")
    w1, w2 = list(range(m)), list(range(m, 2 * m))
    blocks = [
        ProductBlock([(hard, w1), (ZeroBlock(m), w2)]),
        ProductBlock([(ZeroBlock(m), w1), (ScaledSimplexBlock(m, float(m)), w2)]),
    ] + [ZeroBlock(2 * m) for _ in range(n)]
    inst = Instance(2 * m, blocks)
    certs = (LocalDualityCert(frozenset(w1), 1.0), LocalDualityCert(frozenset(w2), 1.0))
    decmin = np.ones(2 * m) if hard_block is None else None
    return GeneratedInstance(inst, 1.0, decmin, certs,
                             {"family": "lowerbound", "n": n, "m": m,
                              "hard_block": "unit" if hard_block is None else "custom"},
                             (tuple(w1), tuple(w2)))


@dataclass(frozen=True)
class CutVertexNetwork:
    """Two undirected edge lists sharing exactly one node ``cut``."""

    left_edges: tuple
    right_edges: tuple
    cut: Hashable

    def __post_init__(self):
        lnodes = {u for e in self.left_edges for u in e}
        rnodes = {u for e in self.right_edges for u in e}
        if lnodes & rnodes != {self.cut}:
            raise InputError("the two halves must share exactly the cut node")

    @property
    def edges(self) -> list:
        return list(self.left_edges) + list(self.right_edges)


def figure2_network() -> tuple[CutVertexNetwork, str, str]:
    """Ten-edge network with cut node D; returns (network, source, sink)."""
    left = (("A", "B"), ("B", "C"), ("A", "C"), ("A", "D"), ("C", "D"))
    right = (("D", "E"), ("D", "F"), ("E", "F"), ("E", "G"), ("F", "G"))
    return CutVertexNetwork(left, right, "D"), "B", "G"


def parallel_halves(k1: int, k2: int) -> tuple[CutVertexNetwork, str, str]:
    """``k1`` parallel s-c edges followed by ``k2`` parallel c-t edges."""
    if k1 < 1 or k2 < 1:
        raise InputError("need at least one edge per half")
    return CutVertexNetwork(tuple(("s", "c") for _ in range(k1)),
                            tuple(("c", "t") for _ in range(k2)), "c"), "s", "t"


def path_block_from_edges(edges: Sequence, source, sink, demand: float) -> PathBlock:
    """Path block where undirected edge ``i`` is resource ``i``."""
    nodes = {}
    for u, v in edges:
        nodes.setdefault(u, len(nodes))
        nodes.setdefault(v, len(nodes))
    if source not in nodes or sink not in nodes:
        raise InfeasibleBlockError(f"commodity endpoint not in the network: {source!r} -> {sink!r}")
    arcs = []
    for i, (u, v) in enumerate(edges):
        arcs.append((nodes[u], nodes[v], i))
        arcs.append((nodes[v], nodes[u], i))
    block = PathBlock(len(nodes), arcs, nodes[source], nodes[sink], demand, len(edges))
    block.evaluate(np.ones(len(edges)))  # raises if the sink is unreachable
    return block


def gen_cut_vertex_flow(network: CutVertexNetwork, commodities: Sequence[tuple],
                        half_optima: tuple | None = None) -> GeneratedInstance:
    """One path block per ``(source, sink, demand)`` commodity on the joint edge set.

    ``half_optima = (mu1, mu2)`` declares the per-half optima; it yields the
    two window certificates and the optimum ``max(mu1, mu2)``.
    """
    edges = network.edges
    m = len(edges)
    k1 = len(network.left_edges)
    w1, w2 = tuple(range(k1)), tuple(range(k1, m))
    prov = {"family": "cutflow", "edges": [list(map(str, e)) for e in edges],
            "cut": str(network.cut), "commodities": [[str(s), str(t), float(d)] for s, t, d in commodities]}
    if not commodities:
        inst = Instance(m, [ZeroBlock(m)])
        return GeneratedInstance(inst, 0.0, np.zeros(m), (), prov, (w1, w2))
    blocks = [path_block_from_edges(edges, s, t, d) for s, t, d in commodities]
    inst = Instance(m, blocks)
    certs, lam = (), None
    if half_optima is not None:
        mu1, mu2 = map(float, half_optima)
        certs = (LocalDualityCert(frozenset(w1), mu1), LocalDualityCert(frozenset(w2), mu2))
        lam = max(mu1, mu2)
        prov["half_optima"] = [mu1, mu2]
    return GeneratedInstance(inst, lam, None, certs, prov, (w1, w2))


def gen_parallel_flow(k1: int, k2: int, demand: float = 1.0) -> GeneratedInstance:
    """Unit commodity across two parallel-edge halves; optima ``demand/k1``, ``demand/k2``."""
    net, s, t = parallel_halves(k1, k2)
    g = gen_cut_vertex_flow(net, [(s, t, demand)], (demand / k1, demand / k2))
    decmin = np.concatenate([np.full(k1, demand / k1), np.full(k2, demand / k2)])
    prov = dict(g.provenance, k1=k1, k2=k2)
    return GeneratedInstance(g.instance, g.declared_lambda_star, decmin, g.declared_certs, prov, g.windows)


def gen_product(parts: Sequence[GeneratedInstance]) -> GeneratedInstance:
    """Product over concatenated windows, customers matched by index.

    Parts with a single customer are padded with zero blocks rather than
    copied, so every part keeps its own optimum.
    """
    if not parts:
        raise InputError("gen_product needs at least one part")
    counts = [p.instance.n for p in parts]
    n = max(counts)
    if any(c != n and c != 1 for c in counts):
        raise InputError(f"mismatched customer counts {counts}")
    offsets = np.cumsum([0] + [p.instance.m for p in parts])
    m = int(offsets[-1])
    windows = [tuple(range(int(offsets[i]), int(offsets[i + 1]))) for i in range(len(parts))]
    blocks = []
    for c in range(n):
        sub = []
        for p, w in zip(parts, windows):
            blk = p.instance.blocks[c] if c < p.instance.n else ZeroBlock(p.instance.m)
            sub.append((blk, w))
        blocks.append(ProductBlock(sub, m))
    sigma = max(p.instance.sigma for p in parts)
    inst = Instance(m, blocks, sigma=sigma)
    lams = [p.declared_lambda_star for p in parts]
    lam = None if any(v is None for v in lams) else max(lams)
    certs = []
    for p, w, off in zip(parts, windows, offsets):
        if p.declared_lambda_star is not None:
            certs.append(LocalDualityCert(frozenset(w), float(p.declared_lambda_star)))
        for cert in p.declared_certs:
            shifted = frozenset(int(off) + r for r in cert.subset)
            if shifted != frozenset(w) or p.declared_lambda_star is None:
                certs.append(LocalDualityCert(shifted, cert.mu))
    decs = [p.declared_decmin for p in parts]
    decmin = None if any(d is None for d in decs) else np.concatenate(decs)
    prov = {"family": "product", "parts": [p.provenance for p in parts]}
    return GeneratedInstance(inst, lam, decmin, tuple(certs), prov, tuple(windows))


def gen_random_vertex(n: int, m: int, vertices_per_block: int, seed: int = 0,
                      magnitude: float = 1.0) -> GeneratedInstance:
    """Uniform random vertices in ``[0, magnitude)^m``; no declared ground truth."""
    if n < 1 or m < 1 or vertices_per_block < 1 or not (magnitude > 0):
        raise InputError("random family needs positive counts and magnitude")
    rng = np.random.default_rng(seed)
    blocks = [VertexListBlock(rng.random((vertices_per_block, m)) * magnitude) for _ in range(n)]
    return GeneratedInstance(Instance(m, blocks), None, None, (),
                             {"family": "random", "n": n, "m": m, "k": vertices_per_block,
                              "seed": seed, "magnitude": magnitude})
