"""Verification toolkit: sampled duality checks, dec-min reference, trace audits.

Local weak duality quantifies over all price collections, so sampling can
refute a certificate but never prove it.  Rows produced here say
"refuted" or "consistent" accordingly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import CoreResult, PhaseSnapshot, certify_dual
from .errors import InputError, UnsupportedInstanceError
from .model import DecomposedSolution, Instance, LocalDualityCert, RunStats, sorted_decreasing
from .oracles import VertexListBlock, check_allocation

PASS, FAIL, SKIPPED = "pass", "fail", "skipped"


@dataclass(frozen=True)
class AuditRow:
    name: str
    bound: float
    observed: float
    kind: str = "upper"
    status: str = PASS
    note: str = ""

    def line(self) -> str:
        rel = {"upper": "<=", "lower": ">=", "info": "~"}[self.kind]
        extra = f"  ({self.note})" if self.note else ""
        if self.status == SKIPPED:
            return f"[skipped] {self.name}{extra}"
        return f"[{self.status}] {self.name}: observed {self.observed!r} {rel} bound {self.bound!r}{extra}"

    def to_dict(self) -> dict:
        return {"name": self.name, "bound": self.bound, "observed": self.observed,
                "kind": self.kind, "status": self.status, "note": self.note}


def upper_row(name, bound, observed, tol=0.0, note="") -> AuditRow:
    ok = observed <= bound + tol
    return AuditRow(name, float(bound), float(observed), "upper", PASS if ok else FAIL, note)


def lower_row(name, bound, observed, tol=0.0, note="") -> AuditRow:
    ok = observed >= bound - tol
    return AuditRow(name, float(bound), float(observed), "lower", PASS if ok else FAIL, note)


def skipped_row(name, note) -> AuditRow:
    return AuditRow(name, math.nan, math.nan, "info", SKIPPED, note)


@dataclass
class AuditReport:
    rows: list = field(default_factory=list)
    context: dict = field(default_factory=dict)

    def add(self, row: AuditRow) -> None:
        self.rows.append(row)

    def extend(self, other: "AuditReport", prefix: str = "") -> None:
        for row in other.rows:
            self.rows.append(AuditRow(prefix + row.name, row.bound, row.observed, row.kind,
                                      row.status, row.note))

    @property
    def passed(self) -> bool:
        return all(r.status != FAIL for r in self.rows)

    def failed(self) -> list:
        return [r for r in self.rows if r.status == FAIL]

    def skipped(self) -> list:
        return [r for r in self.rows if r.status == SKIPPED]

    def row(self, name: str) -> AuditRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def lines(self) -> list[str]:
        return [r.line() for r in self.rows]

    def to_dict(self) -> dict:
        return {"context": self.context, "passed": self.passed,
                "rows": [r.to_dict() for r in self.rows]}


# ---------------------------------------------------------------- local weak duality

def _price_collection(rng, kind: int, n: int, m: int, subset: np.ndarray) -> np.ndarray:
    if kind == 0:
        return rng.exponential(size=(n, m))
    if kind == 1:
        return np.ones((n, m)) if rng.random() < 0.3 else rng.random((n, m))
    if kind == 2:
        y = np.full((n, m), 1e-3) * rng.random((n, m))
        y[np.arange(n), rng.integers(0, m, size=n)] = 1.0 + rng.exponential(size=n)
        return y
    if kind == 3:
        y = np.ones((n, m))
        y[np.arange(n), rng.integers(0, m, size=n)] = 1e-6 * rng.random(n)
        return y
    if kind == 4:
        return np.exp(rng.uniform(-20.0, 20.0, size=(n, m)))
    if kind == 5:
        return np.cumsum(rng.exponential(size=(n, m)), axis=0)
    # prices concentrated outside the subset, so that cheap-inside answers are preferred
    y = 10.0 ** rng.uniform(2, 8) * (1.0 + rng.random((n, m)))
    y[:, subset] = 10.0 ** rng.uniform(-6, 0) * rng.random((n, subset.size))
    return y


def local_duality_ratio(instance: Instance, cert: LocalDualityCert, prices: np.ndarray) -> tuple[float, float]:
    """Both sides of the local weak duality inequality for one price collection."""
    S = cert.indices()
    lhs = 0.0
    for c, block in enumerate(instance.blocks):
        y = prices[c]
        b, _ = block.evaluate(y)
        b, _ = check_allocation(b, instance.m)
        lhs += float(np.dot(y[S], b[S]))
    rhs = cert.mu * float(prices[:, S].max(axis=0).sum())
    return lhs, rhs


def sample_local_weak_duality(instance: Instance, cert: LocalDualityCert, trials: int = 500,
                              seed: int = 0) -> AuditReport:
    """Try to refute ``cert`` on random price collections; report the worst ratio."""
    if trials < 1:
        raise InputError("trials must be >= 1")
    if not cert.fits(instance.m):
        raise InputError("certificate subset exceeds the resource range")
    rng = np.random.default_rng(seed)
    S = cert.indices()
    worst = 0.0
    refuted_at = None
    for i in range(trials):
        prices = _price_collection(rng, i % 7, instance.n, instance.m, S)
        lhs, rhs = local_duality_ratio(instance, cert, prices)
        if rhs == 0.0:
            ratio = math.inf if lhs > 0.0 else 0.0
        else:
            ratio = lhs / rhs
        if ratio > worst:
            worst = ratio
        if ratio > 1.0 + 1e-9 and refuted_at is None:
            refuted_at = i
    name = f"local weak duality on {sorted(cert.subset)} with mu={cert.mu!r}"
    rep = AuditReport(context={"trials": trials, "seed": seed})
    if refuted_at is not None:
        rep.add(AuditRow(name, 1.0, worst, "upper", FAIL, f"refuted at trial {refuted_at}"))
    else:
        rep.add(AuditRow(name, 1.0, worst, "upper", PASS, f"consistent over {trials} trials"))
    return rep


def second_entry_cert(instance: Instance, decmin) -> LocalDualityCert | None:
    """Certificate for all resources but the unique argmax, or None if not applicable."""
    if instance.sigma > 1.0:
        return None
    if not all(b.supports_exact for b in instance.blocks):
        return None
    lam = np.asarray(decmin, dtype=float)
    if lam.size < 2:
        return None
    srt = sorted_decreasing(lam)
    if not srt[0] > srt[1]:
        return None
    r_star = int(np.argmax(lam))
    rest = frozenset(range(lam.size)) - {r_star}
    return LocalDualityCert(rest, float(srt[1]))


# ---------------------------------------------------------------- dec-min reference

_GRID_CAP = 200_000


def _compositions(total: int, parts: int) -> np.ndarray:
    """All non-negative integer vectors of length ``parts`` summing to ``total``."""
    if parts == 1:
        return np.array([[total]])
    out = []
    for cuts in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        row = []
        for c in cuts:
            row.append(c - prev - 1)
            prev = c
        row.append(total + parts - 2 - prev)
        out.append(row)
    return np.array(out)


def _local_offsets(k: int, radius: int) -> np.ndarray:
    free = np.array(list(itertools.product(range(-radius, radius + 1), repeat=k - 1)), dtype=float)
    if k == 1:
        return np.zeros((1, 1))
    return np.hstack([free, -free.sum(axis=1, keepdims=True)])


def _dec_argmin(aggregates: np.ndarray) -> int:
    srt = -np.sort(-aggregates, axis=1)
    keep = np.arange(aggregates.shape[0])
    for j in range(srt.shape[1]):
        col = srt[keep, j]
        lo = col.min()
        keep = keep[col <= lo + 1e-9 * max(1.0, abs(lo))]
        if keep.size == 1:
            break
    return int(keep[0])


def _grid_product(coef_sets: list, verts: list) -> tuple[np.ndarray, list]:
    aggs = None
    for coefs, V in zip(coef_sets, verts):
        A = coefs @ V
        aggs = A if aggs is None else (aggs[:, None, :] + A[None, :, :]).reshape(-1, A.shape[1])
    return aggs, [c.shape[0] for c in coef_sets]


def _unravel(i: int, sizes: list) -> list:
    idx = []
    for s in reversed(sizes):
        idx.append(i % s)
        i //= s
    return idx[::-1]


def decmin_reference(instance: Instance, resolution: float = 0.05, rounds: int = 6) -> np.ndarray:
    """Grid-refinement approximation of the decreasingly minimal aggregate.

    Supports at most 3 customers, each a vertex list with at most 4
    vertices.  Grids are coarsened automatically to keep the candidate
    product below a fixed size.
    """
    if instance.n > 3 or not all(isinstance(b, VertexListBlock) and b.vertices.shape[0] <= 4
                                 for b in instance.blocks):
        raise UnsupportedInstanceError("decmin_reference needs <= 3 vertex blocks with <= 4 vertices")
    if not (0.0 < resolution <= 1.0):
        raise InputError("resolution must lie in (0, 1]")
    verts = [b.vertices for b in instance.blocks]
    ks = [V.shape[0] for V in verts]
    N = max(1, round(1.0 / resolution))
    while True:
        sizes = [math.comb(N + k - 1, k - 1) for k in ks]
        if math.prod(sizes) <= _GRID_CAP or N == 1:
            break
        N -= 1
    coef_sets = [_compositions(N, k) / N for k in ks]
    aggs, sizes = _grid_product(coef_sets, verts)
    best = _unravel(_dec_argmin(aggs), sizes)
    current = [coef_sets[c][best[c]] for c in range(len(ks))]
    step = 1.0 / N
    for _ in range(rounds):
        step /= 4.0
        radius = 4
        while radius > 1 and math.prod((2 * radius + 1) ** (k - 1) for k in ks) > _GRID_CAP:
            radius -= 1
        coef_sets = []
        for c, k in enumerate(ks):
            cand = current[c][None, :] + step * _local_offsets(k, radius)
            cand = cand[np.all(cand >= -1e-15, axis=1)]
            cand = np.clip(cand, 0.0, None)
            coef_sets.append(cand / cand.sum(axis=1, keepdims=True))
        aggs, sizes = _grid_product(coef_sets, verts)
        best = _unravel(_dec_argmin(aggs), sizes)
        current = [coef_sets[c][best[c]] for c in range(len(ks))]
    return sum(current[c] @ verts[c] for c in range(len(ks)))


def _block_candidates(block) -> np.ndarray:
    cands = block.candidates()
    if cands is None:
        raise UnsupportedInstanceError("support check needs enumerable blocks")
    return np.asarray(cands, dtype=float)


def random_feasible_points(instance: Instance, count: int, seed: int = 0) -> np.ndarray:
    """Random aggregates: Dirichlet mixtures per block, with sparse draws mixed in."""
    rng = np.random.default_rng(seed)
    verts = [_block_candidates(b) for b in instance.blocks]
    out = np.zeros((count, instance.m))
    for V in verts:
        k = V.shape[0]
        w = rng.dirichlet(np.full(k, 0.5), size=count)
        sparse = rng.random(count) < 0.2
        if sparse.any():
            w[sparse] = np.eye(k)[rng.integers(0, k, size=int(sparse.sum()))]
        out += w @ V
    return out


def check_support_dichotomy(instance: Instance, decmin, trials: int = 1000, seed: int = 0,
                        tol: float = 1e-7) -> AuditReport:
    """Check that no feasible point lowers the top entries of ``decmin`` without raising one."""
    lam = np.asarray(decmin, dtype=float)
    top = lam.max()
    I = np.flatnonzero(lam >= top - tol)
    pts = np.vstack([lam[None, :], random_feasible_points(instance, trials, seed)])
    diff = pts[:, I] - lam[I]
    all_equal = np.all(np.abs(diff) <= tol, axis=1)
    none_above = np.all(diff <= tol, axis=1)
    some_below = np.any(diff < -tol, axis=1)
    violations = int(np.sum(~all_equal & none_above & some_below))
    rep = AuditReport(context={"trials": trials, "seed": seed, "argmax_set": I.tolist()})
    rep.add(upper_row("support dichotomy violations", 0, violations,
                      note=f"{trials} sampled points plus the reference itself"))
    return rep


def decmin_fixed_point_violations(instance: Instance, decmin, trials: int = 10_000, seed: int = 0,
                                  tol: float = 1e-9) -> int:
    """Count sampled feasible points that are strictly dec-smaller than ``decmin``."""
    pts = random_feasible_points(instance, trials, seed)
    ref = sorted_decreasing(decmin)
    srt = -np.sort(-pts, axis=1)
    count = 0
    for row in srt:
        for u, v in zip(row, ref):
            if abs(u - v) <= tol * max(1.0, abs(v)):
                continue
            if u < v:
                count += 1
            break
    return count


# ---------------------------------------------------------------- late-phase dual

@dataclass(frozen=True)
class LatePhase:
    phase: int
    value: float


def late_phase_dual(trace, delta: float) -> LatePhase | None:
    """First phase ``t >= ceil((1-delta) T)`` with ``theta_t >= 1 - delta``, or None."""
    thetas = trace.theta_trace if isinstance(trace, RunStats) else list(trace)
    T = len(thetas)
    if T == 0:
        return None
    start = max(1, math.ceil(round((1.0 - delta) * T, 9)))
    for t in range(start, T + 1):
        if thetas[t - 1] >= 1.0 - delta:
            return LatePhase(t, float(thetas[t - 1]))
    return None


# ---------------------------------------------------------------- trace recording

class PhaseRecorder:
    """Observer that keeps per-phase local quantities for a set of resource subsets."""

    def __init__(self, subsets: Iterable[Sequence[int]] = ()):
        self.subsets = [np.array(sorted(s), dtype=int) for s in subsets]
        self.local_log_sums = [[] for _ in self.subsets]
        self.local_max_x = [[] for _ in self.subsets]
        self.phases = 0

    def __call__(self, snap: PhaseSnapshot) -> None:
        self.phases = snap.phase
        a = snap.exponents
        for i, S in enumerate(self.subsets):
            aS = a[S]
            top = aS.max()
            self.local_log_sums[i].append(float(top + math.log(np.exp(aS - top).sum())))
            self.local_max_x[i].append(float(snap.x[S].max()))


# ---------------------------------------------------------------- audits

def _worst(values_bounds):
    """Pick the (observed, bound) pair with the largest excess."""
    best = None
    for obs, bnd in values_bounds:
        if best is None or obs - bnd > best[0] - best[1]:
            best = (obs, bnd)
    return best


def _decomposition_row(primal: DecomposedSolution, name="decomposition consistent") -> AuditRow:
    problems = primal.violations()
    return AuditRow(name, 0, len(problems), "upper", FAIL if problems else PASS,
                    "; ".join(problems[:3]))


def audit_core(instance: Instance, result: CoreResult, lambda_star: float | None = None,
               certs: Sequence[LocalDualityCert] = (), recorder: PhaseRecorder | None = None,
               decmin=None, provenance: dict | None = None) -> AuditReport:
    """Check a core run's traces against the bounds that hold for every run."""
    st = result.stats
    eps = result.params.epsilon
    T = result.params.phases
    eta = math.expm1(eps)
    m, n, sigma = instance.m, instance.n, instance.sigma
    ln_m = math.log(m)
    rep = AuditReport(context={"stage": "core", "epsilon": eps, "phases": T})
    rep.add(_decomposition_row(result.primal))

    ident = np.abs(result.prices.exponents - eps * T * result.primal.aggregate)
    scale = np.maximum(1.0, np.abs(result.prices.exponents))
    rep.add(upper_row("exponent identity (relative)", 1e-6, float((ident / scale).max())))

    pairs = [(calls, t * n + (m / eps) * (l1 - ln_m) + 1.0 + 1e-9 * n * t)
             for t, (calls, l1) in enumerate(zip(st.calls_trace, st.l1_log_price_trace), start=1)]
    obs, bnd = _worst(pairs)
    rep.add(upper_row("call count vs price growth", bnd, obs))

    std = np.diff(np.concatenate([[0], st.standard_trace]))
    rep.add(upper_row("standard calls per phase", n, int(std.max()) if std.size else 0))
    rep.add(upper_row("total standard calls", n * T, st.standard_calls))

    if lambda_star is None:
        for name in ("primal trace bound", "price growth vs dual values", "averaged dual lower bound",
                     "dual values below optimum"):
            rep.add(skipped_row(name, "no declared optimum"))
    else:
        lam = float(lambda_star)
        g = eta * sigma * lam
        if g < 1.0:
            pairs = [(mx, ln_m / (eps * t) + (1 + eps) * sigma * lam / (1 - g))
                     for t, mx in enumerate(st.max_x_trace, start=1)]
            obs, bnd = _worst(pairs)
            rep.add(upper_row("primal trace bound", bnd, obs, 1e-9))
            if st.theta_exact:
                csum = np.cumsum(st.theta_trace)
                pairs = [(l1, ln_m + (eta * sigma / (1 - g)) * s)
                         for l1, s in zip(st.l1_log_price_trace, csum)]
                obs, bnd = _worst(pairs)
                rep.add(upper_row("price growth vs dual values", bnd, obs, 1e-6))
            else:
                rep.add(skipped_row("price growth vs dual values", "dual values are not exact"))
            bound = (1 - g) / (sigma * (1 + eps)) * (lam - ln_m / (eps * T))
            rep.add(lower_row("averaged dual lower bound", bound, result.dual.certified_value, 1e-6))
        else:
            for name in ("primal trace bound", "price growth vs dual values", "averaged dual lower bound"):
                rep.add(skipped_row(name, "step parameter too large for the optimum"))
        if st.theta_exact:
            rep.add(upper_row("dual values below optimum", lam, max(st.theta_trace), 1e-9 * max(1, lam)))
        else:
            rep.add(upper_row("dual values below optimum", lam, max(st.theta_trace), 1e-9 * max(1, lam),
                              note="discounted values"))

    for i, cert in enumerate(certs):
        name = f"local price growth on {sorted(cert.subset)}"
        if recorder is None or i >= len(recorder.subsets):
            rep.add(skipped_row(name, "no local trace recorded"))
            continue
        if eta * cert.mu >= 1.0:
            rep.add(skipped_row(name, "step parameter too large for mu"))
            continue
        k = len(cert.subset)
        rate = eta * cert.mu / (1 - eta * cert.mu)
        pairs = [(v, math.log(k) + t * rate) for t, v in enumerate(recorder.local_log_sums[i], start=1)]
        obs, bnd = _worst(pairs)
        rep.add(upper_row(name, bnd, obs, 1e-6))

    if provenance and provenance.get("family") == "adversarial":
        rep.extend(_adversarial_rows(instance, result, decmin, lambda_star))
    return rep


def _adversarial_rows(instance, result, decmin, lambda_star) -> AuditReport:
    rep = AuditReport()
    delta = 0.125
    eps, T = result.params.epsilon, result.params.phases
    m = instance.m
    if not (eps < delta * delta / 4 and T >= math.log(m) / (eps * eps)):
        for name in ("third entry stays large", "third-entry analog fails", "late-phase dual value"):
            rep.add(skipped_row(name, "run parameters outside the regime of the construction"))
        return rep
    x = sorted_decreasing(result.primal.aggregate)
    lam = 1.0 if lambda_star is None else float(lambda_star)
    third_ref = 0.0 if decmin is None else float(sorted_decreasing(decmin)[2])
    rep.add(lower_row("third entry stays large", 1.0 - 2 * delta, float(x[2])))
    rep.add(lower_row("third-entry analog fails", third_ref + delta * lam, float(x[2]),
                      note="expected: the two-entry guarantee does not extend to the third entry"))
    found = late_phase_dual(result.stats, delta)
    start = math.ceil(round((1 - delta) * T, 9))
    if found is None:
        rep.add(AuditRow("late-phase dual value", start, math.nan, "lower", FAIL, "absent"))
    else:
        rep.add(lower_row("late-phase dual value", start, found.phase,
                          note=f"theta={found.value!r} >= {1 - delta}"))
    return rep


def audit_constant_factor(instance: Instance, cf, lambda_star: float | None = None) -> AuditReport:
    """Check a constant-factor run; ``instance`` and ``lambda_star`` in its own units."""
    st = cf.stats
    m, n, sigma = instance.m, instance.n, instance.sigma
    T = cf.phases
    ln_m = math.log(m)
    K = st.restarts
    rep = AuditReport(context={"stage": "constant-factor", "phases": T})
    rep.add(_decomposition_row(cf.primal))
    pairs = [(l1, ln_m + t) for t, l1 in enumerate(st.l1_log_price_trace, start=1)]
    obs, bnd = _worst(pairs)
    rep.add(upper_row("maintained price bound", bnd, obs, 1e-9))
    rep.add(upper_row("step cap identity", 1.0 / (4 * sigma),
                      st.epsilon_final * st.lambda_guess_final, 1e-12))
    pairs = [(mx, l1 / (e * t)) for t, (mx, l1, e) in
             enumerate(zip(st.max_x_trace, st.l1_log_price_trace, st.epsilon_trace), start=1)]
    obs, bnd = _worst(pairs)
    rep.add(upper_row("primal vs price norm", bnd, obs, 1e-6))
    rep.add(upper_row("restricted calls", 4 * sigma * m * (T + sum(st.restart_phases)) + K,
                      st.restricted_calls))
    rep.add(upper_row("standard calls", n * (T + K), st.standard_calls))
    if m > 1:
        rep.add(upper_row("total calls", 64 * sigma * (n + m) * ln_m, st.total_calls))
    else:
        rep.add(skipped_row("total calls", "bound is degenerate for a single resource"))
    phases_sorted = all(a <= b for a, b in zip(st.restart_phases, st.restart_phases[1:]))
    rep.add(upper_row("restart phases non-decreasing", 0, 0 if phases_sorted else 1))
    if lambda_star is None:
        for name in ("restarts", "constant-factor bound", "restart phase bounds"):
            rep.add(skipped_row(name, "no declared optimum"))
        return rep
    lam = float(lambda_star)
    k_star = max(0, math.ceil(math.log2(lam) - 1e-12)) if lam > 0 else 0
    rep.add(upper_row("restarts", k_star, K))
    rep.add(upper_row("constant-factor bound", 16 * sigma * lam, cf.primal.max_entry(), 1e-9 * lam))
    limit = k_star - 3 - math.ceil(math.log2(sigma) - 1e-12)
    checks = [(t_i, 1 + 2.0 ** (i - k_star + 3) * sigma * ln_m)
              for i, t_i in enumerate(st.restart_phases, start=1) if i <= limit]
    if checks:
        obs, bnd = _worst(checks)
        rep.add(upper_row("restart phase bounds", bnd, obs))
    else:
        rep.add(skipped_row("restart phase bounds", "no restart index in the covered range"))
    return rep


def audit_pipeline(instance: Instance, result, lambda_star: float | None = None, decmin=None,
                   certs: Sequence[LocalDualityCert] = (), recorder: PhaseRecorder | None = None,
                   provenance: dict | None = None) -> AuditReport:
    """Check a full pipeline result in original units, plus its stages."""
    delta = result.delta
    sigma = instance.sigma
    rep = AuditReport(context={"stage": "pipeline", "delta": delta})
    rep.add(_decomposition_row(result.primal))
    xmax = result.primal.max_entry()
    lo, hi = result.lambda_star_bounds
    rep.add(upper_row("optimum bounds ordered", hi, lo, 1e-9 * max(1.0, abs(hi))))
    rep.add(upper_row("primal within bounds", (1 + delta) * sigma * hi, xmax, 1e-9 * max(1.0, hi)))
    recomputed = certify_dual(instance, result.dual.weights)
    if recomputed.exact == result.dual.exact:
        rep.add(upper_row("dual value reproducible", 1e-9 * max(1.0, recomputed.certified_value),
                          abs(recomputed.certified_value - result.dual.certified_value)))
    if result.degenerate:
        rep.add(upper_row("degenerate zero solution", 0.0, xmax))
        return rep
    if lambda_star is None:
        for name in ("primal guarantee", "dual guarantee", "optimum inside bounds", "normalized optimum"):
            rep.add(skipped_row(name, "no declared optimum"))
    else:
        lam = float(lambda_star)
        rep.add(upper_row("primal guarantee", (1 + delta) * sigma * lam, xmax, 1e-6))
        rep.add(lower_row("dual guarantee", (1 - delta) * lam / sigma, result.dual.certified_value, 1e-6,
                          note="exact" if result.dual.exact else "sigma-discounted"))
        tol = 1e-9 * max(1.0, lam)
        rep.add(AuditRow("optimum inside bounds", hi, lam, "upper",
                         PASS if lo - tol <= lam <= hi + tol else FAIL, f"lower bound {lo!r}"))
        rep.add(upper_row("normalized optimum", 1.0, lam * result.total_factor, 1e-9))
        for cert in certs:
            S = cert.indices()
            bound = cert.mu + delta * max(lam, cert.mu)
            rep.add(upper_row(f"local bound on {sorted(cert.subset)}", bound,
                              float(result.primal.aggregate[S].max()), 1e-6))
        if decmin is not None and sigma == 1.0 and result.dual.exact:
            x = sorted_decreasing(result.primal.aggregate)
            ref = sorted_decreasing(decmin)
            rep.add(upper_row("largest entry vs dec-min", ref[0] + delta * lam, float(x[0]), 1e-6))
            if x.size > 1:
                rep.add(upper_row("second entry vs dec-min", ref[1] + delta * lam, float(x[1]), 1e-6))
    if result.constant_factor is not None:
        lam_b = None if lambda_star is None else lambda_star * result.bootstrap_factor
        boot_inst = instance.scaled(result.bootstrap_factor)
        rep.extend(audit_constant_factor(boot_inst, result.constant_factor, lam_b), "constant-factor: ")
    if result.core is not None:
        lam_c = None if lambda_star is None else lambda_star * result.total_factor
        core_inst = instance.scaled(result.total_factor)
        scaled_certs = [LocalDualityCert(c.subset, c.mu * result.total_factor) for c in certs]
        rep.extend(audit_core(core_inst, result.core, lam_c, scaled_certs, recorder), "core: ")
    return rep


def audit_run(instance: Instance, result, lambda_star=None, decmin=None, certs=(), recorder=None,
              provenance=None) -> AuditReport:
    """Dispatch on the result type (core, constant-factor, or pipeline)."""
    from .scaling import ConstantFactorResult, PipelineResult

    if isinstance(result, PipelineResult):
        return audit_pipeline(instance, result, lambda_star, decmin, certs, recorder, provenance)
    if isinstance(result, ConstantFactorResult):
        return audit_constant_factor(instance, result, lambda_star)
    if isinstance(result, CoreResult):
        return audit_core(instance, result, lambda_star, certs, recorder, decmin, provenance)
    raise InputError(f"cannot audit a {type(result).__name__}")
