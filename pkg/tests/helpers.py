"""Independent test oracles.

Nothing here imports the solver internals: the reference loops follow the
textbook pseudo-code on raw (non-log) prices, and optima come from linear
programming.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linprog


def reference_core(vertex_lists, epsilon, phases):
    """Literal fixed-step loop on raw prices; argmin over explicit vertices.

    Ties are broken by exact comparison of cost differences (lowest index on
    exact ties).  Only usable while prices stay representable.
    """
    m = len(vertex_lists[0][0])
    y = np.ones(m)
    total = np.zeros(m)
    calls = std = 0
    thetas = []
    trace_calls = []
    for _ in range(phases):
        for V in vertex_lists:
            V = np.asarray(V, dtype=float)
            alpha = 0.0
            while alpha < 1.0 - 1e-12:
                best = 0
                for j in range(1, len(V)):
                    if np.dot(V[j] - V[best], y) < 0:
                        best = j
                b = V[best]
                bmax = b.max()
                rem = 1.0 - alpha
                step = rem if bmax == 0 else min(rem, 1.0 / bmax)
                calls += 1
                if bmax == 0 or 1.0 / bmax > rem + 1e-12:
                    std += 1
                if step >= rem - 1e-12:
                    step = rem
                y = y * np.exp(epsilon * step * b)
                total += step * b
                alpha += step
        opt = sum(min(np.dot(v, y) for v in np.asarray(V, dtype=float)) for V in vertex_lists)
        thetas.append(opt / y.sum())
        trace_calls.append(calls)
    return {"x": total / phases, "y": y, "calls": calls, "standard": std, "theta": thetas,
            "calls_trace": trace_calls}


def reference_constant_factor(vertex_lists, sigma=1.0):
    """Literal restart loop on raw prices (small instances only)."""
    m = len(vertex_lists[0][0])
    T = max(1, math.ceil(math.log(m)))
    eps, lam = 1.0 / (4 * sigma), 1.0
    y = np.ones(m)
    total = np.zeros(m)
    restarts = []
    calls = 0
    t = 1
    while t <= T:
        y_start = y.copy()
        phase_total = np.zeros(m)
        restarted = False
        for V in vertex_lists:
            V = np.asarray(V, dtype=float)
            alpha = 0.0
            while alpha < 1.0 - 1e-12:
                best = 0
                for j in range(1, len(V)):
                    if np.dot(V[j] - V[best], y) < 0:
                        best = j
                b = V[best]
                bmax = b.max()
                rem = 1.0 - alpha
                step = rem if bmax == 0 else min(rem, lam / bmax)
                if step >= rem - 1e-12:
                    step = rem
                calls += 1
                y = y * np.exp(eps * step * b)
                phase_total += step * b
                alpha += step
                if y.sum() > m * math.exp(t):
                    restarted = True
                    break
            if restarted:
                break
        if restarted:
            y = y_start
            eps /= 2
            lam *= 2
            restarts.append(t)
            continue
        total += phase_total
        t += 1
    return {"x": total / T, "restarts": restarts, "calls": calls, "epsilon": eps, "lam": lam}


def _lp_vars(vertex_lists):
    sizes = [len(V) for V in vertex_lists]
    return sizes, sum(sizes)


def lp_lambda_star(vertex_lists) -> float:
    """``min max_r x_r`` over the Minkowski sum of vertex hulls, by LP."""
    return lp_decmin(vertex_lists)[0].max()


def lp_decmin(vertex_lists, tol=1e-9):
    """Decreasingly minimal aggregate by progressive filling.

    Each round minimizes the common level ``t`` of the still-free resources
    (fixed resources held at their levels) and then fixes every resource that
    cannot be pushed below ``t``.  Returns (aggregate, levels).
    """
    V = [np.asarray(v, dtype=float) for v in vertex_lists]
    m = V[0].shape[1]
    sizes, k = _lp_vars(V)
    A = np.hstack([v.T for v in V])  # m x k aggregate map
    eq = np.zeros((len(V), k + 1))
    off = 0
    for c, s in enumerate(sizes):
        eq[c, off:off + s] = 1.0
        off += s
    beq = np.ones(len(V))
    fixed = {}
    free = set(range(m))
    x = None
    while free:
        # minimize t subject to A x <= t on free, A x <= level on fixed
        rows, rhs = [], []
        for r in range(m):
            row = np.append(A[r], -1.0 if r in free else 0.0)
            rows.append(row)
            rhs.append(0.0 if r in free else fixed[r] + tol)
        cost = np.zeros(k + 1)
        cost[-1] = 1.0
        res = linprog(cost, A_ub=np.array(rows), b_ub=np.array(rhs), A_eq=eq, b_eq=beq,
                      bounds=[(0, None)] * (k + 1), method="highs")
        assert res.status == 0, res.message
        level = res.x[-1]
        x = A @ res.x[:k]
        newly = []
        for r in sorted(free):
            rows2, rhs2 = [], []
            for q in range(m):
                if q in free:
                    rows2.append(np.append(A[q], 0.0))
                    rhs2.append(level + tol)
                else:
                    rows2.append(np.append(A[q], 0.0))
                    rhs2.append(fixed[q] + tol)
            c2 = np.append(A[r], 0.0)
            res2 = linprog(c2, A_ub=np.array(rows2), b_ub=np.array(rhs2), A_eq=eq, b_eq=beq,
                           bounds=[(0, None)] * (k + 1), method="highs")
            assert res2.status == 0, res2.message
            if res2.fun >= level - 1e-7:
                newly.append(r)
        if not newly:
            newly = sorted(free)
        for r in newly:
            fixed[r] = level
            free.discard(r)
    out = np.array([fixed[r] for r in range(m)])
    return out, x
