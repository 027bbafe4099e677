"""Compiled phase loop for instances built from enumerable blocks.

Blocks made of vertex lists, scaled simplices, zero blocks, approximate
wrappers over those, and products of all of these are flattened into
parts (a window of resources plus a selection rule).  The kernel mirrors the
pure-Python engine step for step; only round-off in dot products and
``exp`` may differ in the last bits.
"""

from __future__ import annotations

import math

import numpy as np

from .model import RunStats
from .oracles import ApproxWrapper, ProductBlock, ScaledSimplexBlock, VertexListBlock, ZeroBlock

try:  # pragma: no cover - exercised implicitly when numba is installed
    import numba
    from numba import njit, types
    from numba.typed import Dict

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

KIND_ARGMIN, KIND_SIMPLEX, KIND_ZERO, KIND_SIGMA = 0, 1, 2, 3
_MAX_KEY = 2**62


class _Part:
    __slots__ = ("kind", "sigma", "scale", "window", "cands")

    def __init__(self, kind, window, sigma=1.0, scale=0.0, cands=None):
        self.kind = kind
        self.window = np.asarray(window, dtype=np.int64)
        self.sigma = float(sigma)
        self.scale = float(scale)
        self.cands = cands

    @property
    def count(self) -> int:
        if self.kind == KIND_ZERO:
            return 1
        if self.kind == KIND_SIMPLEX:
            return self.window.size
        return self.cands.shape[0]


def _flatten(block, window) -> tuple[list, bool] | None:
    """Parts of ``block`` acting on ``window`` and whether exact optima are exposed."""
    if isinstance(block, VertexListBlock):
        return [_Part(KIND_ARGMIN, window, cands=np.ascontiguousarray(block.vertices))], True
    if isinstance(block, ScaledSimplexBlock):
        return [_Part(KIND_SIMPLEX, window, scale=block.scale)], True
    if isinstance(block, ZeroBlock):
        return [_Part(KIND_ZERO, window)], True
    if isinstance(block, ProductBlock):
        parts, exact = [], True
        for sub, w in block.parts:
            got = _flatten(sub, window[w])
            if got is None:
                return None
            parts.extend(got[0])
            exact = exact and got[1]
        return parts, exact
    if isinstance(block, ApproxWrapper):
        inner = block.inner
        if block._cands is not None:
            if isinstance(inner, ZeroBlock):
                parts = [_Part(KIND_ZERO, window)]
            else:
                parts = [_Part(KIND_SIGMA, window, sigma=block.sigma,
                               cands=np.ascontiguousarray(block._cands, dtype=float))]
        else:
            got = _flatten(inner, window)
            if got is None:
                return None
            parts = got[0]
        return parts, block.expose_exact
    return None


class CompiledInstance:
    """Flat array form of an instance accepted by the kernel."""

    def __init__(self, instance, per_customer):
        self.m = instance.m
        self.n = instance.n
        self.sigma = instance.sigma
        parts = [p for ps, _ in per_customer for p in ps]
        self.parts_by_customer = [ps for ps, _ in per_customer]
        self.all_exact = all(ex for _, ex in per_customer)
        self.cust_ptr = np.cumsum([0] + [len(ps) for ps, _ in per_customer]).astype(np.int64)
        self.kind = np.array([p.kind for p in parts], dtype=np.int64)
        self.psig = np.array([p.sigma for p in parts], dtype=float)
        self.pscale = np.array([p.scale for p in parts], dtype=float)
        self.win_ptr = np.cumsum([0] + [p.window.size for p in parts]).astype(np.int64)
        self.win_idx = np.concatenate([p.window for p in parts]).astype(np.int64)
        flat, ptr = [], [0]
        for p in parts:
            if p.cands is not None:
                flat.append(p.cands.reshape(-1))
                ptr.append(ptr[-1] + p.cands.size)
            else:
                ptr.append(ptr[-1])
        self.cand_ptr = np.array(ptr, dtype=np.int64)
        self.cands = np.concatenate(flat) if flat else np.zeros(0)
        self.count = np.array([p.count for p in parts], dtype=np.int64)
        radix, base = [], [0]
        for ps in self.parts_by_customer:
            r = 1
            for p in ps:
                radix.append(r)
                r *= p.count
            base.append(base[-1] + r)
        self.radix = np.array(radix, dtype=np.int64)
        self.cust_base = np.array(base, dtype=np.int64)

    def allocation(self, key: int) -> tuple[int, np.ndarray]:
        """Decode a column key into its customer and allocation vector."""
        c = int(np.searchsorted(self.cust_base, key, side="right") - 1)
        rest = key - int(self.cust_base[c])
        out = np.zeros(self.m)
        for p in self.parts_by_customer[c]:
            j = rest % p.count
            rest //= p.count
            if p.kind == KIND_SIMPLEX:
                out[p.window[j]] = p.scale
            elif p.kind != KIND_ZERO:
                out[p.window] = p.cands[j]
        out.setflags(write=False)
        return c, out


def compile_instance(instance) -> CompiledInstance | None:
    """Flatten ``instance`` for the kernel, or None if some block is unsupported."""
    if not HAVE_NUMBA:
        return None
    per_customer = []
    window = np.arange(instance.m, dtype=np.int64)
    combos = 0
    for block in instance.blocks:
        got = _flatten(block, window)
        if got is None:
            return None
        size = 1
        for p in got[0]:
            size *= p.count
        combos += size
        if combos >= _MAX_KEY:
            return None
        per_customer.append(got)
    return CompiledInstance(instance, per_customer)


if HAVE_NUMBA:

    @njit(cache=True)
    def _evaluate(c, yhat, b, cust_ptr, kind, psig, pscale, win_ptr, win_idx, cand_ptr, cands, radix):
        for r in range(b.shape[0]):
            b[r] = 0.0
        key = 0
        for p in range(cust_ptr[c], cust_ptr[c + 1]):
            w0 = win_ptr[p]
            w = win_ptr[p + 1] - w0
            k = kind[p]
            if k == 2:
                continue
            if k == 1:
                best = 0
                bv = yhat[win_idx[w0]]
                for i in range(1, w):
                    v = yhat[win_idx[w0 + i]]
                    if v < bv:
                        bv = v
                        best = i
                b[win_idx[w0 + best]] = pscale[p]
                key += best * radix[p]
                continue
            c0 = cand_ptr[p]
            ncand = (cand_ptr[p + 1] - c0) // w
            mn = np.inf
            arg = 0
            costs = np.empty(ncand)
            for j in range(ncand):
                s = 0.0
                for i in range(w):
                    s += cands[c0 + j * w + i] * yhat[win_idx[w0 + i]]
                costs[j] = s
                if s < mn:
                    mn = s
                    arg = j
            if k == 0:
                # near-tie refinement, same rule as oracles.refine_argmin
                thr = mn + 1e-12 * abs(mn)
                best = -1
                for j in range(ncand):
                    if costs[j] <= thr:
                        if best < 0:
                            best = j
                        else:
                            d = 0.0
                            dabs = 0.0
                            for i in range(w):
                                dv = cands[c0 + j * w + i] - cands[c0 + best * w + i]
                                d += dv * yhat[win_idx[w0 + i]]
                                dabs += abs(dv) * yhat[win_idx[w0 + i]]
                            if d < -1e-12 * dabs:
                                best = j
                arg = best
            if k == 3:
                limit = psig[p] * mn
                bc = -np.inf
                for j in range(ncand):
                    if costs[j] <= limit and costs[j] > bc:
                        bc = costs[j]
                        arg = j
            for i in range(w):
                b[win_idx[w0 + i]] = cands[c0 + arg * w + i]
            key += arg * radix[p]
        return key

    @njit(cache=True)
    def _exact_opt(c, yhat, cust_ptr, kind, pscale, win_ptr, win_idx, cand_ptr, cands):
        total = 0.0
        for p in range(cust_ptr[c], cust_ptr[c + 1]):
            w0 = win_ptr[p]
            w = win_ptr[p + 1] - w0
            k = kind[p]
            if k == 2:
                continue
            if k == 1:
                bv = yhat[win_idx[w0]]
                for i in range(1, w):
                    v = yhat[win_idx[w0 + i]]
                    if v < bv:
                        bv = v
                total += pscale[p] * bv
                continue
            c0 = cand_ptr[p]
            ncand = (cand_ptr[p + 1] - c0) // w
            mn = np.inf
            for j in range(ncand):
                s = 0.0
                for i in range(w):
                    s += cands[c0 + j * w + i] * yhat[win_idx[w0 + i]]
                if s < mn:
                    mn = s
            total += mn
        return total

    @njit(cache=True)
    def _kernel(m, n, T, eps, tol, cust_ptr, kind, psig, pscale, win_ptr, win_idx, cand_ptr,
                cands, radix, cust_base, all_exact, sigma_inst, cap_fixed, cap_growth, record):
        a = np.zeros(m)
        yhat = np.ones(m)
        total = np.zeros(m)
        ptot = np.zeros(m)
        zsum = np.zeros(m)
        b = np.zeros(m)
        theta_tr = np.zeros(T)
        l1_tr = np.zeros(T)
        calls_tr = np.zeros(T, dtype=np.int64)
        std_tr = np.zeros(T, dtype=np.int64)
        maxx_tr = np.zeros(T)
        cust_std = np.zeros(n, dtype=np.int64)
        cust_res = np.zeros(n, dtype=np.int64)
        rec_rows = T if record else 0
        exps_rec = np.zeros((rec_rows, m))
        tot_rec = np.zeros((rec_rows, m))
        cols = Dict.empty(key_type=types.int64, value_type=types.float64)
        pcols = Dict.empty(key_type=types.int64, value_type=types.float64)
        n_std = 0
        n_res = 0
        status = 0
        fail_phase = 0
        for t in range(1, T + 1):
            if cap_fixed >= 0:
                cap = cap_fixed
            elif cap_growth < 0:
                cap = 10_000_000
            else:
                cap = min(10_000_000, 10 * (n + int(math.ceil(m / eps * (t * cap_growth)))))
            phase_calls = 0
            pcols.clear()
            for c in range(n):
                alpha = 0.0
                while True:
                    key = cust_base[c] + _evaluate(c, yhat, b, cust_ptr, kind, psig, pscale,
                                                   win_ptr, win_idx, cand_ptr, cands, radix)
                    bmax = 0.0
                    for r in range(m):
                        if b[r] > bmax:
                            bmax = b[r]
                    phase_calls += 1
                    rem = 1.0 - alpha
                    inv = 1.0 / bmax if bmax > 0.0 else np.inf
                    done = False
                    if inv >= rem - tol:
                        xi = rem
                        done = True
                        if inv <= rem + tol:
                            n_res += 1
                            cust_res[c] += 1
                        else:
                            n_std += 1
                            cust_std[c] += 1
                    else:
                        xi = inv
                        n_res += 1
                        cust_res[c] += 1
                    if key in pcols:
                        pcols[key] += xi
                    else:
                        pcols[key] = xi
                    if bmax > 0.0:
                        f = eps * xi
                        for r in range(m):
                            if b[r] != 0.0:
                                a[r] += f * b[r]
                                ptot[r] += xi * b[r]
                        amax = a[0]
                        for r in range(1, m):
                            if a[r] > amax:
                                amax = a[r]
                        for r in range(m):
                            yhat[r] = math.exp(a[r] - amax)
                    if phase_calls > cap:
                        status = 1
                        fail_phase = t
                        break
                    if done:
                        break
                    alpha += xi
                if status != 0:
                    break
            if status != 0:
                break
            for r in range(m):
                total[r] += ptot[r]
                ptot[r] = 0.0
            for key, v in pcols.items():
                if key in cols:
                    cols[key] += v
                else:
                    cols[key] = v
            amax = a[0]
            for r in range(1, m):
                if a[r] > amax:
                    amax = a[r]
            norm = 0.0
            for r in range(m):
                norm += yhat[r]
            l1 = amax + math.log(norm)
            num = 0.0
            if all_exact:
                for c in range(n):
                    num += _exact_opt(c, yhat, cust_ptr, kind, pscale, win_ptr, win_idx, cand_ptr, cands)
            else:
                for c in range(n):
                    _evaluate(c, yhat, b, cust_ptr, kind, psig, pscale, win_ptr, win_idx,
                              cand_ptr, cands, radix)
                    s = 0.0
                    for r in range(m):
                        s += b[r] * yhat[r]
                    num += s
                num = num / sigma_inst
            theta_tr[t - 1] = num / norm
            l1_tr[t - 1] = l1
            calls_tr[t - 1] = n_std + n_res
            std_tr[t - 1] = n_std
            mx = total[0]
            for r in range(m):
                zsum[r] += math.exp(a[r] - l1)
                if total[r] > mx:
                    mx = total[r]
            maxx_tr[t - 1] = mx / t
            if record:
                for r in range(m):
                    exps_rec[t - 1, r] = a[r]
                    tot_rec[t - 1, r] = total[r]
        keys = np.zeros(len(cols), dtype=np.int64)
        vals = np.zeros(len(cols))
        i = 0
        for key, v in cols.items():
            keys[i] = key
            vals[i] = v
            i += 1
        return (status, fail_phase, a, total, zsum, theta_tr, l1_tr, calls_tr, std_tr, maxx_tr,
                cust_std, cust_res, n_std, n_res, keys, vals, exps_rec, tot_rec)


def run_kernel(ci: CompiledInstance, epsilon: float, phases: int, tol: float,
               call_cap: int | None, cap_growth: float, record: bool):
    """Invoke the compiled loop; see ``core.run_engine`` for the semantics."""
    return _kernel(ci.m, ci.n, int(phases), float(epsilon), float(tol), ci.cust_ptr, ci.kind,
                   ci.psig, ci.pscale, ci.win_ptr, ci.win_idx, ci.cand_ptr, ci.cands, ci.radix,
                   ci.cust_base, ci.all_exact, float(ci.sigma),
                   -1 if call_cap is None else int(call_cap), float(cap_growth), bool(record))
