"""Acceptance criteria 1-10; each test prints one PASS/FAIL line."""

import json
import math
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from helpers import lp_decmin, lp_lambda_star
from resshare import (
    ApproxWrapper,
    CoreParams,
    Instance,
    ScaledSimplexBlock,
    VertexListBlock,
    run_core,
    solve_fptas,
)
from resshare.analysis import PhaseRecorder, late_phase_dual
from resshare.cli import main
from resshare.generators import (
    GeneratedInstance,
    gen_adversarial,
    gen_decoy_uniform,
    gen_lowerbound_composite,
    gen_product,
    gen_random_vertex,
    gen_simplex,
)
from resshare import io

TOL = 1e-6


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


def _solve_cli(tmp_path, gen, delta, name):
    inst, rep = tmp_path / f"{name}.json", tmp_path / f"{name}-report.json"
    io.save_instance(gen, inst)
    t0 = time.perf_counter()
    code = main(["solve", str(inst), "--delta", str(delta), "--report", str(rep)])
    return code, json.loads(rep.read_text()), time.perf_counter() - t0


def _fptas_cases():
    return [
        ("simplex m=4", gen_simplex(4)),
        ("simplex m=8", gen_simplex(8)),
        ("simplex m=16", gen_simplex(16)),
        ("product simplex(4,1) x simplex(4,2)", gen_product([gen_simplex(4, 1.0), gen_simplex(4, 2.0)])),
        ("product simplex(3,1) x decoy(2,4,2)", gen_product([gen_simplex(3, 1.0), gen_decoy_uniform(2, 4, 2.0)])),
    ]


@pytest.fixture(scope="module")
def fptas_runs(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("fptas")
    return [(label, gen) + _solve_cli(tmp, gen, 0.1, f"c{i}") for i, (label, gen) in enumerate(_fptas_cases())]


def test_criterion_1_fptas_primal(fptas_runs, report):
    parts, ok = [], True
    for label, gen, code, data, secs in fptas_runs:
        lam, sigma = gen.declared_lambda_star, gen.instance.sigma
        xmax = max(data["primal"]["aggregate"])
        good = code == 0 and xmax <= 1.1 * sigma * lam + TOL and secs <= 60
        ok &= good
        parts.append(f"{label}: max {xmax:.6f} <= {1.1 * sigma * lam:.6f} ({secs:.1f}s)")
    report(1, ok, "; ".join(parts))


def test_criterion_2_fptas_dual(fptas_runs, report):
    parts, ok = [], True
    for label, gen, code, data, secs in fptas_runs:
        lam, sigma = gen.declared_lambda_star, gen.instance.sigma
        dual = data["dual"]
        good = dual["exact"] and dual["certified_value"] >= 0.9 * lam / sigma - TOL
        ok &= good
        parts.append(f"{label}: dual {dual['certified_value']:.6f} >= {0.9 * lam / sigma:.6f} exact={dual['exact']}")
    report(2, ok, "; ".join(parts))


def test_criterion_3_constant_factor(tmp_path, report):
    cases = []
    for lam in (1.0, 8.0, 64.0):
        cases.append((f"decoy n=3 m=64 lam={lam:g}", gen_decoy_uniform(3, 64, lam)))
        cases.append((f"simplex m=16 lam={lam:g}", gen_simplex(16, lam)))
    parts, ok = [], True
    for i, (label, gen) in enumerate(cases):
        inst, rep = tmp_path / f"{i}.json", tmp_path / f"{i}-r.json"
        io.save_instance(gen, inst)
        t0 = time.perf_counter()
        code = main(["approx", str(inst), "--report", str(rep)])
        secs = time.perf_counter() - t0
        data = json.loads(rep.read_text())
        lam, sigma = gen.declared_lambda_star, gen.instance.sigma
        n, m = gen.instance.n, gen.instance.m
        xmax = max(data["primal"]["aggregate"])
        restarts = data["stats"]["restarts"]
        calls = data["stats"]["standard_calls"] + data["stats"]["restricted_calls"]
        call_bound = 64 * sigma * (n + m) * math.log(m)
        k_star = math.ceil(math.log2(lam))
        good = (code == 0 and xmax <= 16 * sigma * lam + TOL and restarts <= k_star
                and calls <= call_bound and secs <= 5)
        ok &= good
        parts.append(f"{label}: max {xmax:.3f}<= {16 * sigma * lam:g}, restarts {restarts}<= {k_star}, "
                     f"calls {calls}<= {call_bound:.0f}, {secs:.2f}s")
    report(3, ok, "; ".join(parts))


def _log_norm(a):
    top = a.max()
    return float(top + math.log(np.exp(a - top).sum()))


_CALL_STATS = {"runs": 0, "worst": -math.inf}


@settings(max_examples=50, deadline=None, derandomize=True,
          suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(n=st.integers(1, 4), m=st.integers(1, 6), k=st.integers(1, 4), seed=st.integers(0, 10 ** 6),
       eps=st.floats(0.01, 0.5), phases=st.integers(1, 40), python=st.booleans())
def test_criterion_4_call_accounting(n, m, k, seed, eps, phases, python):
    gen = gen_random_vertex(n, m, k, seed=seed, magnitude=1.0 / n)
    snaps = []
    res = run_core(gen.instance, CoreParams(eps, phases), observer=snaps.append,
                   backend="python" if python else "compiled")
    prev_std = 0
    for t, snap in enumerate(snaps, start=1):
        # the price norm is recomputed here from the raw exponents
        bound = t * n + (m / eps) * (_log_norm(snap.exponents) - math.log(m)) + 1.0
        _CALL_STATS["worst"] = max(_CALL_STATS["worst"], snap.calls - bound)
        assert snap.calls <= bound + 1e-9 * t * n
        assert snap.standard_calls - prev_std <= n
        prev_std = snap.standard_calls
    assert res.stats.total_calls == snaps[-1].calls
    _CALL_STATS["runs"] += 1


def test_criterion_4_summary(report):
    if _CALL_STATS["runs"] == 0:  # run in isolation: exercise the property here
        test_criterion_4_call_accounting()
    report(4, _CALL_STATS["runs"] >= 50,
           f"{_CALL_STATS['runs']} random runs; max(calls - bound) = {_CALL_STATS['worst']:.3f} <= 0; "
           "standard calls per phase <= n")


def _check_local_growth(gen, rec, eps, scale, T):
    eta = math.expm1(eps)
    worst = -math.inf
    for cert, sums in zip(gen.declared_certs, rec.local_log_sums):
        mu = cert.mu * scale
        assert eta * mu < 1
        rate = eta * mu / (1 - eta * mu)
        for t, v in enumerate(sums, start=1):
            worst = max(worst, v - (math.log(len(cert.subset)) + t * rate))
    assert len(rec.local_log_sums[0]) == T
    return worst


def test_criterion_5_local_price_growth(report):
    parts, ok = [], True
    # direct core runs on normalized products
    for label, gen in (
        ("core product simplex(3,0.5) x simplex(3,1)", gen_product([gen_simplex(3, 0.5), gen_simplex(3, 1.0)])),
        ("core product decoy(2,4,1) x simplex(2,0.25)", gen_product([gen_decoy_uniform(2, 4, 1.0),
                                                                    gen_simplex(2, 0.25)])),
    ):
        rec = PhaseRecorder([sorted(c.subset) for c in gen.declared_certs])
        run_core(gen.instance, CoreParams(0.05, 400), observer=rec)
        worst = _check_local_growth(gen, rec, 0.05, 1.0, 400)
        ok &= worst <= TOL
        parts.append(f"{label}: max excess {worst:.3e}")
    # the core stage of the full pipeline, certificates rescaled to its units
    gen = gen_product([gen_simplex(4, 1.0), gen_simplex(4, 2.0)])
    rec = PhaseRecorder([sorted(c.subset) for c in gen.declared_certs])
    res = solve_fptas(gen.instance, 0.2, observer=rec)
    worst = _check_local_growth(gen, rec, res.core_params.epsilon, res.total_factor, res.core_params.phases)
    ok &= worst <= TOL
    parts.append(f"pipeline product simplex(4,1) x simplex(4,2): max excess {worst:.3e}")
    report(5, ok, "; ".join(parts))


def test_criterion_6_local_bound(fptas_runs, report):
    label, gen, code, data, _ = fptas_runs[3]
    w1 = list(gen.windows[0])
    local = max(np.array(data["primal"]["aggregate"])[w1])
    bound = 1.0 + 0.1 * 2.0
    report(6, code == 0 and local <= bound + TOL, f"{label}: window-1 max {local:.6f} <= {bound}")


def _hand_instances():
    h1 = Instance(3, [VertexListBlock([[3, 1, 0], [3, 0, 1]])])
    h2 = Instance(3, [VertexListBlock([[2, 0, 0]]), VertexListBlock([[0, 1, 0], [0, 0, 1], [1, 0, 0]])])
    out = []
    for label, inst, dec in (("hull{(3,1,0),(3,0,1)}", h1, [3, 0.5, 0.5]),
                             ("{(2,0,0)} + hull{e2,e3,e1}", h2, [2, 0.5, 0.5])):
        # the declared value is confirmed by the independent LP oracle
        lp, _ = lp_decmin([b.vertices for b in inst.blocks])
        assert lp == pytest.approx(dec, abs=1e-7)
        out.append((label, GeneratedInstance(inst, max(dec), np.array(dec, dtype=float))))
    return out


def test_criterion_7_two_entry_decmin(report):
    delta = 0.1
    cases = [("adversarial m=3 eps=0.01", gen_adversarial(3, 0.01)),
             ("adversarial m=4 eps=0.02", gen_adversarial(4, 0.02)),
             ("product of two adversarial", gen_product([gen_adversarial(3, 0.01), gen_adversarial(3, 0.01)]))]
    cases += _hand_instances()
    parts, ok = [], True
    for label, gen in cases:
        res = solve_fptas(gen.instance, delta)
        x = np.sort(res.primal.aggregate)[::-1]
        lam = np.sort(gen.declared_decmin)[::-1]
        lstar = gen.declared_lambda_star
        b1, b2 = lam[0] + delta * lstar, lam[1] + delta * lstar
        good = x[0] <= b1 + TOL and x[1] <= b2 + TOL
        ok &= good
        parts.append(f"{label}: x1 {x[0]:.4f}<= {b1:.4f}, x2 {x[1]:.4f}<= {b2:.4f}")
    report(7, ok, "; ".join(parts))


def test_criterion_8_three_entry(tmp_path, report):
    eps = 0.003
    T = math.ceil(math.log(3) / eps ** 2)
    inst, rep = tmp_path / "a.json", tmp_path / "r.json"
    main(["gen", "adversarial", "--m", "3", "--epsilon", str(eps), "-o", str(inst)])
    t0 = time.perf_counter()
    code = main(["core", str(inst), "--epsilon", str(eps), "--phases", str(T), "--report", str(rep)])
    secs = time.perf_counter() - t0
    data = json.loads(rep.read_text())
    xmin = min(data["primal"]["aggregate"])
    result, _ = io.core_from_report(data)
    late = late_phase_dual(result.stats, 0.125)
    ok = (code == 0 and T == 122069 and xmin >= 0.75 and late is not None
          and late.phase >= 0.875 * T and late.value >= 0.875 and secs <= 120)
    detail = (f"T={T}, min x {xmin:.4f} >= 0.75 with dec-min third entry 0; "
              f"late phase {None if late is None else late.phase} >= {0.875 * T:.0f} "
              f"theta {None if late is None else round(late.value, 6)} >= 0.875; {secs:.1f}s")
    report(8, ok, detail)


def test_criterion_9_lower_bound_mechanics(report):
    n, m = 2, 8
    gen = gen_lowerbound_composite(n, m)
    parts, ok = [], True
    for eps, T, backend in ((0.1, 50, "python"), (0.05, 200, "compiled"), (0.3, 7, "auto")):
        res = run_core(gen.instance, CoreParams(eps, T), backend=backend)
        st_ = res.stats
        per_phase = np.diff([0] + st_.calls_trace)
        per_std = np.diff([0] + st_.standard_trace)
        good = (st_.customer_restricted[1] == m * T and st_.customer_standard[2:] == [T] * n
                and (per_std == n).all() and (per_phase == m + 1 + n).all()
                and st_.total_calls >= T * (m + 1))
        ok &= good
        parts.append(f"eps={eps} T={T} {backend}: simplex restricted {st_.customer_restricted[1]} = m*T, "
                     f"standard/phase {set(per_std.tolist())}, total {st_.total_calls} >= {T * (m + 1)}")
    report(9, ok, "; ".join(parts))


def test_criterion_10_sigma_two(report):
    delta, sigma = 0.1, 2.0
    parts, ok = [], True
    cases = []
    for m in (2, 4):
        cases.append((f"adversarial-mode wrapper on simplex m={m}",
                      Instance(m, [ApproxWrapper(ScaledSimplexBlock(m, float(m)), sigma, expose_exact=False)],
                               sigma=sigma), 1.0))
    V = gen_random_vertex(1, 3, 4, seed=3).instance.blocks[0].vertices
    cases.append(("adversarial-mode wrapper on random hull m=3",
                  Instance(3, [ApproxWrapper(VertexListBlock(V), sigma, expose_exact=False)], sigma=sigma),
                  lp_lambda_star([V])))
    for label, inst, lam in cases:
        res = solve_fptas(inst, delta)
        xmax = res.primal.max_entry()
        dual = res.dual
        good = (xmax <= (1 + delta) * sigma * lam + TOL and not dual.exact
                and dual.certified_value >= (1 - delta) * lam / sigma - TOL)
        ok &= good
        parts.append(f"{label}: max {xmax:.4f} <= {(1 + delta) * sigma * lam:.4f}, "
                     f"discounted dual {dual.certified_value:.4f} >= {(1 - delta) * lam / sigma:.4f}")
    report(10, ok, "; ".join(parts))
