"""JSON instance/report files and CSV traces.

Floats are written with ``repr`` (shortest round-trip form), so reading a
file back reproduces every number bit for bit.  All writes go through a
temporary file and an atomic rename.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .analysis import AuditReport, PhaseRecorder
from .core import CoreParams, CoreResult
from .errors import InputError
from .generators import GeneratedInstance
from .model import DecomposedSolution, DualCertificate, Instance, LocalDualityCert, PriceState, RunStats
from .oracles import (
    ApproxWrapper,
    PathBlock,
    ProductBlock,
    ScaledSimplexBlock,
    VertexListBlock,
    ZeroBlock,
)
from .scaling import ConstantFactorResult, PipelineResult, ScalingState

VERSION = 1


# ---------------------------------------------------------------- blocks

def block_to_dict(block) -> dict:
    if isinstance(block, VertexListBlock):
        return {"type": "vertices", "vertices": block.vertices.tolist()}
    if isinstance(block, ScaledSimplexBlock):
        return {"type": "simplex", "scale": block.scale}
    if isinstance(block, ZeroBlock):
        return {"type": "zero"}
    if isinstance(block, ProductBlock):
        return {"type": "product",
                "parts": [{"window": w.tolist(), "block": block_to_dict(b)} for b, w in block.parts]}
    if isinstance(block, PathBlock):
        return {"type": "paths", "nodes": block.num_nodes, "arcs": [list(a) for a in block.arcs],
                "source": block.source, "sink": block.sink, "demand": block.demand}
    if isinstance(block, ApproxWrapper):
        return {"type": "approx", "sigma": block.sigma, "adversarial": block.adversarial_mode,
                "expose_exact": block.expose_exact, "inner": block_to_dict(block.inner)}
    raise InputError(f"block type {type(block).__name__} has no file representation")


def _req(d: dict, key: str):
    if key not in d:
        raise InputError(f"block descriptor lacks {key!r}")
    return d[key]


def block_from_dict(d: dict, m: int):
    if not isinstance(d, dict) or "type" not in d:
        raise InputError("block descriptor must be an object with a 'type'")
    kind = d["type"]
    if kind == "vertices":
        V = np.array(_req(d, "vertices"), dtype=float)
        if V.ndim != 2 or V.shape[1] != m:
            raise InputError(f"vertex list must have {m} columns")
        return VertexListBlock(V)
    if kind == "simplex":
        return ScaledSimplexBlock(m, float(_req(d, "scale")))
    if kind == "zero":
        return ZeroBlock(m)
    if kind == "product":
        parts = []
        for p in _req(d, "parts"):
            w = [int(r) for r in _req(p, "window")]
            if any(r < 0 or r >= m for r in w):
                raise InputError("product window index out of range")
            parts.append((block_from_dict(_req(p, "block"), len(w)), w))
        return ProductBlock(parts, m)
    if kind == "paths":
        arcs = [(int(u), int(v), None if r is None else int(r)) for u, v, r in _req(d, "arcs")]
        return PathBlock(int(_req(d, "nodes")), arcs, int(_req(d, "source")), int(_req(d, "sink")),
                         float(_req(d, "demand")), m)
    if kind == "approx":
        return ApproxWrapper(block_from_dict(_req(d, "inner"), m), float(_req(d, "sigma")),
                             bool(d.get("adversarial", True)), bool(d.get("expose_exact", True)))
    raise InputError(f"unknown block type {kind!r}")


# ---------------------------------------------------------------- instances

def instance_to_dict(gen: GeneratedInstance | Instance) -> dict:
    if isinstance(gen, Instance):
        gen = GeneratedInstance(gen)
    inst = gen.instance
    meta = {}
    if gen.declared_lambda_star is not None:
        meta["lambda_star"] = gen.declared_lambda_star
    if gen.declared_decmin is not None:
        meta["decmin"] = gen.declared_decmin.tolist()
    if gen.declared_certs:
        meta["certs"] = [{"subset": sorted(c.subset), "mu": c.mu} for c in gen.declared_certs]
    if gen.windows:
        meta["windows"] = [list(w) for w in gen.windows]
    if gen.provenance:
        meta["provenance"] = gen.provenance
    return {"version": VERSION, "resources": inst.m, "sigma": inst.sigma, "scale": inst.scale,
            "blocks": [block_to_dict(b) for b in inst.blocks], "metadata": meta}


def instance_from_dict(d: dict) -> GeneratedInstance:
    if not isinstance(d, dict):
        raise InputError("instance file must hold a JSON object")
    if d.get("version") != VERSION:
        raise InputError(f"unsupported instance version {d.get('version')!r}")
    try:
        m = int(d["resources"])
        blocks = [block_from_dict(b, m) for b in d["blocks"]]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"malformed instance: {exc}") from exc
    inst = Instance(m, blocks, sigma=float(d.get("sigma", 1.0)), scale=float(d.get("scale", 1.0)))
    meta = d.get("metadata", {}) or {}
    certs = tuple(LocalDualityCert(frozenset(c["subset"]), float(c["mu"])) for c in meta.get("certs", []))
    lam = meta.get("lambda_star")
    dec = meta.get("decmin")
    return GeneratedInstance(
        inst, None if lam is None else float(lam), None if dec is None else np.array(dec, dtype=float),
        certs, meta.get("provenance", {}), tuple(tuple(w) for w in meta.get("windows", [])),
    )


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=str(path.parent or Path(".")))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_instance(gen, path) -> None:
    atomic_write_text(path, json.dumps(instance_to_dict(gen), indent=1) + "\n")


def load_instance(path) -> GeneratedInstance:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read instance {path}: {exc}") from exc
    return instance_from_dict(data)


# ---------------------------------------------------------------- results

def _clean(x):
    if isinstance(x, float) and math.isnan(x):
        return None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    return x


def decomposition_to_dict(sol: DecomposedSolution) -> dict:
    return {"aggregate": sol.aggregate.tolist(),
            "per_customer": [[[coef, alloc.tolist()] for coef, alloc in terms] for terms in sol.per_customer]}


def decomposition_from_dict(d: dict) -> DecomposedSolution:
    parts = tuple(tuple((float(c), np.array(a, dtype=float)) for c, a in terms) for terms in d["per_customer"])
    return DecomposedSolution(parts, np.array(d["aggregate"], dtype=float))


def stats_to_dict(st: RunStats) -> dict:
    return dataclasses.asdict(st)


def stats_from_dict(d: dict) -> RunStats:
    fields = {f.name for f in dataclasses.fields(RunStats)}
    kw = {k: v for k, v in d.items() if k in fields}
    if kw.get("epsilon_final") is None:
        kw["epsilon_final"] = float("nan")
    return RunStats(**kw)


def dual_to_dict(d: DualCertificate) -> dict:
    return {"weights": d.weights.tolist(), "certified_value": d.certified_value, "exact": d.exact}


def dual_from_dict(d: dict) -> DualCertificate:
    return DualCertificate(np.array(d["weights"], dtype=float), float(d["certified_value"]), bool(d["exact"]))


def _recorder_to_dict(rec: PhaseRecorder | None):
    if rec is None or not rec.subsets:
        return None
    return {"subsets": [s.tolist() for s in rec.subsets], "log_sums": rec.local_log_sums,
            "max_x": rec.local_max_x}


def recorder_from_dict(d) -> PhaseRecorder | None:
    if not d:
        return None
    rec = PhaseRecorder(d["subsets"])
    rec.local_log_sums = [list(v) for v in d["log_sums"]]
    rec.local_max_x = [list(v) for v in d.get("max_x", [[] for _ in rec.subsets])]
    rec.phases = len(rec.local_log_sums[0]) if rec.local_log_sums else 0
    return rec


def core_report(result: CoreResult, audit: AuditReport | None = None,
                recorder: PhaseRecorder | None = None) -> dict:
    return _clean({
        "version": VERSION, "kind": "core",
        "params": {"epsilon": result.params.epsilon, "phases": result.params.phases},
        "primal": decomposition_to_dict(result.primal),
        "dual": dual_to_dict(result.dual),
        "final_exponents": result.prices.exponents.tolist(),
        "stats": stats_to_dict(result.stats),
        "scale_to_original": 1.0,
        "local_traces": _recorder_to_dict(recorder),
        "audit": None if audit is None else audit.to_dict()["rows"],
    })


def core_from_report(d: dict) -> tuple[CoreResult, PhaseRecorder | None]:
    params = CoreParams(float(d["params"]["epsilon"]), int(d["params"]["phases"]))
    res = CoreResult(decomposition_from_dict(d["primal"]), dual_from_dict(d["dual"]),
                     stats_from_dict(d["stats"]), PriceState(np.array(d["final_exponents"], dtype=float)),
                     True, params)
    return res, recorder_from_dict(d.get("local_traces"))


def _cf_dict(cf: ConstantFactorResult) -> dict:
    return {"primal": decomposition_to_dict(cf.primal), "stats": stats_to_dict(cf.stats),
            "dual": dual_to_dict(cf.dual), "phases": cf.phases, "epsilon_initial": cf.epsilon_initial,
            "final_exponents": cf.state.phase_snapshot.exponents.tolist()}


def _cf_from(d: dict) -> ConstantFactorResult:
    st = stats_from_dict(d["stats"])
    state = ScalingState(st.lambda_guess_final, st.epsilon_final,
                         PriceState(np.array(d["final_exponents"], dtype=float)), list(st.restart_phases))
    return ConstantFactorResult(decomposition_from_dict(d["primal"]), st, state, dual_from_dict(d["dual"]),
                                int(d["phases"]), float(d["epsilon_initial"]))


def approx_report(cf: ConstantFactorResult | None, bootstrap_factor: float, n: int, m: int,
                  audit: AuditReport | None = None) -> dict:
    """Report of the bootstrap plus constant-factor stages, primal in original units."""
    if cf is None:
        zero = np.zeros(m)
        primal = DecomposedSolution(tuple(((1.0, zero),) for _ in range(n)), zero.copy())
        body = {"degenerate": True, "primal": decomposition_to_dict(primal), "constant_factor": None}
    else:
        body = {"degenerate": False, "primal": decomposition_to_dict(cf.primal.scaled(1.0 / bootstrap_factor)),
                "constant_factor": _cf_dict(cf),
                "stats": {"restarts": cf.stats.restarts, "restart_phases": cf.stats.restart_phases,
                          "standard_calls": cf.stats.standard_calls,
                          "restricted_calls": cf.stats.restricted_calls,
                          "epsilon_final": cf.stats.epsilon_final,
                          "lambda_guess_final": cf.stats.lambda_guess_final}}
    body.update({"version": VERSION, "kind": "approx", "bootstrap_factor": bootstrap_factor,
                 "scale_to_original": 1.0 / bootstrap_factor,
                 "audit": None if audit is None else audit.to_dict()["rows"]})
    return _clean(body)


def pipeline_report(res: PipelineResult, audit: AuditReport | None = None,
                    recorder: PhaseRecorder | None = None) -> dict:
    body = {
        "version": VERSION, "kind": "pipeline", "delta": res.delta, "degenerate": res.degenerate,
        "primal": decomposition_to_dict(res.primal),
        "dual": dual_to_dict(res.dual),
        "lambda_star_bounds": list(res.lambda_star_bounds),
        "scaling": {"bootstrap_factor": res.bootstrap_factor,
                    "constfactor_factor": res.constfactor_factor,
                    "total_factor": res.total_factor},
        "scale_to_original": 1.0 / res.total_factor,
        "core_params": None if res.core_params is None else
        {"epsilon": res.core_params.epsilon, "phases": res.core_params.phases},
        "stats": {"bootstrap": stats_to_dict(res.stats_bootstrap),
                  "constfactor": stats_to_dict(res.stats_constfactor),
                  "core": stats_to_dict(res.stats_core)},
        "constant_factor": None if res.constant_factor is None else _cf_dict(res.constant_factor),
        "core": None if res.core is None else {
            "primal": decomposition_to_dict(res.core.primal), "dual": dual_to_dict(res.core.dual),
            "final_exponents": res.core.prices.exponents.tolist()},
        "local_traces": _recorder_to_dict(recorder),
        "audit": None if audit is None else audit.to_dict()["rows"],
    }
    return _clean(body)


def pipeline_from_report(d: dict) -> tuple[PipelineResult, PhaseRecorder | None]:
    stats = d["stats"]
    params = None if d.get("core_params") is None else CoreParams(
        float(d["core_params"]["epsilon"]), int(d["core_params"]["phases"]))
    core = None
    if d.get("core") is not None:
        c = d["core"]
        core = CoreResult(decomposition_from_dict(c["primal"]), dual_from_dict(c["dual"]),
                          stats_from_dict(stats["core"]),
                          PriceState(np.array(c["final_exponents"], dtype=float)), True, params)
    cf = None if d.get("constant_factor") is None else _cf_from(d["constant_factor"])
    sc = d["scaling"]
    res = PipelineResult(
        decomposition_from_dict(d["primal"]), dual_from_dict(d["dual"]), tuple(d["lambda_star_bounds"]),
        stats_from_dict(stats["bootstrap"]), stats_from_dict(stats["constfactor"]),
        stats_from_dict(stats["core"]), float(d["delta"]), float(sc["bootstrap_factor"]),
        float(sc["constfactor_factor"]), bool(d.get("degenerate", False)), params, core, cf,
    )
    return res, recorder_from_dict(d.get("local_traces"))


def write_json(path, data: dict) -> None:
    atomic_write_text(path, json.dumps(data) + "\n")


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


TRACE_COLUMNS = ("phase", "l1_log_price", "theta", "max_x", "calls_cumulative")


def write_trace_csv(path, stats: RunStats) -> None:
    """One row per completed phase with the fixed column order."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=str(path.parent or Path(".")))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for t, row in enumerate(zip(stats.l1_log_price_trace, stats.theta_trace,
                                        stats.max_x_trace, stats.calls_trace), start=1):
                l1, th, mx, calls = row
                w.writerow([t, repr(float(l1)), repr(float(th)), repr(float(mx)), int(calls)])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
