"""Command-line front end.

Exit codes: 0 success, 1 audit failure, 2 invalid input, 3 oracle contract
violation, 4 per-phase call cap exceeded.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import io
from .analysis import PhaseRecorder, audit_constant_factor, audit_run
from .core import CoreParams, run_core
from .errors import (
    CallCapExceeded,
    ContractViolation,
    DegenerateInstance,
    InputError,
    InternalInvariantError,
    UnsupportedInstanceError,
)
from .generators import (
    figure2_network,
    gen_adversarial,
    gen_cut_vertex_flow,
    gen_decoy_uniform,
    gen_lowerbound_composite,
    gen_parallel_flow,
    gen_product,
    gen_random_vertex,
    gen_simplex,
)
from .scaling import bootstrap_scale, run_constant_factor, solve_fptas

EXIT_AUDIT, EXIT_INPUT, EXIT_CONTRACT, EXIT_CAP = 1, 2, 3, 4


def _part_from_spec(spec: str):
    """Parse ``family:arg:arg`` part descriptors for ``gen product``."""
    name, _, rest = spec.partition(":")
    args = [a for a in rest.split(":") if a]
    try:
        if name == "simplex":
            return gen_simplex(int(args[0]), float(args[1]) if len(args) > 1 else 1.0)
        if name == "adversarial":
            return gen_adversarial(int(args[0]), float(args[1]))
        if name == "decoy":
            return gen_decoy_uniform(int(args[0]), int(args[1]), float(args[2]))
        if name == "random":
            return gen_random_vertex(*(int(a) for a in args[:4]), float(args[4]) if len(args) > 4 else 1.0)
    except (IndexError, ValueError) as exc:
        raise InputError(f"malformed part spec {spec!r}: {exc}") from exc
    raise InputError(f"unknown part family {name!r}")


def _generate(args):
    fam = args.family
    if fam == "adversarial":
        return gen_adversarial(args.m, args.epsilon)
    if fam == "lowerbound":
        return gen_lowerbound_composite(args.n, args.m)
    if fam == "cutflow":
        if args.parallel:
            return gen_parallel_flow(args.parallel[0], args.parallel[1], args.demand)
        net, s, t = figure2_network()
        return gen_cut_vertex_flow(net, [] if args.empty else [(s, t, args.demand)])
    if fam == "product":
        if not args.part:
            raise InputError("gen product needs at least one --part")
        return gen_product([_part_from_spec(p) for p in args.part])
    if fam == "random":
        return gen_random_vertex(args.n, args.m, args.k, args.seed, args.magnitude)
    if fam == "simplex":
        return gen_simplex(args.m, args.lam)
    if fam == "decoy":
        return gen_decoy_uniform(args.n, args.m, args.lam)
    raise InputError(f"unknown family {fam!r}")  # pragma: no cover - argparse restricts choices


def cmd_gen(args) -> int:
    gen = _generate(args)
    io.save_instance(gen, args.output)
    lam = "unknown" if gen.declared_lambda_star is None else repr(gen.declared_lambda_star)
    print(f"wrote {args.output}: n={gen.instance.n} m={gen.instance.m} lambda_star={lam}")
    return 0


def _recorder_for(gen) -> PhaseRecorder | None:
    if not gen.declared_certs:
        return None
    return PhaseRecorder([sorted(c.subset) for c in gen.declared_certs])


def _note_missing(gen) -> None:
    if gen.declared_lambda_star is None:
        print("note: instance declares no optimum; optimum-dependent rows are skipped", file=sys.stderr)


def _run_solve(gen, delta, backend):
    rec = _recorder_for(gen)
    res = solve_fptas(gen.instance, delta, observer=rec, backend=backend)
    rep = audit_run(gen.instance, res, gen.declared_lambda_star, gen.declared_decmin,
                    gen.declared_certs, rec, gen.provenance)
    return res, rep, rec


def _run_core(gen, epsilon, phases, backend):
    rec = _recorder_for(gen)
    res = run_core(gen.instance, CoreParams(epsilon, phases), observer=rec, backend=backend)
    rep = audit_run(gen.instance, res, gen.declared_lambda_star, gen.declared_decmin,
                    gen.declared_certs, rec, gen.provenance)
    return res, rep, rec


def _run_approx(gen):
    try:
        boot = bootstrap_scale(gen.instance)
    except DegenerateInstance:
        return None, 1.0, None
    cf = run_constant_factor(boot.instance)
    lam = None if gen.declared_lambda_star is None else gen.declared_lambda_star * boot.factor
    return cf, boot.factor, audit_constant_factor(boot.instance, cf, lam)


def cmd_solve(args) -> int:
    gen = io.load_instance(args.instance)
    res, rep, rec = _run_solve(gen, args.delta, args.backend)
    io.write_json(args.report, io.pipeline_report(res, rep, rec))
    if args.trace:
        io.write_trace_csv(args.trace, res.stats_core)
    lo, hi = res.lambda_star_bounds
    print(f"primal max {res.primal.max_entry()!r}  dual {res.dual.certified_value!r} "
          f"({'exact' if res.dual.exact else 'sigma-discounted'})  bounds [{lo!r}, {hi!r}]")
    return 0


def cmd_core(args) -> int:
    gen = io.load_instance(args.instance)
    res, rep, rec = _run_core(gen, args.epsilon, args.phases, args.backend)
    io.write_json(args.report, io.core_report(res, rep, rec))
    if args.trace:
        io.write_trace_csv(args.trace, res.stats)
    x = res.primal.aggregate
    print(f"primal max {x.max()!r}  min {x.min()!r}  dual {res.dual.certified_value!r}  "
          f"calls {res.stats.total_calls}")
    return 0


def cmd_approx(args) -> int:
    gen = io.load_instance(args.instance)
    cf, factor, rep = _run_approx(gen)
    io.write_json(args.report, io.approx_report(cf, factor, gen.instance.n, gen.instance.m, rep))
    if cf is None:
        print("degenerate instance: the zero allocation is optimal")
    else:
        print(f"max {cf.primal.max_entry()!r} (bootstrapped units)  restarts {cf.stats.restarts}  "
              f"restart phases {cf.stats.restart_phases}  calls {cf.stats.total_calls}")
    return 0


def cmd_audit(args) -> int:
    gen = io.load_instance(args.instance)
    _note_missing(gen)
    if args.report:
        data = io.read_json(args.report)
        kind = data.get("kind")
        if kind == "pipeline":
            res, rec = io.pipeline_from_report(data)
            rep = audit_run(gen.instance, res, gen.declared_lambda_star, gen.declared_decmin,
                            gen.declared_certs, rec, gen.provenance)
        elif kind == "core":
            res, rec = io.core_from_report(data)
            rep = audit_run(gen.instance, res, gen.declared_lambda_star, gen.declared_decmin,
                            gen.declared_certs, rec, gen.provenance)
        elif kind == "approx":
            if data.get("degenerate"):
                print("degenerate instance: nothing to audit")
                return 0
            cf = io._cf_from(data["constant_factor"])
            factor = float(data["bootstrap_factor"])
            lam = None if gen.declared_lambda_star is None else gen.declared_lambda_star * factor
            rep = audit_constant_factor(gen.instance.scaled(factor), cf, lam)
        else:
            raise InputError(f"unknown report kind {kind!r}")
    elif args.rerun == "solve":
        _, rep, _ = _run_solve(gen, args.delta, args.backend)
    elif args.rerun == "core":
        if args.epsilon is None or args.phases is None:
            raise InputError("--rerun core needs --epsilon and --phases")
        _, rep, _ = _run_core(gen, args.epsilon, args.phases, args.backend)
    elif args.rerun == "approx":
        cf, _, rep = _run_approx(gen)
        if cf is None:
            print("degenerate instance: nothing to audit")
            return 0
    else:
        raise InputError("audit needs --report or --rerun")
    for line in rep.lines():
        print(line)
    for row in rep.skipped():
        print(f"skipped: {row.name}: {row.note}", file=sys.stderr)
    return 0 if rep.passed else EXIT_AUDIT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="resshare", description="Min-max resource sharing solver")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an instance file")
    g.add_argument("family", choices=["adversarial", "lowerbound", "cutflow", "product", "random",
                                      "simplex", "decoy"])
    g.add_argument("-o", "--output", required=True)
    g.add_argument("--m", type=int, default=3)
    g.add_argument("--n", type=int, default=1)
    g.add_argument("--k", type=int, default=2, help="vertices per block (random)")
    g.add_argument("--epsilon", type=float, default=0.003)
    g.add_argument("--lam", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--magnitude", type=float, default=1.0)
    g.add_argument("--demand", type=float, default=1.0)
    g.add_argument("--parallel", type=int, nargs=2, metavar=("K1", "K2"))
    g.add_argument("--empty", action="store_true", help="cutflow with no commodities")
    g.add_argument("--part", action="append", help="product part, e.g. simplex:4:2")
    g.set_defaults(func=cmd_gen)

    backend = dict(choices=["auto", "python", "compiled"], default="auto")

    s = sub.add_parser("solve", help="full approximation pipeline")
    s.add_argument("instance")
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--trace")
    s.add_argument("--backend", **backend)
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("core", help="run the core algorithm on a normalized instance")
    c.add_argument("instance")
    c.add_argument("--epsilon", type=float, required=True)
    c.add_argument("--phases", type=int, required=True)
    c.add_argument("--report", required=True)
    c.add_argument("--trace")
    c.add_argument("--backend", **backend)
    c.set_defaults(func=cmd_core)

    a = sub.add_parser("approx", help="bootstrap plus constant-factor stage")
    a.add_argument("instance")
    a.add_argument("--report", required=True)
    a.set_defaults(func=cmd_approx)

    u = sub.add_parser("audit", help="check a report (or a fresh run) against all bounds")
    u.add_argument("instance")
    u.add_argument("--report")
    u.add_argument("--rerun", choices=["solve", "core", "approx"])
    u.add_argument("--delta", type=float, default=0.1)
    u.add_argument("--epsilon", type=float)
    u.add_argument("--phases", type=int)
    u.add_argument("--backend", **backend)
    u.set_defaults(func=cmd_audit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, UnsupportedInstanceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ContractViolation, InternalInvariantError) as exc:
        print(f"oracle contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except CallCapExceeded as exc:
        print(f"call cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
