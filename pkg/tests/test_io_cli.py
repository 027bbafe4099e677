import csv
import json

import numpy as np
import pytest

from resshare import ApproxWrapper, CoreParams, InputError, Instance, ScaledSimplexBlock, run_core, solve_fptas
from resshare import io
from resshare.cli import main
from resshare.generators import (
    figure2_network,
    gen_adversarial,
    gen_cut_vertex_flow,
    gen_lowerbound_composite,
    gen_product,
    gen_random_vertex,
    gen_simplex,
)


def _same_blocks(a, b):
    return json.dumps(io.instance_to_dict(a)) == json.dumps(io.instance_to_dict(b))


@pytest.mark.parametrize("gen", [
    gen_adversarial(3, 0.003),
    gen_lowerbound_composite(2, 3),
    gen_product([gen_simplex(2, 1.0), gen_random_vertex(1, 2, 2, seed=3)]),
    gen_cut_vertex_flow(*figure2_network()[:1], [("B", "G", 1.5)]),
    gen_random_vertex(2, 3, 3, seed=1, magnitude=7.0),
])
def test_instance_round_trip(tmp_path, gen):
    path = tmp_path / "i.json"
    io.save_instance(gen, path)
    back = io.load_instance(path)
    assert _same_blocks(gen, back)
    rng = np.random.default_rng(0)
    for _ in range(20):
        y = rng.exponential(size=gen.instance.m)
        for b1, b2 in zip(gen.instance.blocks, back.instance.blocks):
            assert np.array_equal(b1.evaluate(y)[0], b2.evaluate(y)[0])


def test_approx_wrapper_round_trip(tmp_path):
    inst = Instance(3, [ApproxWrapper(ScaledSimplexBlock(3, 2.0), 2.0, expose_exact=False)], sigma=2.0)
    io.save_instance(inst, tmp_path / "a.json")
    back = io.load_instance(tmp_path / "a.json").instance
    assert back.sigma == 2.0 and not back.blocks[0].supports_exact


def test_malformed_instances(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(InputError):
        io.load_instance(p)
    p.write_text(json.dumps({"version": 99}))
    with pytest.raises(InputError):
        io.load_instance(p)
    p.write_text(json.dumps({"version": 1, "resources": 2, "blocks": [{"type": "nope"}]}))
    with pytest.raises(InputError):
        io.load_instance(p)


def test_core_report_round_trip():
    res = run_core(gen_simplex(3).instance, CoreParams(0.2, 10))
    data = json.loads(json.dumps(io.core_report(res)))
    back, _ = io.core_from_report(data)
    assert np.array_equal(back.primal.aggregate, res.primal.aggregate)
    assert back.stats.theta_trace == res.stats.theta_trace
    assert back.dual.certified_value == res.dual.certified_value


def test_pipeline_report_round_trip():
    res = solve_fptas(gen_simplex(3).instance, 0.5)
    data = json.loads(json.dumps(io.pipeline_report(res)))
    back, _ = io.pipeline_from_report(data)
    assert np.array_equal(back.primal.aggregate, res.primal.aggregate)
    assert back.total_factor == res.total_factor
    assert back.lambda_star_bounds == res.lambda_star_bounds


def test_atomic_write_keeps_old_file_on_failure(tmp_path, monkeypatch):
    p = tmp_path / "r.json"
    io.write_json(p, {"a": 1})

    def boom(*args, **kwargs):
        raise OSError("disk full")

    monkeypatch.setattr(io.os, "replace", boom)
    with pytest.raises(OSError):
        io.write_json(p, {"a": 2})
    assert json.loads(p.read_text()) == {"a": 1}
    assert [f.name for f in tmp_path.iterdir()] == ["r.json"]


def test_cli_gen(tmp_path, capsys):
    a = tmp_path / "a.json"
    assert main(["gen", "adversarial", "--m", "3", "--epsilon", "0.003", "-o", str(a)]) == 0
    g = io.load_instance(a)
    assert g.instance.n == 1 and g.instance.m == 3
    lb = tmp_path / "lb.json"
    assert main(["gen", "lowerbound", "--n", "2", "--m", "4", "-o", str(lb)]) == 0
    g = io.load_instance(lb)
    assert g.instance.n == 4 and g.instance.m == 8
    with pytest.raises(SystemExit) as info:
        main(["gen", "nosuchfamily", "-o", str(a)])
    assert info.value.code == 2
    assert main(["gen", "product", "--part", "simplex:3:2", "--part", "decoy:2:4:2",
                 "-o", str(tmp_path / "p.json")]) == 0
    assert main(["gen", "product", "--part", "bogus:1", "-o", str(tmp_path / "q.json")]) == 2
    assert main(["gen", "adversarial", "--m", "2", "-o", str(tmp_path / "x.json")]) == 2


def test_cli_solve_and_audit(tmp_path, capsys):
    inst, rep, tr = tmp_path / "s.json", tmp_path / "r.json", tmp_path / "t.csv"
    main(["gen", "simplex", "--m", "8", "-o", str(inst)])
    assert main(["solve", str(inst), "--delta", "0.1", "--report", str(rep), "--trace", str(tr)]) == 0
    data = json.loads(rep.read_text())
    assert max(data["primal"]["aggregate"]) <= 1.1
    with open(tr) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(io.TRACE_COLUMNS)
    assert len(rows) - 1 == data["core_params"]["phases"]
    assert main(["audit", str(inst), "--report", str(rep)]) == 0
    # tamper with the reported maximum
    data["primal"]["aggregate"][0] += 0.5
    rep.write_text(json.dumps(data))
    assert main(["audit", str(inst), "--report", str(rep)]) == 1
    assert main(["solve", str(inst), "--delta", "0", "--report", str(rep)]) == 2
    assert main(["solve", str(tmp_path / "missing.json"), "--delta", "0.1", "--report", str(rep)]) == 2


def test_cli_core(tmp_path, capsys):
    inst, rep = tmp_path / "lb.json", tmp_path / "r.json"
    main(["gen", "lowerbound", "--n", "2", "--m", "4", "-o", str(inst)])
    assert main(["core", str(inst), "--epsilon", "0.1", "--phases", "20", "--report", str(rep)]) == 0
    data = json.loads(rep.read_text())
    assert data["stats"]["customer_restricted"][1] == 4 * 20
    assert main(["core", str(inst), "--epsilon", "0.1", "--phases", "0", "--report", str(rep)]) == 2
    assert main(["audit", str(inst), "--report", str(rep)]) == 0
    assert main(["audit", str(inst), "--rerun", "core", "--epsilon", "0.1", "--phases", "10"]) == 0
    assert main(["audit", str(inst), "--rerun", "core"]) == 2


def test_cli_approx(tmp_path, capsys):
    inst, rep = tmp_path / "d.json", tmp_path / "r.json"
    main(["gen", "decoy", "--n", "1", "--m", "64", "--lam", "64", "-o", str(inst)])
    assert main(["approx", str(inst), "--report", str(rep)]) == 0
    data = json.loads(rep.read_text())
    assert data["stats"]["restarts"] <= 6
    assert max(data["primal"]["aggregate"]) <= 1024
    assert main(["audit", str(inst), "--report", str(rep)]) == 0
    empty = tmp_path / "e.json"
    main(["gen", "cutflow", "--empty", "-o", str(empty)])
    assert main(["approx", str(empty), "--report", str(rep)]) == 0
    assert json.loads(rep.read_text())["degenerate"] is True


def test_cli_audit_adversarial_rows(tmp_path, capsys):
    inst, rep = tmp_path / "a.json", tmp_path / "r.json"
    main(["gen", "adversarial", "--m", "3", "--epsilon", "0.003", "-o", str(inst)])
    assert main(["core", str(inst), "--epsilon", "0.003", "--phases", "122069", "--report", str(rep)]) == 0
    data = json.loads(rep.read_text())
    assert min(data["primal"]["aggregate"]) >= 0.75
    capsys.readouterr()
    assert main(["audit", str(inst), "--report", str(rep)]) == 0
    out = capsys.readouterr().out
    assert "[pass] third-entry analog fails" in out
    assert "[pass] third entry stays large" in out


def test_cli_contract_violation_exit(tmp_path, capsys):
    p = tmp_path / "neg.json"
    p.write_text(json.dumps({"version": 1, "resources": 2,
                             "blocks": [{"type": "vertices", "vertices": [[1.0, -1.0]]}]}))
    assert main(["solve", str(p), "--delta", "0.5", "--report", str(tmp_path / "r.json")]) == 2
    # sink 2 is unreachable: the oracle cannot answer
    p.write_text(json.dumps({"version": 1, "resources": 1,
                             "blocks": [{"type": "paths", "nodes": 3, "arcs": [[0, 1, 0]],
                                         "source": 0, "sink": 2, "demand": 1.0}]}))
    assert main(["solve", str(p), "--delta", "0.5", "--report", str(tmp_path / "r.json")]) == 3


def test_cli_audit_without_metadata_notes(tmp_path, capsys):
    inst = tmp_path / "r.json"
    main(["gen", "random", "--n", "2", "--m", "3", "-o", str(inst)])
    assert main(["audit", str(inst), "--rerun", "solve", "--delta", "0.5"]) == 0
    assert "declares no optimum" in capsys.readouterr().err
