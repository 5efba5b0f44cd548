from __future__ import annotations

import json

import pytest

from linkhodge.cli import main


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gen_then_validate(tmp_path, capsys):
    path = tmp_path / "oct.wsc"
    assert main(["gen", "--family", "octahedron", "-o", str(path)]) == 0
    code, out, _ = _run(capsys, "validate", str(path))
    assert code == 0
    body = json.loads(out)
    assert body["valid"] is True
    assert body["f_vector"] == [6, 12, 8]


def test_validate_rejects_broken_file(tmp_path, capsys):
    path = tmp_path / "bad.wsc"
    path.write_text('{"format": "wsc-v1", "include_empty": false, "empty_weight": 1.0}\n{"s": [0, 1], "m": 1}\n')
    code, out, _ = _run(capsys, "validate", str(path))
    assert code == 1
    assert json.loads(out)["valid"] is False


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as info:
        main(["no-such-command"])
    assert info.value.code == 64


def test_classify_link_reports_verdict_and_config(capsys):
    code, out, _ = _run(capsys, "classify-link", "--family", "cone_over_tree", "--levels", "12", "--seed", "5")
    assert code == 0
    body = json.loads(out)
    assert body["config"]["seed"] == 5
    assert body["report"]["verdict"] in ("Transient", "Undetermined")


def test_strict_undetermined_exits_two(capsys):
    code, out, _ = _run(capsys, "classify-link", "--family", "cone_over_lattice", "--param", "d=2",
                        "--levels", "6", "--strict")
    assert json.loads(out)["report"]["verdict"] == "Undetermined"
    assert code == 2


def test_classify_link_csv(tmp_path, capsys):
    csv_path = tmp_path / "seq.csv"
    code, _, _ = _run(capsys, "classify-link", "--family", "star_link", "--levels", "6", "--csv", str(csv_path))
    assert code == 0
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("# config: ")
    assert lines[1] == "component_root,level,R_n,cap_n,Q_u_n"


def test_defect_command(capsys):
    code, out, _ = _run(capsys, "defect", "--family", "cone_over_tree", "--levels", "8")
    assert code == 0
    report = json.loads(out)["report"]
    assert report["predicted_limit"] == pytest.approx(1.0)
    assert report["defect_seq"][-1] == pytest.approx(1.0, rel=1e-6)


def test_property_command_on_finite_complex(capsys):
    code, out, _ = _run(capsys, "property", "--family", "octahedron", "--rho", "0")
    assert code == 0
    assert json.loads(out)["verdict"]["holds"] is True


def test_tprime_csv(capsys):
    code, out, _ = _run(capsys, "tprime", "--family", "cone_over_path", "--levels", "6", "--min-level", "4")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("# config: ")
    assert lines[1].startswith("# relative_growth: ")
    assert lines[2] == "level,norm,constraint_residual,off_constraint_residual"
    assert len(lines) == 6


def test_tprime_singular_exits_one(capsys):
    code, _, err = _run(capsys, "tprime", "--family", "full_simplex", "--sigma", "0,1", "--mode", "all")
    assert code == 1
    assert "singular" in err


def test_hodge_and_spectrum(capsys):
    code, out, _ = _run(capsys, "hodge", "--family", "torus_grid")
    assert code == 0
    assert json.loads(out)["betti"] == {"0": 1, "1": 2, "2": 1}
    code, out, _ = _run(capsys, "spectrum", "--family", "full_simplex", "--param", "k=3", "--tag", "up")
    ev = json.loads(out)["spectrum"]["eigenvalues"]
    assert ev[-1] == pytest.approx(4.0)


def test_links_command(capsys):
    code, out, _ = _run(capsys, "links", "--family", "octahedron", "--rho", "0")
    assert code == 0
    body = json.loads(out)
    assert len(body["link"]["verts"]) == 4
    assert body["local_balancedness"] == 1.0


def test_walk_is_reproducible_across_threads(capsys):
    argv = ["walk", "--lattice", "3", "--walks", "4000", "--radius", "15", "--seed", "3"]
    _, a, _ = _run(capsys, *argv, "--threads", "1")
    _, b, _ = _run(capsys, *argv, "--threads", "4")
    assert a == b


def test_bad_param_is_rejected(capsys):
    code, _, err = _run(capsys, "hodge", "--family", "torus_grid", "--param", "p=2")
    assert code == 1
    assert "torus" in err or "p" in err
