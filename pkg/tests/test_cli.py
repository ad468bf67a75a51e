import csv
import json

import pytest

from helpers import box_instance
from tvsdp import __version__
from tvsdp.cli import EXIT_ERROR, EXIT_FAILURE, EXIT_INFEASIBLE, EXIT_OK, exit_code, parse_degrees, run
from tvsdp.model import save_instance


@pytest.fixture
def box_file(tmp_path):
    path = tmp_path / "box.json"
    save_instance(box_instance(2, gamma=1.0), path)
    return path


def _solve(tmp_path, instance, *extra, name="sol.json"):
    out = tmp_path / name
    code = run(["solve", str(instance), "--out", str(out), *extra])
    return code, json.loads(out.read_text()) if out.exists() else None


def test_exit_code_mapping():
    assert exit_code("optimal") == exit_code("inaccurate") == EXIT_OK
    assert exit_code("infeasible") == EXIT_INFEASIBLE
    assert exit_code("unbounded") == exit_code("failed") == EXIT_FAILURE


def test_parse_degrees():
    assert parse_degrees("2..5") == (2, 3, 4, 5)
    assert parse_degrees("3") == (3,)
    for bad in ("5..2", "a..b", "2.5"):
        with pytest.raises(Exception):
            parse_degrees(bad)


def test_solve_box_instance(tmp_path, box_file):
    code, data = _solve(tmp_path, box_file, "--degree", "2")
    assert code == EXIT_OK
    assert data["tvsdp_version"] == __version__
    assert data["result"]["status"] == "optimal"
    # max int x_1 + x_2 over |x_i| <= 1
    assert data["result"]["value"] == pytest.approx(2.0, abs=1e-6)


def test_solve_is_byte_deterministic(tmp_path, box_file):
    run(["solve", str(box_file), "--degree", "3", "--out", str(tmp_path / "a.json")])
    run(["solve", str(box_file), "--degree", "3", "--out", str(tmp_path / "b.json")])
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_example31_exits_infeasible(tmp_path):
    inst = tmp_path / "ex.json"
    assert run(["example", "example31", "--out", str(inst)]) == EXIT_OK
    code, data = _solve(tmp_path, inst, "--degree", "4")
    assert code == EXIT_INFEASIBLE
    assert data["result"]["status"] == "infeasible"


def test_sweep_summary_and_table(tmp_path, box_file, capsys):
    code, data = _solve(tmp_path, box_file, "--mode", "sweep", "--degrees", "1..3")
    assert code == EXIT_OK
    rows = data["summary"]
    assert [r["degree"] for r in rows] == [1, 2, 3]
    for r in rows:
        assert r["primal"] <= r["dual"] + 1e-6
        assert r["gap"] == pytest.approx(abs(r["dual"] - r["primal"]))
    assert len(data["records"]) == 6
    assert "degree" in capsys.readouterr().out


def test_sweep_fixed_dual_level(tmp_path, box_file):
    _, data = _solve(tmp_path, box_file, "--mode", "sweep", "--degrees", "1..2", "--dual-level", "3")
    assert {r["dual_level"] for r in data["summary"]} == {3}
    assert len(data["records"]) == 3


def test_parallel_sweep_matches_serial(tmp_path, box_file):
    _, a = _solve(tmp_path, box_file, "--mode", "sweep", "--degrees", "1..2", name="a.json")
    _, b = _solve(tmp_path, box_file, "--mode", "sweep", "--degrees", "1..2", "--jobs", "2", name="b.json")
    assert a == b


def test_box_flag_bounds_an_unbounded_instance(tmp_path):
    path = tmp_path / "free.json"
    inst = box_instance(1, gamma=1.0)
    save_instance(type(inst)(n=1, c=inst.c, name="free"), path)
    code, _ = _solve(tmp_path, path, "--degree", "2")
    assert code == EXIT_FAILURE
    code, data = _solve(tmp_path, path, "--degree", "2", "--box", "3")
    assert code == EXIT_OK
    assert data["box"] == 3.0
    assert data["result"]["value"] == pytest.approx(3.0, abs=1e-6)
    # verify re-applies the box recorded in the solution
    assert run(["verify", str(path), str(tmp_path / "sol.json")]) == EXIT_OK


def test_verify_pass_and_fail(tmp_path, box_file):
    _solve(tmp_path, box_file, "--degree", "2")
    report = tmp_path / "report.json"
    assert run(["verify", str(box_file), str(tmp_path / "sol.json"), "--out", str(report)]) == EXIT_OK
    assert json.loads(report.read_text())["passed"] is True
    data = json.loads((tmp_path / "sol.json").read_text())
    data["result"]["x"][0] = [1.5]
    data["result"]["certificate"] = None
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    assert run(["verify", str(box_file), str(bad), "--out", str(report)]) == EXIT_ERROR
    assert json.loads(report.read_text())["passed"] is False


def test_verify_rejects_sweep_output(tmp_path, box_file):
    _solve(tmp_path, box_file, "--mode", "sweep", "--degrees", "1..1")
    assert run(["verify", str(box_file), str(tmp_path / "sol.json")]) == EXIT_ERROR


def test_sample_csv(tmp_path, box_file):
    _solve(tmp_path, box_file, "--degree", "2")
    out = tmp_path / "x.csv"
    assert run(["sample", str(tmp_path / "sol.json"), "--points", "5", "--csv", str(out)]) == EXIT_OK
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["t", "x_1", "x_2"]
    assert len(rows) == 6
    assert [float(r[0]) for r in rows[1:]] == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert all(float(v) == pytest.approx(1.0, abs=1e-6) for r in rows[1:] for v in r[1:])


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "missing.json", "--degree", "2"],
        ["solve", "{box}"],
        ["solve", "{box}", "--degree", "-1"],
        ["solve", "{box}", "--degrees=-1..2", "--mode", "sweep"],
        ["solve", "{box}", "--degree", "2", "--box", "0"],
        ["solve", "{box}", "--degree", "x"],
        ["sample", "{box}", "--points", "1"],
        ["bogus"],
        [],
    ],
)
def test_error_paths_exit_1(tmp_path, box_file, argv, capsys):
    argv = [a.replace("{box}", str(box_file)) for a in argv]
    assert run(argv) == EXIT_ERROR


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert run(["solve", str(path), "--degree", "1"]) == EXIT_ERROR


def test_version(capsys):
    assert run(["--version"]) == EXIT_OK
    assert __version__ in capsys.readouterr().out
