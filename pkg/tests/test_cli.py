import json
import os
import subprocess
import sys

import pytest

from lefgpd import cli

CAT = {"dim": 2, "map": {"type": "affine", "matrix": [[2, 1], [1, 1]], "shift": [0.0, 0.0]}}
NO_FIXED = {"dim": 1, "map": {"type": "circle_fourier", "degree": 1, "c0": 0.25, "sin": [[1, 0.1]]}}
HEADER = b"t,tau,str_t_geometric,str_spectral,fixed_point_side,abs_error\n"


def write(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data, indent=2) if isinstance(data, dict) else data)
    return str(path)


def run(*args, env=None):
    full = dict(os.environ)
    full.update(env or {})
    return subprocess.run([sys.executable, "-m", "lefgpd", *args], capture_output=True, env=full)


# -- verify -----------------------------------------------------------------

def test_verify_cat_map(tmp_path):
    out = tmp_path / "report.json"
    proc = run("verify", "--config", write(tmp_path, CAT), "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    report = json.loads(out.read_text())
    assert report["passed"]
    limits = report["limits"]
    for key in ("fixed_point_side", "cohomological", "spectral"):
        assert limits[key] == -1
    assert abs(limits["geometric_extrapolated"] + 1) < 1e-4


def test_verify_non_simple(tmp_path):
    data = {"dim": 1, "map": {"type": "affine", "matrix": [[1]], "shift": [0]}}
    proc = run("verify", "--config", write(tmp_path, data), "--out", str(tmp_path / "r.json"))
    assert proc.returncode == 1
    assert b"NonSimpleFixedPoint" in proc.stderr


def test_verify_schema_violation_reports_field_and_line(tmp_path):
    text = '{\n  "dim": 2,\n  "map": {"type": "affine", "matrix": [[2, 1], [1, 1]]},\n  "t_ladder": {"rungs": 2}\n}\n'
    with pytest.raises(cli.ConfigError) as info:
        cli.load_config(write(tmp_path, text))
    assert info.value.field == "t_ladder.rungs"
    assert info.value.line == 4
    proc = run("verify", "--config", write(tmp_path, text))
    assert proc.returncode == 1
    assert b"t_ladder.rungs" in proc.stderr and b"line 4" in proc.stderr


@pytest.mark.parametrize("text, field", [
    ('{"dim": 1, "map": {"type": "affine", "matrix": [[2]]}, "colour": 1}', "colour"),
    ('{"dim": 1, "map": {"type": "affine", "matrix": [[2]], "bogus": 0}}', "map.bogus"),
    ('{"dim": 1, "map": {"type": "circle_fourier"}}', "map"),
    ('{"dim": 1, "map": {"type": "spiral", "matrix": [[2]]}}', "map.type"),
    ('{"dim": 1, "map": {"type": "affine", "matrix": [[2]]}, "deterministic": false}', "deterministic"),
    ('{"dim": 1}', "<root>"),
])
def test_schema_rejects_unknown_and_missing(tmp_path, text, field):
    with pytest.raises(cli.ConfigError) as info:
        cli.load_config(write(tmp_path, text))
    assert info.value.field == field


def test_config_errors_exit_1(tmp_path):
    assert cli.main(["verify", "--config", str(tmp_path / "missing.json")]) == 1
    assert cli.main(["verify", "--config", write(tmp_path, "{not json")]) == 1
    bad_dim = {"dim": 2, "map": {"type": "affine", "matrix": [[2]]}}
    assert cli.main(["verify", "--config", write(tmp_path, bad_dim)]) == 1
    circle_2d = {"dim": 2, "map": {"type": "circle_fourier", "degree": 2}}
    assert cli.main(["verify", "--config", write(tmp_path, circle_2d)]) == 1
    big_t = dict(CAT, t_ladder={"t_max": 0.9})
    assert cli.main(["verify", "--config", write(tmp_path, big_t)]) == 1
    assert run("verify").returncode == 1
    assert run("nonsense").returncode == 1


def test_verify_failed_verdict_exit_2(tmp_path, monkeypatch, capsys):
    import lefgpd.lefschetz as lf
    monkeypatch.setattr(lf, "spectral_supertrace", lambda map, ht: -0.5)
    out = tmp_path / "r.json"
    assert cli.main(["verify", "--config", write(tmp_path, CAT), "--out", str(out)]) == 2
    report = json.loads(out.read_text())
    assert report["passed"] is False
    assert report["verdict"]["spectral_vs_fixed_point"] is False
    assert len(report["rows"]) == 4


def test_verify_csv_output(tmp_path):
    out = tmp_path / "r.csv"
    data = dict(CAT, output={"format": "csv", "path": str(out)})
    assert cli.main(["verify", "--config", write(tmp_path, data)]) == 0
    assert out.read_bytes().startswith(HEADER)


def test_verify_stdout(tmp_path, capsys):
    assert cli.main(["verify", "--config", write(tmp_path, CAT)]) == 0
    assert json.loads(capsys.readouterr().out)["passed"]


# -- sweep ------------------------------------------------------------------

def test_sweep_cat_six_rungs(tmp_path):
    out = tmp_path / "s.csv"
    code = cli.main(["sweep", "--config", write(tmp_path, CAT), "--t-max", "0.2", "--ratio", "0.5",
                     "--rungs", "6", "--out", str(out)])
    assert code == 0
    raw = out.read_bytes()
    assert raw.startswith(HEADER)
    assert b"\r" not in raw and raw.endswith(b"\n")
    lines = raw.decode().splitlines()
    assert len(lines) == 7
    rows = [dict(zip(lines[0].split(","), map(float, line.split(",")))) for line in lines[1:]]
    assert all(r["abs_error"] < 1e-4 for r in rows)
    assert [r["t"] for r in rows] == sorted((r["t"] for r in rows), reverse=True)


def test_sweep_no_fixed_points(tmp_path, capsys):
    code = cli.main(["sweep", "--config", write(tmp_path, NO_FIXED), "--t-max", "0.2", "--ratio", "0.5",
                     "--rungs", "4"])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] + "\n" == HEADER.decode()
    col = lines[0].split(",").index("fixed_point_side")
    assert all(float(line.split(",")[col]) == 0.0 for line in lines[1:])


def test_sweep_errors(tmp_path, monkeypatch):
    args = ["--t-max", "0.2", "--ratio", "0.5"]
    assert cli.main(["sweep", "--config", write(tmp_path, CAT), *args, "--rungs", "2"]) == 1
    singular = {"dim": 1, "map": {"type": "affine", "matrix": [[1]]}}
    assert cli.main(["sweep", "--config", write(tmp_path, singular), *args, "--rungs", "4"]) == 1
    import lefgpd.lefschetz as lf
    monkeypatch.setattr(lf, "spectral_supertrace", lambda map, ht: 0.0)
    assert cli.main(["sweep", "--config", write(tmp_path, CAT), *args, "--rungs", "4",
                     "--out", str(tmp_path / "x.csv")]) == 2


def test_sweep_deterministic_across_threads(tmp_path):
    config = write(tmp_path, CAT)
    outputs = []
    for threads in ["1", "3", "8"]:
        out = tmp_path / f"s{threads}.csv"
        proc = run("sweep", "--config", config, "--t-max", "0.2", "--ratio", "0.5", "--rungs", "5",
                   "--out", str(out), env={"LEFGPD_THREADS": threads})
        assert proc.returncode == 0, proc.stderr
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


# -- model-kernel -----------------------------------------------------------

@pytest.mark.parametrize("order, coeff, tol", [(2, "1", 1e-10), (4, "1", 1e-8)])
def test_model_kernel_total_integral(capsys, order, coeff, tol):
    assert cli.main(["model-kernel", "--order", str(order), "--dim", "1", "--coeff", coeff]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert abs(payload["total_integral"][0][0] - 1.0) < tol
    assert len(payload["samples"]["points"]) == len(payload["samples"]["values"]) == 9


def test_model_kernel_matrix(capsys):
    assert cli.main(["model-kernel", "--order", "2", "--dim", "1", "--coeff", "[[1, 0], [0, 2]]"]) == 0
    total = json.loads(capsys.readouterr().out)["total_integral"]
    assert all(abs(total[i][j] - (i == j)) < 1e-8 for i in range(2) for j in range(2))


def test_model_kernel_non_elliptic():
    proc = run("model-kernel", "--order", "4", "--dim", "2", "--coeff", '{"terms": [{"alpha": [2, 2], "a": 1}]}')
    assert proc.returncode == 1
    assert b"EllipticityFailure" in proc.stderr


@pytest.mark.parametrize("args", [
    ["--order", "3", "--dim", "1", "--coeff", "1"],
    ["--order", "2", "--dim", "1", "--coeff", "not json"],
    ["--order", "2", "--dim", "1", "--coeff", '{"terms": [], "extra": 1}'],
    ["--order", "2", "--dim", "1", "--coeff", '{"terms": [{"alpha": [3], "a": 1}]}'],
])
def test_model_kernel_bad_input(args):
    assert cli.main(["model-kernel", *args]) == 1


def test_model_kernel_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out, threads in [(a, "1"), (b, "4")]:
        proc = run("model-kernel", "--order", "4", "--dim", "1", "--coeff", "1", "--out", str(out),
                   env={"LEFGPD_THREADS": threads})
        assert proc.returncode == 0
    assert a.read_bytes() == b.read_bytes()


# -- serialisation ----------------------------------------------------------

def test_float_format():
    assert cli.format_float(0.1) == "0.10000000000000001"
    assert cli.format_float(-1.0) == "-1"
    assert cli.format_float(float("nan")) == "nan"
    assert cli.dumps({"x": float("inf"), "y": [1, 2.5]}) == '{\n  "x": null,\n  "y": [\n    1,\n    2.5\n  ]\n}'
    assert cli.csv_table([]) == HEADER.decode()
