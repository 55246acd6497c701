"""Command-line front end: validation, exit codes, determinism."""
import filecmp
import json

import pytest

from finitegap import cli


def _write_config(tmp_path, **over):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(over))
    return str(path)


def test_default_config_is_valid():
    cfg = cli.RunConfig.from_dict({})
    assert cfg.genus == 1 and cfg.m == 1
    assert cfg.xs.size == 101 and cfg.ts.size == 21


@pytest.mark.parametrize("data,field", [
    ({"branch_points": [1, 2, 3]}, "branch_points"),
    ({"branch_points": [1, 2, 3, 3], "divisor": {"mu": [0.5, 1.5], "sheets": [1, 1]}}, "branch_points"),
    ({"m": 5}, "m"),
    ({"divisor": {"mu": [0.1], "sheets": [1]}}, "divisor.mu"),
    ({"divisor": {"mu": [0.1j, 0.2j], "sheets": [1, 2]}}, "divisor.sheets"),
    ({"u0": 0}, "u0"),
    ({"w0": "abc"}, "w0"),
    ({"grid": {"x": [0, 1]}}, "grid.x"),
    ({"tolerances": {"residual": -1}}, "tolerances.residual"),
    ({"genus": 2}, "genus"),
    ({"colour": 1}, "colour"),
])
def test_validation_names_field(data, field):
    with pytest.raises(cli.ConfigError, match=field.replace(".", r"\.")):
        cli.RunConfig.from_dict(data)


def test_complex_parsing():
    cfg = cli.RunConfig.from_dict({"w0": "0.1+0.2j", "u0": [2, -1]})
    assert cfg.w0 == 0.1 + 0.2j and cfg.u0 == 2 - 1j


def test_tolerance_scale():
    cfg = cli.RunConfig.from_dict({}, tolerance_scale=10)
    assert cfg.tolerances["residual"] == pytest.approx(1e-3)
    assert cfg.tolerances["ode"] == pytest.approx(1e-13)


def test_config_error_exit_code(tmp_path, capsys):
    code = cli.main(["curve", "--config", _write_config(tmp_path, branch_points=[1, 2, 3]),
                     "--out", str(tmp_path / "out")])
    assert code == cli.EXIT_CONFIG
    assert "branch_points" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert cli.main(["curve", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_derive_report(tmp_path, capsys):
    out = tmp_path / "d"
    code = cli.main(["derive", "--out", str(out)])
    assert code == cli.EXIT_OK
    text = (out / "hierarchy.txt").read_text()
    assert "flow t_1" in text and "flow t_2" in text and "H_1 =" in text
    assert "FAIL" not in text
    assert "pass  t1 flow" in text and "pass  t2 flow" in text


def test_stage_error_exit_code(tmp_path):
    # mu on a cut: the Abel map refuses it inside the flow stage
    cfg = _write_config(tmp_path, divisor={"mu": [-0.75, [0.7, 0.15]], "sheets": [1, 1]})
    code = cli.main(["flow", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_STAGE


def test_failed_check_exit_code(tmp_path, capsys):
    code = cli.main(["flow", "--out", str(tmp_path / "o"), "--tolerance-scale", "1e-12"])
    assert code == cli.EXIT_CHECK
    assert "failed check" in capsys.readouterr().err


def test_pipeline_and_cache_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["pipeline", "--out", str(a), "--cache", "--no-figures"]) == cli.EXIT_OK
    cached = sorted((a / "cache").iterdir())
    assert len(cached) == 1
    # rerun into the same directory reuses the cached periods
    before = {p.name: p.read_bytes() for p in a.iterdir() if p.is_file()}
    assert cli.main(["pipeline", "--out", str(a), "--cache", "--no-figures"]) == cli.EXIT_OK
    after = {p.name: p.read_bytes() for p in a.iterdir() if p.is_file()}
    assert before == after
    # a cold run elsewhere produces the same bytes
    assert cli.main(["pipeline", "--out", str(b), "--cache", "--no-figures"]) == cli.EXIT_OK
    cmp = filecmp.dircmp(a, b)
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    for name in ("periods.txt", "curve.json", "fields.csv", "manifest.json", "trajectory_x.csv",
                 "trajectory_t.csv", "plot_outputs.py", "residual.txt"):
        assert (a / name).exists()
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert manifest["residual"]["max"] < 1e-4


def test_failed_stage_marks_manifest(tmp_path):
    cfg = _write_config(tmp_path, divisor={"mu": [-0.75, [0.7, 0.15]], "sheets": [1, 1]})
    out = tmp_path / "o"
    assert cli.main(["pipeline", "--config", cfg, "--out", str(out), "--no-figures"]) == cli.EXIT_STAGE
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["status"] == "FAILED" and doc["stage"] == "flow"
    # outputs of the finished stages are kept
    assert (out / "periods.txt").exists()


def test_plot_script_is_generic(tmp_path):
    cli.write_plot_script(tmp_path, render=False)
    src = (tmp_path / "plot_outputs.py").read_text()
    assert "fields.csv" in src and "import matplotlib" in src
    compile(src, "plot_outputs.py", "exec")
