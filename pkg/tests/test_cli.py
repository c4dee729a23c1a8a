import io
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import flow_series
from trendflow.cli import main
from trendflow.field import loads
from trendflow.presets import readers_edits_normalized

COMMANDS = ["fit", "evaluate", "compare", "portrait", "trending", "predict"]


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


@pytest.fixture(scope="module")
def series(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    frame = flow_series(readers_edits_normalized(), (0.3, 0.8), 60, 0.1)
    lines = ["month,Readers,Edits"]
    for k, (a, b) in enumerate(frame.values):
        lines.append(f"{k},{a * 1000:.12g},{b * 50:.12g}")
    path = d / "series.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture(scope="module")
def fitted(series, tmp_path_factory):
    out = tmp_path_factory.mktemp("model") / "model.json"
    code, text = run("fit", "--input", str(series), "--dt", "0.1", "--degree", "auto", "--degrees", "1..5",
                     "--out", str(out))
    assert code == 0, text
    return out, text


def test_fit_auto_prints_table_and_writes_model(fitted):
    path, text = fitted
    lines = text.splitlines()
    assert lines[0].split("|")[0].strip() == "degree"
    assert [ln.split("|")[0].strip() for ln in lines[2:7]] == ["1", "2", "3", "4", "5"]
    assert lines[-1].startswith("selected degree")
    m = loads(path.read_text())
    assert m.variable_names == ("Readers", "Edits")
    prov = m.provenance
    assert prov["command"] == "fit" and prov["config"]["degree"] == "auto" and prov["config"]["dt"] == "0.1"
    assert prov["series"]["rows"] == 60
    assert m.scaling.mode == "max"


def test_evaluate_prints_paper_style_table(series, tmp_path):
    code, text = run("evaluate", "--input", str(series), "--dt", "0.1", "--model", "ds", "--degree", "4",
                     "--baseline", "var", "--lag", "2", "--test-len", "24", "--report-dir", str(tmp_path / "r"),
                     "--table", str(tmp_path / "t.csv"))
    assert code == 0, text
    header = [c.strip() for c in text.splitlines()[0].split("|")]
    assert header == ["Model", "Readers' predict. error", "Edits' predict. error", "Total error"]
    assert "DS(4)" in text and "VAR(2)" in text
    assert sorted(p.name for p in (tmp_path / "r").iterdir()) == ["ds4.json", "var2.json"]
    assert (tmp_path / "t.csv").read_text().startswith("model,Readers,Edits,total,best")

    code, text2 = run("compare", "--reports", str(tmp_path / "r" / "ds4.json"), str(tmp_path / "r" / "var2.json"))
    assert code == 0 and text2 == text


def test_portrait_writes_both_files(fitted, tmp_path):
    model, _ = fitted
    p, s = tmp_path / "portrait.json", tmp_path / "portrait.svg"
    code, text = run("portrait", "--model", str(model), "--box", "0,1,0,1", "--grid", "20", "--out", str(p),
                     "--svg", str(s))
    assert code == 0, text
    doc = json.loads(p.read_text())
    assert len(doc["field_samples"]) == 400 and doc["model_ref"] == "model.json"
    assert doc["provenance"]["config"]["grid"] == "20"
    assert s.read_text().startswith("<svg")


def test_trending_and_predict(fitted, series, tmp_path):
    model, _ = fitted
    code, text = run("trending", "--model", str(model), "--box", "0,1,0,1", "--grid", "6", "--out",
                     str(tmp_path / "tr.json"))
    assert code == 0 and text.startswith("converged: ")
    assert json.loads((tmp_path / "tr.json").read_text())["kind"] == "trending_report"

    code, text = run("predict", "--model", str(model), "--input", str(series), "--steps", "2")
    assert code == 0, text
    rows = [ln.split(",") for ln in text.splitlines()]
    assert rows[0] == ["step", "time", "Readers_scaled", "Edits_scaled", "Readers_raw", "Edits_raw"]
    assert len(rows) == 4
    m = loads(model.read_text())
    for r in rows[1:]:
        scaled, raw = np.array(r[2:4], dtype=float), np.array(r[4:6], dtype=float)
        np.testing.assert_allclose(raw, scaled * np.array(m.scaling.factors), rtol=1e-15)
    last = np.loadtxt(series, delimiter=",", skiprows=1)[-1, 1:]
    np.testing.assert_allclose(np.array(rows[1][4:6], dtype=float), last, rtol=1e-12)
    assert float(rows[2][1]) == pytest.approx(0.1)


def test_repeated_runs_are_byte_identical(fitted, series, tmp_path):
    model, _ = fitted
    outputs = []
    d = tmp_path / "run"
    for _ in range(2):
        assert run("fit", "--input", str(series), "--dt", "0.1", "--degree", "3", "--out", str(d / "m.json"))[0] == 0
        assert run("portrait", "--model", str(model), "--box", "0,1,0,1", "--grid", "8", "--out",
                   str(d / "p.json"), "--svg", str(d / "p.svg"))[0] == 0
        assert run("evaluate", "--input", str(series), "--dt", "0.1", "--degree", "2", "--lag", "1",
                   "--report-dir", str(d))[0] == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert outputs[0] == outputs[1]
    assert len(outputs[0]) == 5


@pytest.mark.parametrize("command", COMMANDS)
def test_help_exits_zero_without_side_effects(command, tmp_path, capsys):
    before = set(os.listdir(tmp_path))
    cwd = os.getcwd()
    os.chdir(tmp_path)
    try:
        code, _ = run(command, "--help")
    finally:
        os.chdir(cwd)
    assert code == 0
    assert "usage:" in capsys.readouterr().out
    assert set(os.listdir(tmp_path)) == before


@pytest.mark.parametrize(
    "argv, code, fragment",
    [
        (["fit", "--bogus"], 1, "unrecognized arguments"),
        (["fit", "--input", "/no/such.csv"], 1, "file not found"),
        (["frobnicate"], 1, "invalid choice"),
        (["fit", "--input", "SERIES", "--degree", "zero"], 1, "--degree"),
        (["portrait", "--model", "SERIES"], 2, "not valid JSON"),
    ],
)
def test_errors_give_one_line(argv, code, fragment, series, capsys):
    argv = [str(series) if a == "SERIES" else a for a in argv]
    assert run(*argv)[0] == code
    err = capsys.readouterr().err
    assert err.count("\n") == 1 and fragment in err


def test_computation_errors_exit_two(series, tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n3,\n4,5\n")
    assert run("fit", "--input", str(bad), "--degree", "1")[0] == 2
    assert "missing value at row 1, column b" in capsys.readouterr().err
    wrong = tmp_path / "report.json"
    wrong.write_text(json.dumps({"kind": "poly_vector_field"}))
    assert run("compare", "--reports", str(wrong))[0] == 2


def test_config_precedence(series, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"fit": {"degree": 2, "dt": 0.1, "basis": "full"}}))
    out = tmp_path / "m.json"
    assert run("fit", "--config", str(cfg), "--input", str(series), "--out", str(out))[0] == 0
    m = loads(out.read_text())
    assert m.degree == 2 and m.provenance["config"]["dt"] == 0.1
    assert run("fit", "--config", str(cfg), "--input", str(series), "--degree", "3", "--out", str(out))[0] == 0
    m = loads(out.read_text())
    assert m.degree == 3 and m.provenance["config"]["degree"] == "3"
    cfg.write_text(json.dumps({"degre": 2}))
    assert run("fit", "--config", str(cfg), "--input", str(series))[0] == 1


def test_entry_point_and_log_env(series, tmp_path):
    env = dict(os.environ, TRENDFLOW_LOG="info")
    out = tmp_path / "m.json"
    proc = subprocess.run(
        [sys.executable, "-m", "trendflow.cli", "fit", "--input", str(series), "--dt", "0.1", "--degree", "2",
         "--out", str(out)],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode == 0, proc.stderr
    assert "wrote" in proc.stderr and out.exists()
    env["TRENDFLOW_LOG"] = "loud"
    proc = subprocess.run([sys.executable, "-m", "trendflow.cli", "fit", "--help"], capture_output=True, text=True,
                          env=env)
    assert proc.returncode == 1 and "TRENDFLOW_LOG" in proc.stderr


def test_warnings_shown_by_default_and_silenced_by_quiet(tmp_path):
    # a duplicated column makes every design rank-deficient, triggering the ridge fallback warning
    csv = tmp_path / "dup.csv"
    csv.write_text("a,b\n" + "".join(f"{v:.6g},{v:.6g}\n" for v in np.linspace(0.2, 1.0, 30)))
    cmd = [sys.executable, "-m", "trendflow.cli", "fit", "--input", str(csv), "--degree", "2",
           "--out", str(tmp_path / "m.json")]
    env = {k: v for k, v in os.environ.items() if k != "TRENDFLOW_LOG"}
    default = subprocess.run(cmd, capture_output=True, text=True, env=env)
    quiet = subprocess.run(cmd, capture_output=True, text=True, env=dict(env, TRENDFLOW_LOG="quiet"))
    assert default.returncode == quiet.returncode == 0
    assert "rank-deficient" in default.stderr
    assert quiet.stderr == ""
