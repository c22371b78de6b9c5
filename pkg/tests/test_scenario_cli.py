import json
import textwrap

import pytest

from projmeas import ScenarioError
from projmeas.cli import main
from projmeas.scenario import load_scenario, parse_scenario, resolve_out, run_scenario, shipped_scenarios

GOOD = textwrap.dedent("""\
    name: demo
    seed: 3
    ensemble: {gallery: affine_contracting}
    subspaces:
      e1: {coordinate: [0]}
    tasks:
      - spectrum: {n_steps: 2000}
      - escape: {subspace: e1, schedule: [100, 1000]}
""")


def _error(text):
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text)
    return info.value


def test_parse_good_scenario():
    sc = parse_scenario(GOOD)
    assert sc.name == "demo" and sc.seed == 3 and [t.kind for t in sc.tasks] == ["spectrum", "escape"]
    assert sc.tasks[0].params["n_trials"] == 4
    assert sc.tasks[1].line == 8


def test_weights_not_summing_to_one_reports_line():
    text = "seed: 1\nensemble:\n  atoms: [[[1,0],[0,1]], [[2,0],[0,1]]]\n  weights: [0.5, 0.4]\ntasks: []\n"
    err = _error(text)
    assert err.line == 4 and "0.9" in str(err)


@pytest.mark.parametrize("text,line,needle", [
    ("seed: 1\nensemble: {gallery: diag}\ntasks:\n  - spectrum: {n_step: 5}\n", 4, "n_step"),
    ("seed: 1\nensemble: {gallery: diag}\ntasks:\n  - frobnicate: {}\n", 4, "frobnicate"),
    ("ensemble: {gallery: diag}\n", 1, "seed"),
    ("seed: 1\nseed: 2\nensemble: {gallery: diag}\n", 2, "duplicate"),
    ("seed: 1\nensemble: {gallery: diag}\ntasks:\n  - escape: {subspace: nowhere}\n", 4, "nowhere"),
    ("seed: 1\nensemble: {gallery: diag}\ntasks:\n  - escape: {}\n", 4, "subspace"),
    ("seed: 1\nensemble: {gallery: fkh_example}\nsubspaces:\n  w: {coordinate: [1]}\ntasks:\n  - lift: {subspace: w}\n",
     6, "not invariant"),
    ("seed: 1\nensemble: {gallery: diag}\nbogus: 2\n", 3, "bogus"),
    ("seed: [1\n", None, "YAML"),
])
def test_validation_errors(text, line, needle):
    err = _error(text)
    assert needle in str(err)
    if line is not None:
        assert err.line == line


def test_empty_task_list_runs(tmp_path):
    code, summary = run_scenario_text(tmp_path, "seed: 1\nensemble: {gallery: diag}\ntasks: []\n")
    assert code == 0 and summary["tasks"] == []
    assert (tmp_path / "out" / "summary.json").exists()


def run_scenario_text(tmp_path, text):
    p = tmp_path / "s.yaml"
    p.write_text(text)
    return run_scenario(p, out=tmp_path / "out")


def test_rerun_is_byte_identical(tmp_path):
    p = tmp_path / "demo.yaml"
    p.write_text(GOOD)
    run_scenario(p, out=tmp_path / "a")
    run_scenario(p, out=tmp_path / "b")
    files = sorted(f.name for f in (tmp_path / "a").iterdir())
    assert "01_spectrum.json" in files and "02_escape_profile.csv" in files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert str(tmp_path) not in (tmp_path / "a" / "summary.json").read_text()


def test_errors_become_error_reports(tmp_path):
    text = ("seed: 1\nensemble: {gallery: fkh_example, mode: float}\nsubspaces:\n  e1: {coordinate: [0]}\n"
            "tasks:\n  - recurrence: {a: {subspace: e1, kind: restrict}, b: {subspace: e1, kind: quotient},"
            " n_steps: 100, lyapunov_steps: 1000}\n")
    code, summary = run_scenario_text(tmp_path, text)
    assert code == 1 and summary["tasks"][0]["verdict"] == "ERROR"
    rep = json.loads((tmp_path / "out" / "01_recurrence.json").read_text())
    assert rep["error"].startswith("ExponentMismatch") and rep["line"] == 6


def test_output_directory_precedence(tmp_path, monkeypatch):
    sc = parse_scenario(GOOD + "out: from-file\n")
    monkeypatch.delenv("PROJMEAS_OUT", raising=False)
    assert resolve_out(sc).name == "from-file"
    monkeypatch.setenv("PROJMEAS_OUT", str(tmp_path))
    assert resolve_out(sc) == tmp_path / "demo"
    assert resolve_out(sc, tmp_path / "x") == tmp_path / "x"


def test_shipped_scenarios_parse():
    shipped = shipped_scenarios()
    assert len(shipped) >= 5
    for name in shipped:
        assert load_scenario(name).tasks


def test_cli_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert "unipotent" in out and "torus.lift" in out


def test_cli_single_task_commands(tmp_path, capsys):
    assert main(["spectrum", "diag", "--out", str(tmp_path / "s")]) == 0
    rep = json.loads((tmp_path / "s" / "01_spectrum.json").read_text())
    assert rep["operation"] == "estimate_spectrum" and rep["method"] == "eigen"
    assert main(["lift", "affine_expanding", "--subspace", "0", "--n-steps", "5000",
                 "--out", str(tmp_path / "l")]) == 0
    assert "NOT_EXISTS" in capsys.readouterr().out
    assert main(["escape", "unipotent", "--subspace", "0", "--schedule", "100,1000", "--out", str(tmp_path / "e")]) in (0, 2)


def test_cli_undecided_exit_code(tmp_path):
    # a two-checkpoint unipotent profile at a tiny delta cannot be decided
    code = main(["escape", "unipotent", "--subspace", "0", "--delta", "0.001", "--schedule", "10,20",
                 "--x0", "1,1", "--out", str(tmp_path)])
    summary = json.loads((tmp_path / "summary.json").read_text())
    verdict = summary["tasks"][0]["verdict"]
    assert (code == 2) == (verdict == "UNDECIDED")


def test_cli_reports_errors(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("seed: 1\nensemble:\n  atoms: [[[1,0],[0,1]], [[2,0],[0,1]]]\n  weights: [0.5, 0.4]\n")
    assert main(["run", str(bad)]) == 1
    assert "line 4" in capsys.readouterr().err
    assert main(["run", "no-such-scenario"]) == 1


def test_cli_file_ensemble(tmp_path):
    from projmeas import dump_ensemble
    from projmeas.gallery import build
    p = tmp_path / "e.json"
    dump_ensemble(build("torus"), p)
    assert main(["filtration", str(p), "--n-steps", "2000", "--out", str(tmp_path / "f")]) == 0
    rep = json.loads((tmp_path / "f" / "01_filtration.json").read_text())
    assert rep["critical"] is True and rep["dims"] == [4]
