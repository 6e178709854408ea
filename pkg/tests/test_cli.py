import hashlib
import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from dyadic_intent import cli, dataio
from dyadic_intent.cli import main
from dyadic_intent.intent import AgentGoal
from dyadic_intent.simulator import AgentPolicy, NoiseConfig, SceneConfig, simulate, write_session

CONFIG = """
[batch]
seed = 3
duration = 12
cells = KCG:2, NoGoalVsHard:2, ConflictingSS:2
"""


def digest(directory):
    return {p.relative_to(directory).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(Path(directory).rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "sim.ini"
    cfg.write_text(CONFIG)
    out = root / "ds"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    assert main(["analyze", str(out)]) == 0
    return out


def test_simulate_writes_manifest_and_sessions(dataset):
    cp = dataio.read_ini(dataset / "manifest.ini")
    assert cp["dataset"]["cells"] == "KCG:2, NoGoalVsHard:2, ConflictingSS:2"
    names = [s for s in cp.sections() if s != "dataset"]
    assert len(names) == 6
    for n in names:
        for f in ("raw_ft.csv", "raw_imu.csv", "raw_pose.csv", "truth.csv", "session.ini",
                  "processed.csv", "features.csv", "segments.csv", "boundary.json", "report.json"):
            assert (dataset / n / f).exists(), f


def test_simulate_is_byte_identical_across_runs_and_workers(dataset, tmp_path):
    cfg = tmp_path / "sim.ini"
    cfg.write_text(CONFIG)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a"), "--workers", "2"]) == 0
    ref = {k: v for k, v in digest(dataset).items() if k.split("/")[-1].startswith(("raw_", "truth", "session"))}
    ref["manifest.ini"] = digest(dataset)["manifest.ini"]
    assert digest(tmp_path / "a") == ref


def test_analyze_rerun_is_byte_identical_and_leaves_inputs(dataset, tmp_path):
    copy = tmp_path / "ds"
    shutil.copytree(dataset, copy)
    before = digest(copy)
    assert main(["analyze", str(copy)]) == 0
    assert digest(copy) == before


def test_seed_override_changes_output(tmp_path):
    cfg = tmp_path / "sim.ini"
    cfg.write_text("[batch]\ncells = KCG:1\nduration = 8\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "1"]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "2"]) == 0
    a, b = digest(tmp_path / "a"), digest(tmp_path / "b")
    assert a["session_0001/raw_ft.csv"] != b["session_0001/raw_ft.csv"]


def test_hard_goal_session_settles_on_its_goal(tmp_path):
    scene = SceneConfig(noise=NoiseConfig.noiseless())
    pol = (AgentPolicy(goal=AgentGoal.hard(3)), AgentPolicy())
    raw, truth = simulate(scene, pol, 0)
    d = write_session(tmp_path / "s", raw, truth, scene, pol, 0, "s")
    assert main(["analyze", str(d)]) == 0
    rec = json.loads((d / "boundary.json").read_text())
    assert rec["settled_goal"] == 3
    assert rec["t_dec"] is not None


def test_stats(dataset, tmp_path, capsys):
    assert main(["stats", str(dataset), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "negotiation_summary.csv").read_text().splitlines()
    assert lines[0] == ",".join(cli.SUMMARY_COLUMNS)
    assert {l.split(",")[0] for l in lines[1:]} == {"KCG", "NoGoalVsHard", "ConflictingSS"}
    report = (tmp_path / "stats_report.txt").read_text()
    assert "F(2, 3)" in report and "Tukey HSD" in report
    assert "one-way ANOVA" in capsys.readouterr().out


def test_stats_needs_two_types(dataset, tmp_path, capsys):
    cp = dataio.read_ini(dataset / "manifest.ini")
    keep = [s for s in cp.sections() if s != "dataset" and cp[s]["cell"] == "KCG"]
    sub = tmp_path / "one"
    sub.mkdir()
    for s in keep:
        shutil.copytree(dataset / s, sub / s)
    for s in list(cp.sections()):
        if s != "dataset" and s not in keep:
            cp.remove_section(s)
    dataio.write_ini(cp, sub / "manifest.ini")
    assert main(["stats", str(sub)]) == 2
    assert "two interaction types" in capsys.readouterr().err


def test_intent_fit_and_report(dataset, tmp_path, capsys):
    model = tmp_path / "model.txt"
    assert main(["intent", "fit", str(dataset), "--out", str(model), "--agents", "goal"]) == 0
    assert model.read_text().startswith("dyadic-intent-model 1\n")
    out = tmp_path / "report.csv"
    assert main(["intent", "report", str(dataset), "--model", str(model), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(cli.INTENT_REPORT_COLUMNS)
    assert len(lines) > 1
    goals = {int(l.split(",")[5]) for l in lines[1:]}
    assert goals <= {1, 2, 3}
    assert "accuracy" in capsys.readouterr().out
    assert main(["analyze", str(dataset / "session_0001"), "--model", str(model)]) == 0


def test_plot_command(dataset, tmp_path):
    assert main(["plot", str(dataset / "session_0001"), "--out", str(tmp_path)]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["plot_embedding.svg", "plot_power.svg",
                                                          "plot_projected.svg"]
    assert main(["plot", str(dataset / "session_0001"), "--kind", "power", "--out", str(tmp_path / "new")]) == 0
    assert (tmp_path / "new" / "plot_power.svg").exists()


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["plot", "x", "--kind", "pie"])
    assert exc.value.code == 1


def test_config_error_exit_1_names_key(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[policy]\npush_gian = 3\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "push_gian" in capsys.readouterr().err


def test_missing_stream_exit_2(dataset, tmp_path, capsys):
    d = tmp_path / "s"
    shutil.copytree(dataset / "session_0001", d)
    (d / "raw_imu.csv").unlink()
    assert main(["analyze", str(d)]) == 2
    assert "raw_imu.csv" in capsys.readouterr().err
    assert main(["analyze", str(tmp_path / "nowhere")]) == 2
    assert main(["intent", "report", str(d), "--model", str(tmp_path / "none.txt")]) == 2


def test_internal_error_exit_3(monkeypatch, capsys):
    def boom(args):
        raise RuntimeError("unexpected")
    monkeypatch.setattr(cli, "cmd_stats", boom)
    assert main(["stats", "anything"]) == 3
    assert "RuntimeError" in capsys.readouterr().err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "dyadic_intent", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("simulate", "analyze", "stats", "plot", "intent"):
        assert cmd in res.stdout
