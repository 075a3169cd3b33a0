import json
import subprocess
import sys

import pytest

from affectfuse.cli import main

WORKED_LINES = [
    {"ts": 100, "student": "A", "cue": "facial", "label": "frustrated"},
    {"ts": 200, "student": "A", "cue": "eye", "label": "looking_at_screen"},
    {"ts": 300, "student": "A", "cue": "speech", "label": "confused"},
    {"ts": 400, "student": "A", "cue": "posture", "label": "slouching"},
]


def write_lines(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path


def read_jsonl(path):
    return [json.loads(l) for l in path.read_text().splitlines() if l]


def test_fuse_worked_example(tmp_path, capsys):
    src = write_lines(tmp_path / "in.jsonl", WORKED_LINES)
    out = tmp_path / "out"
    assert main(["fuse", str(src), "--out", str(out), "--format", "jsonl"]) == 0
    (rec,) = read_jsonl(out / "timeline.jsonl")
    assert rec["emotion"] == "frustrated" and rec["scores"]["frustrated"] == 2.51
    (roll,) = read_jsonl(out / "rollup.jsonl")
    assert roll["counts"]["frustrated"] == 1 and roll["engagement_fraction"] == 0
    assert "frustrated" in (out / "summary.txt").read_text()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "fuse" and set(manifest["config_digests"]) == {"mapping", "fusion_config"}
    assert json.loads(capsys.readouterr().out.splitlines()[0]) == rec


def test_fuse_empty_input(tmp_path):
    src = tmp_path / "in.jsonl"
    src.write_text("")
    out = tmp_path / "out"
    assert main(["fuse", str(src), "--out", str(out)]) == 0
    assert (out / "timeline.jsonl").read_text() == ""
    assert (out / "rollup.jsonl").read_text() == ""


def test_fuse_unknown_cue(tmp_path, capsys):
    src = write_lines(tmp_path / "in.jsonl", [{"ts": 0, "student": "A", "cue": "gaze", "label": "x"}])
    assert main(["fuse", str(src), "--out", str(tmp_path / "o")]) == 2
    assert "line 1" in capsys.readouterr().err


@pytest.mark.parametrize("line", ["{not json", '{"ts": 0, "student": "A", "cue": "facial"}',
                                  '{"ts": "0", "student": "A", "cue": "facial", "label": "bored"}'])
def test_fuse_malformed_lines(tmp_path, capsys, line):
    src = tmp_path / "in.jsonl"
    src.write_text(json.dumps(WORKED_LINES[0]) + "\n" + line + "\n")
    assert main(["fuse", str(src), "--out", str(tmp_path / "o")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_fuse_unsorted_input(tmp_path, capsys):
    src = write_lines(tmp_path / "in.jsonl", WORKED_LINES[::-1])
    assert main(["fuse", str(src), "--out", str(tmp_path / "o")]) == 2


def test_fuse_window_flags(tmp_path):
    records = [dict(WORKED_LINES[0], ts=t) for t in (0, 1500, 2500)]
    src = write_lines(tmp_path / "in.jsonl", records)
    out = tmp_path / "o"
    assert main(["fuse", str(src), "--out", str(out), "--window-ms", "2000", "--stride-ms", "1000"]) == 0
    assert [r["window_start"] for r in read_jsonl(out / "timeline.jsonl")] == [0, 1000, 2000]
    assert main(["fuse", str(src), "--out", str(out), "--window-ms", "1000", "--stride-ms", "2000"]) == 1


def test_fuse_config_override(tmp_path):
    cfg = tmp_path / "fusion.json"
    cfg.write_text(json.dumps({"cue_weights": {"facial": 5.0}}))
    src = write_lines(tmp_path / "in.jsonl", [dict(WORKED_LINES[0], label="bored")] + WORKED_LINES[1:])
    out = tmp_path / "o"
    assert main(["fuse", str(src), "--out", str(out), "--fusion-config", str(cfg)]) == 0
    assert read_jsonl(out / "timeline.jsonl")[0]["emotion"] == "bored"


def simulate(tmp_path, name, *extra):
    out = tmp_path / name
    assert main(["simulate", "--out", str(out), *extra]) == 0
    return out


def test_simulate_deterministic(tmp_path):
    a = simulate(tmp_path, "a", "--seed", "7", "--students", "5", "--ticks", "20")
    b = simulate(tmp_path, "b", "--seed", "7", "--students", "5", "--ticks", "20")
    for name in ("observations.jsonl", "ground_truth.jsonl", "params.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ma, mb = (json.loads((d / "manifest.json").read_text()) for d in (a, b))
    for m in (ma, mb):
        del m["created_at"], m["out_dir"]
    assert ma == mb and ma["seed"] == 7


def test_simulate_one_by_one(tmp_path):
    out = simulate(tmp_path, "s", "--students", "1", "--ticks", "1")
    assert len(read_jsonl(out / "observations.jsonl")) <= 4
    assert len(read_jsonl(out / "ground_truth.jsonl")) == 1


def test_simulate_bad_transition_row(tmp_path, capsys):
    params = tmp_path / "p.json"
    rows = [[0.2] * 5] * 3 + [[0.3] * 5] + [[0.2] * 5]
    params.write_text(json.dumps({"transition": rows}))
    assert main(["simulate", "--params", str(params), "--out", str(tmp_path / "o")]) == 1
    assert "row 3" in capsys.readouterr().err


def test_simulate_flags_override_params(tmp_path):
    params = tmp_path / "p.json"
    params.write_text(json.dumps({"students": 9, "ticks": 2, "seed": 1}))
    out = tmp_path / "o"
    assert main(["simulate", "--params", str(params), "--students", "2", "--out", str(out)]) == 0
    stored = json.loads((out / "params.json").read_text())
    assert (stored["students"], stored["ticks"], stored["seed"]) == (2, 2, 1)


PERFECT = {"emission": {c: 1.0 for c in ("facial", "speech", "eye", "posture")},
           "dropout": {c: 0.0 for c in ("facial", "speech", "eye", "posture")}}


def evaluate_params(tmp_path, params):
    path = tmp_path / "p.json"
    path.write_text(json.dumps(params))
    session = tmp_path / "s"
    assert main(["simulate", "--params", str(path), "--out", str(session)]) == 0
    assert main(["evaluate", str(session)]) == 0
    return json.loads((session / "evaluation" / "evaluation.json").read_text())


def test_evaluate_perfect_session(tmp_path):
    report = evaluate_params(tmp_path, dict(PERFECT, students=4, ticks=30))
    assert report["fused"]["accuracy"] == 1.0
    assert report["cues"]["facial"]["accuracy"] == report["cues"]["speech"]["accuracy"] == 1.0


def test_evaluate_perfect_session_every_cue(tmp_path):
    # truth absorbed in 'bored': every cue has a label that singles it out after tie-break
    bored = [1, 0, 0, 0, 0]
    stay = [[float(i == j) for j in range(5)] for i in range(5)]
    report = evaluate_params(tmp_path, dict(PERFECT, students=3, ticks=20, initial=bored, transition=stay))
    assert report["fused"]["accuracy"] == 1.0
    assert {c: v["accuracy"] for c, v in report["cues"].items()} == {
        "facial": 1.0, "speech": 1.0, "eye": 1.0, "posture": 1.0}


def test_evaluate_default_session_has_five_matrices(tmp_path, capsys):
    session = simulate(tmp_path, "s", "--students", "5", "--ticks", "40")
    out = tmp_path / "eval"
    assert main(["evaluate", str(session), "--out", str(out)]) == 0
    report = json.loads((out / "evaluation.json").read_text())
    matrices = [k for k, v in report["cues"].items() if "matrix" in v] + ["fused"] * ("matrix" in report["fused"])
    assert sorted(matrices) == ["eye", "facial", "fused", "posture", "speech"]
    assert capsys.readouterr().out.count("pred\\actual") == 5


def test_evaluate_mismatched_ids(tmp_path, capsys):
    session = simulate(tmp_path, "s", "--students", "2", "--ticks", "5")
    gt = session / "ground_truth.jsonl"
    kept = [r for r in read_jsonl(gt) if r["student"] != "s001"]
    write_lines(gt, kept)
    assert main(["evaluate", str(session)]) == 1
    assert "s001" in capsys.readouterr().err


def test_evaluate_missing_ground_truth(tmp_path):
    session = simulate(tmp_path, "s", "--students", "2", "--ticks", "5")
    (session / "ground_truth.jsonl").unlink()
    assert main(["evaluate", str(session)]) == 1


def test_validate_config_defaults(tmp_path, capsys):
    assert main(["validate-config"]) == 0
    assert "0 finding(s)" in capsys.readouterr().out


def test_validate_config_missing_entry(tmp_path, capsys):
    from affectfuse import default_mapping
    obj = default_mapping().to_json_obj()
    del obj["posture"]["writing"]
    path = tmp_path / "m.json"
    path.write_text(json.dumps(obj))
    assert main(["validate-config", "--mapping", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "posture.writing" in capsys.readouterr().out
    assert (tmp_path / "o" / "manifest.json").is_file()


def test_validate_config_negative_weight(tmp_path, capsys):
    path = tmp_path / "f.json"
    path.write_text(json.dumps({"cue_weights": {"speech": -0.1}}))
    assert main(["validate-config", "--fusion-config", str(path)]) == 1
    assert "speech" in capsys.readouterr().out


def test_validate_config_unparseable(tmp_path):
    path = tmp_path / "f.json"
    path.write_text("{")
    assert main(["validate-config", "--fusion-config", str(path)]) == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "affectfuse", "validate-config"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
