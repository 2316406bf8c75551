import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import random_sequence, script, smooth_sequence
from vqhack.cli import load_config, main
from vqhack.frameio import read_y4m_file, write_y4m_file


@pytest.fixture
def clip(tmp_path, rng):
    path = tmp_path / "clip.y4m"
    write_y4m_file(path, smooth_sequence(rng, 4, 16, 16))
    return path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_apply_identity_is_byte_identical(tmp_path, clip, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "gamma", "params": {"gamma": 1.0}}))
    out = tmp_path / "out.y4m"
    assert run(["apply", "--spec", spec, clip, out], capsys)[0] == 0
    assert out.read_bytes() == clip.read_bytes()


def test_apply_chain(tmp_path, clip, capsys):
    spec = tmp_path / "chain.json"
    spec.write_text(json.dumps({"stages": [{"kind": "gamma", "params": {"gamma": 0.5}}, {"kind": "hist_eq"}]}))
    out = tmp_path / "out.y4m"
    assert run(["apply", "--spec", spec, clip, out], capsys)[0] == 0
    assert read_y4m_file(out) != read_y4m_file(clip)


def test_score_identical(clip, capsys):
    code, out, _ = run(["score", clip, clip], capsys)
    assert code == 0 and json.loads(out)["pooled"] == 100.0
    code, out, _ = run(["score", "--metric", "ssim", clip, clip], capsys)
    assert json.loads(out)["pooled"] == pytest.approx(1.0)


def test_score_external(clip, capsys):
    code, out, _ = run(["score", clip, clip, "--command", script("json_metric.py", "77.5", "{ref}", "{dist}"),
                        "--json-pointer", "/pooled_metrics/vmaf/mean"], capsys)
    assert code == 0 and json.loads(out)["pooled"] == 77.5


def test_tune_with_rigged_metric(tmp_path, clip, capsys):
    cfg = tmp_path / "tune.json"
    cfg.write_text(json.dumps({
        "input": str(clip), "filter": "gamma", "tuning_frames": 2,
        "metric": {"kind": "external", "command": script("luma_metric.py", "{ref}", "{dist}")},
        "ga": {"mu": 4, "lambda": 8, "generations": 6},
    }))
    report, hist = tmp_path / "r.json", tmp_path / "h.csv"
    code, _, err = run(["tune", cfg, "-o", report, "--seed", 3, "--jobs", 4, "--history", hist], capsys)
    assert code == 0, err
    rep = json.loads(report.read_text())
    assert rep["gain_abs"] > 0
    assert rep["best_params"]["stages"][0]["params"]["gamma"] == pytest.approx(0.2, abs=0.01)
    assert rep["video"] == "clip" and rep["method"] == "gamma"
    assert hist.read_text().startswith("generation,best_fitness\n")


def test_tune_is_reproducible(tmp_path, clip, capsys):
    cfg = tmp_path / "tune.cfg"
    cfg.write_text(f"input = {clip}\nchain = gamma+unsharp\nmetric.kind = ssim\nga.generations = 3\nseed = 11\n")
    outs = []
    for jobs in (1, 4, 1):
        dest = tmp_path / f"r{len(outs)}.json"
        assert run(["tune", cfg, "-o", dest, "--jobs", jobs], capsys)[0] == 0
        outs.append(dest.read_bytes())
    assert outs[0] == outs[1] == outs[2]
    assert json.loads(outs[0])["gain_abs"] <= 1e-6


def test_pipeline(tmp_path, clip, capsys):
    cfg = tmp_path / "pipe.json"
    cfg.write_text(json.dumps({
        "input": str(clip), "filter": ["gamma"], "tuning_frames": 2, "metric": "psnr",
        "ga": {"mu": 2, "lambda": 2, "generations": 1},
        "encoder": {
            "encode": script("passthrough_codec.py", "--bitrate", "{bitrate_kbps}", "{input}", "{output}"),
            "decode": script("passthrough_codec.py", "{input}", "{output}"),
        },
        "bitrates": [4000, 2000], "frames": 3,
    }))
    rd = tmp_path / "rd.csv"
    code, out, err = run(["pipeline", cfg, "--rd", rd], capsys)
    assert code == 0, err
    assert json.loads(out)["method"] == "gamma"
    lines = rd.read_text().splitlines()
    assert lines[0] == "bitrate_kbps,score_plain,score_pre,gain"
    assert [line.split(",")[0] for line in lines[1:]] == ["2000", "4000"]


def test_btrank(tmp_path, capsys):
    votes = tmp_path / "votes.csv"
    votes.write_text("winner,loser,count\nA,B,3\nB,A,1\n")
    code, out, _ = run(["btrank", votes, "--prior", 0], capsys)
    obj = json.loads(out)
    assert code == 0 and obj["scores"]["A"] == pytest.approx(0.75)
    assert [r["label"] for r in obj["ranking"]] == ["A", "B"]


def test_report(tmp_path, capsys):
    paths = []
    for i, (video, method, gain) in enumerate([("v1", "clahe", 10.0), ("v2", "clahe", 30.0), ("v1", "gamma", 5.0)]):
        p = tmp_path / f"{i}.json"
        p.write_text(json.dumps({"video": video, "method": method, "baseline": 50.0, "tuned_score": 50.0 + gain,
                                 "best_params": {"stages": []}}))
        paths.append(p)
    csv_path = tmp_path / "t.csv"
    code, out, _ = run(["report", *paths, "--csv", csv_path], capsys)
    obj = json.loads(out)
    assert code == 0
    assert obj["table"]["column_means"] == {"clahe": 20.0, "gamma": 5.0}
    assert obj["summary"]["clahe"]["median"] == 40.0
    assert obj["summary_all"]["max"] == 60.0
    assert csv_path.read_text().splitlines()[-1] == "Avg.,20.00,5.00"


def test_schemas(capsys):
    code, out, _ = run(["schemas"], capsys)
    obj = json.loads(out)
    assert code == 0 and "clahe" in obj and "convolution" in obj


class TestExitCodes:
    def test_usage(self, capsys):
        assert run([], capsys)[0] == 1
        assert run(["frobnicate"], capsys)[0] == 1
        assert run(["score", "only-one"], capsys)[0] == 1

    def test_usage_missing_input_key(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"filter": "gamma"}')
        code, _, err = run(["tune", cfg], capsys)
        assert code == 1 and "input" in err

    def test_data_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.y4m"
        bad.write_bytes(b"YUV4MPEG2 W4 H2\nFRAME\n" + bytes(5))
        code, _, err = run(["score", bad, bad], capsys)
        assert code == 2 and err.count("\n") == 1 and "truncated" in err

    def test_missing_file(self, tmp_path, capsys):
        assert run(["score", tmp_path / "nope.y4m", tmp_path / "nope.y4m"], capsys)[0] == 2

    def test_bad_spec(self, tmp_path, clip, capsys):
        spec = tmp_path / "s.json"
        spec.write_text('{"kind": "gamma", "params": {"gamma": 9}}')
        assert run(["apply", "--spec", spec, clip, tmp_path / "o.y4m"], capsys)[0] == 2

    def test_tool_failure(self, clip, capsys):
        code, _, err = run(["score", clip, clip, "--command", script("fail_tool.py", "{ref}", "{dist}")], capsys)
        assert code == 3 and err.count("\n") == 1

    def test_tool_failure_inside_tuning(self, tmp_path, clip, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"input": str(clip), "filter": "gamma", "tuning_frames": 1,
                                   "metric": {"command": script("fail_tool.py", "{ref}", "{dist}")}}))
        assert run(["tune", cfg], capsys)[0] == 3


def test_key_value_config(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\ninput = a.y4m\nga.mu = 4\nga.crossover_rate = 0.25\nvideo = Beach\n")
    assert load_config(p) == {"input": "a.y4m", "ga": {"mu": 4, "crossover_rate": 0.25}, "video": "Beach"}


def test_module_entry_point(tmp_path, rng):
    path = tmp_path / "x.y4m"
    write_y4m_file(path, random_sequence(rng, 1, 4, 4))
    res = subprocess.run([sys.executable, "-m", "vqhack.cli", "score", str(path), str(path)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["pooled"] == 100.0
    assert np.isfinite(json.loads(res.stdout)["per_frame"][0])
