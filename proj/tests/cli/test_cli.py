# Copyright 2026 The FRDet Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import json
import os
import subprocess
from pathlib import Path

import pytest

CLI = os.environ.get("FRDET_CLI", "frdet")
ROOT = Path(__file__).resolve().parents[2]
SYNTH_CFG = ROOT / "configs" / "frdet_synthetic.cfg"


def run(*args, env=None):
    full_env = dict(os.environ)
    full_env.pop("FRDET_THREADS", None)
    full_env.update(env or {})
    return subprocess.run([CLI, *map(str, args)], capture_output=True, text=True, env=full_env)


def write_cfg(path, k, stages=None, extra=""):
    text = f"[net]\ninput=416\nclasses=3\nk={k}\ngaussian=1\n{extra}"
    for channels, fr in stages or []:
        text += f"[stage] channels={channels} fr={fr}\n"
    path.write_text(text)
    return path


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    r = run("synth", "--out", root, "--count", 6, "--seed", 11)
    assert r.returncode == 0, r.stderr
    return root


@pytest.fixture(scope="module")
def init_weights(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("init")
    r = run("train", "--config", SYNTH_CFG, "--data", dataset, "--out", out, "--iters", 0, "--quiet")
    assert r.returncode == 0, r.stderr
    return out / "final.frdw"


# ------------------------------------------------------------------ usage


def test_help_exits_zero_and_lists_flags():
    r = run("--help")
    assert r.returncode == 0
    for sub in ["analyze", "sweep", "synth", "train", "infer", "eval"]:
        assert sub in r.stdout
    flags = {
        "analyze": ["--config", "--input-size", "--json", "--per-node"],
        "sweep": ["--config", "--k-min", "--k-max", "--out", "--markdown"],
        "synth": ["--out", "--count", "--seed", "--size"],
        "train": ["--config", "--data", "--out", "--iters", "--seed", "--batch", "--lr", "--checkpoint-every",
                  "--max-grad-norm", "--train-ratio", "--init", "--reference-preset", "--quiet"],
        "infer": ["--config", "--weights", "--image", "--conf", "--nms", "--no-uncertainty", "--annotate"],
        "eval": ["--detections", "--labels", "--iou", "--class-iou", "--classes", "--json"],
    }
    for sub, names in flags.items():
        h = run(sub, "--help")
        assert h.returncode == 0
        for name in names:
            assert name in h.stdout, (sub, name)


def test_unknown_flag_and_missing_required_exit_one():
    assert run("analyze", "--bogus").returncode == 1
    assert run("train", "--config", SYNTH_CFG).returncode == 1
    assert run("nosuchcommand").returncode == 1
    assert run().returncode == 1


def test_bad_thread_count_exits_one():
    r = run("analyze", env={"FRDET_THREADS": "zero"})
    assert r.returncode == 1
    assert "FRDET_THREADS" in r.stderr


# ------------------------------------------------------------------ analyze


def test_analyze_default_prints_totals():
    r = run("analyze")
    assert r.returncode == 0
    line = next(l for l in r.stdout.splitlines() if l.startswith("totals:"))
    mb = float(line.split(",")[1].split()[0])
    assert mb > 0


def test_analyze_json_is_one_object():
    r = run("analyze", "--json", "--per-node")
    assert r.returncode == 0
    doc = json.loads(r.stdout)
    assert doc["schema"] == 1
    assert doc["model_size_mb"] > 0
    assert sum(g["params_total"] for g in doc["groups"]) == doc["params_total"]
    assert sum(n["params_total"] for n in doc["nodes"]) == doc["params_total"]


def test_analyze_larger_k_is_smaller(tmp_path):
    sizes = {}
    for k in (3, 4):
        r = run("analyze", "--json", "--config", write_cfg(tmp_path / f"k{k}.cfg", k))
        assert r.returncode == 0, r.stderr
        sizes[k] = json.loads(r.stdout)["model_size_mb"]
    assert sizes[4] < sizes[3]


def test_analyze_input_size_scales_flops():
    big = json.loads(run("analyze", "--json", "--input-size", 640).stdout)
    small = json.loads(run("analyze", "--json", "--input-size", 320).stdout)
    assert big["macs"] == 4 * small["macs"]
    assert run("analyze", "--input-size", 100).returncode == 2


def test_analyze_bad_config_reports_line(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[net]\ninput=100\n")
    r = run("analyze", "--config", cfg)
    assert r.returncode == 1
    assert "line 2" in r.stderr


# ------------------------------------------------------------------ sweep


def test_sweep_rows_monotone_with_deviation(tmp_path):
    out = tmp_path / "sweep.csv"
    md = tmp_path / "sweep.md"
    r = run("sweep", "--k-min", 1, "--k-max", 7, "--out", out, "--markdown", md)
    assert r.returncode == 0, r.stderr
    lines = out.read_text().splitlines()
    assert lines[0] == "k,model_size_mb,bflops,params_conv,params_total"
    rows = [l.split(",") for l in lines[1:]]
    assert [int(row[0]) for row in rows] == list(range(1, 8))
    sizes = [float(row[1]) for row in rows]
    assert all(b < a for a, b in zip(sizes, sizes[1:]))
    assert md.read_text() == r.stdout
    assert "116.82" in r.stdout


def test_sweep_divisibility_failure_exits_two(tmp_path):
    stages = [(96, 1), (128, 1), (256, 1), (512, 1), (1024, 1)]
    cfg = write_cfg(tmp_path / "odd.cfg", 1, stages)
    assert run("analyze", "--config", cfg).returncode == 0
    r = run("sweep", "--config", cfg, "--k-min", 1, "--k-max", 7)
    assert r.returncode == 2
    assert "k=6" in r.stderr


# ------------------------------------------------------------------ train / infer


def test_train_writes_log_and_checkpoints(dataset, tmp_path):
    out = tmp_path / "run"
    r = run("train", "--config", SYNTH_CFG, "--data", dataset, "--out", out, "--iters", 4, "--batch", 2,
            "--checkpoint-every", 2, "--seed", 5)
    assert r.returncode == 0, r.stderr
    for name in ["train_log.csv", "checkpoint_2.frdw", "checkpoint_4.frdw", "final.frdw", "eval.txt", "eval.json"]:
        assert (out / name).is_file(), name
    log = (out / "train_log.csv").read_text().splitlines()
    assert log[0] == "iter,loss_box,loss_obj,loss_cls,loss_total"
    assert len(log) == 5
    assert json.loads((out / "eval.json").read_text())["schema"] == 1


def test_train_is_deterministic(dataset, tmp_path):
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        r = run("train", "--config", SYNTH_CFG, "--data", dataset, "--out", out, "--iters", 3, "--batch", 2,
                "--checkpoint-every", 0, "--seed", 9, "--quiet")
        assert r.returncode == 0, r.stderr
        outputs.append(((out / "final.frdw").read_bytes(), (out / "train_log.csv").read_text()))
    assert outputs[0] == outputs[1]


def test_train_missing_data_exits_one(tmp_path):
    r = run("train", "--config", SYNTH_CFG, "--data", tmp_path / "missing", "--out", tmp_path / "o")
    assert r.returncode == 1


def first_image(dataset):
    return sorted((dataset / "images").iterdir())[0]


def test_infer_high_threshold_gives_nothing(dataset, init_weights):
    r = run("infer", "--config", SYNTH_CFG, "--weights", init_weights, "--image", first_image(dataset),
            "--conf", 0.9)
    assert r.returncode == 0, r.stderr
    assert r.stdout == ""


def test_infer_annotate_writes_p6_of_input_size(dataset, init_weights, tmp_path):
    out = tmp_path / "annotated.ppm"
    r = run("infer", "--config", SYNTH_CFG, "--weights", init_weights, "--image", first_image(dataset),
            "--conf", 0.0, "--annotate", out)
    assert r.returncode == 0, r.stderr
    lines = r.stdout.splitlines()
    assert lines
    for line in lines:
        fields = line.split()
        assert fields[0] in ("Rect", "Ellipse") and len(fields) == 7
    data = out.read_bytes()
    assert data.startswith(b"P6\n160 160\n255\n")
    assert len(data) == len(b"P6\n160 160\n255\n") + 160 * 160 * 3


def test_infer_mismatched_weights_exits_two(dataset, init_weights):
    r = run("infer", "--config", ROOT / "configs" / "frdet.cfg", "--weights", init_weights, "--image",
            first_image(dataset))
    assert r.returncode == 2


def test_overfit_model_detects_training_object(tmp_path):
    data = tmp_path / "few"
    assert run("synth", "--out", data, "--count", 8, "--seed", 4).returncode == 0
    out = tmp_path / "overfit"
    r = run("train", "--config", SYNTH_CFG, "--data", data, "--out", out, "--iters", 400, "--batch", 4,
            "--train-ratio", 1.0, "--checkpoint-every", 0, "--quiet")
    assert r.returncode == 0, r.stderr
    hits = 0
    images = sorted((data / "images").iterdir())
    for image in images:
        wanted = {line.split()[0] for line in (data / "labels" / (image.stem + ".txt")).read_text().splitlines()}
        r = run("infer", "--config", SYNTH_CFG, "--weights", out / "final.frdw", "--image", image)
        assert r.returncode == 0, r.stderr
        found = {line.split()[0] for line in r.stdout.splitlines()}
        hits += bool(wanted & found)
    assert hits >= len(images) - 1


# ------------------------------------------------------------------ eval


def kitti_line(cls, box):
    l, t, r, b = box
    return f"{cls} 0.00 0 0.00 {l:.2f} {t:.2f} {r:.2f} {b:.2f} 1.00 1.00 1.00 0.00 0.00 10.00 0.00\n"


def eval_dirs(tmp_path, labels, detections):
    ld, dd = tmp_path / "labels", tmp_path / "dets"
    ld.mkdir(parents=True)
    dd.mkdir(parents=True)
    for stem, lines in labels.items():
        (ld / f"{stem}.txt").write_text("".join(lines))
    for stem, lines in detections.items():
        (dd / f"{stem}.txt").write_text("".join(lines))
    return dd, ld


def test_eval_perfect_and_empty(tmp_path):
    boxes = [(10, 10, 60, 60), (100, 20, 150, 90)]
    labels = {"a": [kitti_line("Car", b) for b in boxes]}
    perfect = {"a": [f"Car 0.9 {b[0]} {b[1]} {b[2]} {b[3]} 0\n" for b in boxes]}
    dd, ld = eval_dirs(tmp_path / "p", labels, perfect)
    doc = json.loads(run("eval", "--detections", dd, "--labels", ld, "--json").stdout)
    assert doc["map_all"] == 1.0
    dd, ld = eval_dirs(tmp_path / "e", labels, {"a": []})
    doc = json.loads(run("eval", "--detections", dd, "--labels", ld, "--json").stdout)
    assert doc["map_all"] == 0.0


def test_eval_hand_case_is_five_sixths(tmp_path):
    labels = {"a": [kitti_line("Car", (0, 0, 50, 50)), kitti_line("Car", (100, 100, 150, 150))]}
    dets = {"a": ["Car 0.9 0 0 50 50 0\n", "Car 0.8 300 300 350 350 0\n", "Car 0.7 100 100 150 150 0\n"]}
    dd, ld = eval_dirs(tmp_path, labels, dets)
    r = run("eval", "--detections", dd, "--labels", ld, "--json")
    assert r.returncode == 0, r.stderr
    doc = json.loads(r.stdout)
    moderate = next(c for c in doc["cells"] if c["bucket"] == "moderate")
    assert moderate["ap"] == pytest.approx(5 / 6, abs=1e-9)


def test_eval_stem_mismatch_exits_two(tmp_path):
    dd, ld = eval_dirs(tmp_path, {"a": [kitti_line("Car", (0, 0, 50, 50))], "b": []}, {"a": []})
    r = run("eval", "--detections", dd, "--labels", ld)
    assert r.returncode == 2
    assert "no detections for b" in r.stderr


def test_eval_bad_class_iou_exits_one(tmp_path):
    dd, ld = eval_dirs(tmp_path, {"a": []}, {"a": []})
    assert run("eval", "--detections", dd, "--labels", ld, "--class-iou", "Car").returncode == 1
