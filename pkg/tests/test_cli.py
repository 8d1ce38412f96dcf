import json

import numpy as np
import pytest

from hsidj import read_ppm
from hsidj.cli import main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One synthetic scene plus a clean split, built through the CLI itself."""
    root = tmp_path_factory.mktemp("cliws")
    hdr, raw = root / "scene.hdr", root / "scene.raw"
    gt, split = root / "gt.pgm", root / "split.json"
    assert main([
        "synth", "--rows", "32", "--cols", "32", "--bands", "6",
        "--classes", "3", "--blobs", "6", "--separation", "4.0",
        "--noise", "1.0", "--seed", "5",
        "--out-hdr", str(hdr), "--out-gt", str(gt),
    ]) == 0
    assert main([
        "split", "--gt", str(gt), "--seed", "5", "--out", str(split),
    ]) == 0
    return {"hdr": hdr, "raw": raw, "gt": gt, "split": split, "root": root}


def _eval_args(ws, *extra):
    return [
        "eval", "--hdr", str(ws["hdr"]), "--gt", str(ws["gt"]),
        "--split", str(ws["split"]), "--seed", "1", "--threads", "1", *extra,
    ]


# argument handling

def test_usage_errors_exit_2(capsys):
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["split", "--gt", "x.pgm", "--out", "s.json"]) == 2  # seed required
    assert main(["split", "--gt", "x", "--seed", "1", "--out", "s",
                 "--test-ratio", "1.5"]) == 2
    assert main(["synth", "--seed", "-3", "--out-hdr", "a", "--out-gt", "b"]) == 2
    capsys.readouterr()


def test_help_exits_0(capsys):
    assert main(["--help"]) == 0
    assert main(["eval", "--help"]) == 0
    capsys.readouterr()


def test_effective_config_line_is_json(workspace, capsys):
    assert main([
        "audit", "--gt", str(workspace["gt"]), "--split", str(workspace["split"]),
    ]) == 0
    first = capsys.readouterr().out.splitlines()[0]
    assert first.startswith("config[audit]: ")
    cfg = json.loads(first.split(": ", 1)[1])
    assert cfg["window"] == 8 and cfg["top_k"] == 10
    assert "command" not in cfg


# synth and split behavior

def test_synth_and_split_are_deterministic(workspace, tmp_path, capsys):
    hdr2, gt2 = tmp_path / "s2.hdr", tmp_path / "g2.pgm"
    split2 = tmp_path / "sp2.json"
    assert main([
        "synth", "--rows", "32", "--cols", "32", "--bands", "6",
        "--classes", "3", "--blobs", "6", "--separation", "4.0",
        "--noise", "1.0", "--seed", "5",
        "--out-hdr", str(hdr2), "--out-gt", str(gt2),
    ]) == 0
    assert (tmp_path / "s2.raw").read_bytes() == workspace["raw"].read_bytes()
    assert gt2.read_bytes() == workspace["gt"].read_bytes()
    assert main(["split", "--gt", str(gt2), "--seed", "5", "--out", str(split2)]) == 0
    assert split2.read_bytes() == workspace["split"].read_bytes()
    out = capsys.readouterr().out
    assert "fingerprint" in out


def test_split_missing_gt_exits_3(tmp_path, capsys):
    assert main([
        "split", "--gt", str(tmp_path / "nope.pgm"), "--seed", "1",
        "--out", str(tmp_path / "s.json"),
    ]) == 3
    assert "error:" in capsys.readouterr().err


def test_split_corrupt_gt_exits_3(tmp_path, capsys):
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"this is not a raster")
    assert main([
        "split", "--gt", str(bad), "--seed", "1", "--out", str(tmp_path / "s.json"),
    ]) == 3
    capsys.readouterr()


def test_split_against_wrong_scene_exits_1(workspace, tmp_path, capsys):
    gt2 = tmp_path / "other.pgm"
    assert main([
        "synth", "--rows", "32", "--cols", "32", "--bands", "6",
        "--classes", "3", "--blobs", "6", "--seed", "6",
        "--out-hdr", str(tmp_path / "o.hdr"), "--out-gt", str(gt2),
    ]) == 0
    assert main([
        "audit", "--gt", str(gt2), "--split", str(workspace["split"]),
    ]) == 1
    assert "fingerprint" in capsys.readouterr().err


# audit

def test_audit_pass_and_report(workspace, tmp_path, capsys):
    out = tmp_path / "audit.json"
    assert main([
        "audit", "--gt", str(workspace["gt"]), "--split", str(workspace["split"]),
        "--window", "8", "--out", str(out),
    ]) == 0
    text = capsys.readouterr().out
    assert "index audit: PASS" in text
    assert "test-vs-train overlap" in text
    assert "mean shared-pixel fraction" in text
    payload = json.loads(out.read_text())
    assert payload["passed"] is True
    assert payload["violations"] == []
    assert payload["leakage"]["window"] == 8
    assert payload["leakage"]["union_complete"] is True
    assert payload["leakage"]["counts_match"] is True
    assert payload["leakage"]["test_vs_train"]["eval_total"] > 0


def _tampered_split(workspace, tmp_path):
    """Move one index from test to train: loads fine, fails the audit."""
    doc = json.loads(workspace["split"].read_text())
    cls = doc["classes"][0]
    cls["train"].append(cls["test"].pop())
    path = tmp_path / "tampered.json"
    path.write_text(json.dumps(doc))
    return path


def test_audit_tampered_split_exits_1(workspace, tmp_path, capsys):
    bad = _tampered_split(workspace, tmp_path)
    assert main(["audit", "--gt", str(workspace["gt"]), "--split", str(bad)]) == 1
    text = capsys.readouterr().out
    assert "index audit: FAIL" in text
    assert "do not match" in text


def test_audit_corrupt_split_json_exits_3(workspace, tmp_path, capsys):
    bad = tmp_path / "broken.json"
    bad.write_text("{ nope")
    assert main(["audit", "--gt", str(workspace["gt"]), "--split", str(bad)]) == 3
    capsys.readouterr()


# eval

def test_eval_centroid_full_outputs(workspace, tmp_path, capsys):
    out, pred = tmp_path / "report.json", tmp_path / "pred.csv"
    assert main(_eval_args(
        workspace, "--model", "centroid", "--out", str(out), "--pred-out", str(pred),
    )) == 0
    text = capsys.readouterr().out
    lines = text.splitlines()
    header = next(ln for ln in lines if ln.split()[:1] == ["class"])
    assert header.split() == ["class", "val", "test", "full"]
    for name in ("Kappa", "OA", "AA", "Time(s)"):
        assert any(ln.split()[:1] == [name] for ln in lines)
    assert "[full] includes training pixels" in text

    payload = json.loads(out.read_text())
    assert payload["model"] == "centroid"
    assert payload["features"] == "spectrum"  # non-knn default
    assert [r["set"] for r in payload["reports"]] == ["val", "test", "full"]
    assert payload["split"]["seed"] == 5

    rows = pred.read_text().splitlines()
    assert rows[0] == "index,label"
    labeled = sum(r["samples"] for r in payload["reports"] if r["set"] == "full")
    assert len(rows) - 1 == labeled
    indices = [int(r.split(",")[0]) for r in rows[1:]]
    assert indices == sorted(indices)


def test_eval_knn_defaults_to_patch_features(workspace, tmp_path, capsys):
    out = tmp_path / "knn.json"
    assert main(_eval_args(
        workspace, "--model", "knn", "--window", "4", "--out", str(out),
    )) == 0
    payload = json.loads(out.read_text())
    assert payload["features"] == "patch"
    assert payload["window"] == 4
    capsys.readouterr()


def test_eval_softmax_writes_curve(workspace, tmp_path, capsys):
    curve = tmp_path / "curve.csv"
    assert main(_eval_args(
        workspace, "--model", "softmax", "--epochs", "20", "--lr", "0.3",
        "--curve-out", str(curve),
    )) == 0
    rows = curve.read_text().splitlines()
    assert rows[0] == "epoch,train_loss,val_accuracy"
    assert len(rows) == 21
    capsys.readouterr()


def test_eval_curve_out_needs_softmax(workspace, tmp_path, capsys):
    assert main(_eval_args(
        workspace, "--model", "centroid", "--curve-out", str(tmp_path / "c.csv"),
    )) == 1
    assert "softmax" in capsys.readouterr().err


def test_eval_gate_blocks_tampered_split(workspace, tmp_path, capsys):
    bad = _tampered_split(workspace, tmp_path)
    out = tmp_path / "never.json"
    code = main([
        "eval", "--hdr", str(workspace["hdr"]), "--gt", str(workspace["gt"]),
        "--split", str(bad), "--seed", "1", "--threads", "1", "--out", str(out),
    ])
    assert code == 1
    text = capsys.readouterr().out
    assert "audit gate: FAIL" in text
    assert "Kappa" not in text  # no report table
    assert not out.exists()


def test_eval_allow_overlap_adds_watermarked_column(workspace, tmp_path, capsys):
    out = tmp_path / "overlap.json"
    assert main(_eval_args(
        workspace, "--model", "knn", "--window", "3", "--allow-overlap",
        "--reuse-fraction", "0.5", "--out", str(out),
    )) == 0
    text = capsys.readouterr().out
    assert "test+reused" in text
    assert "[test+reused] OVERLAP MODE: evaluation set includes training pixels" in text
    assert "training reuse:" in text

    payload = json.loads(out.read_text())
    overlap = payload["overlap"]
    assert overlap["reused_oa"] == 100.0  # 1-NN memorization
    assert overlap["report"]["oa"] >= overlap["fresh_oa"]
    assert overlap["report"]["flags"] == [
        "OVERLAP MODE: evaluation set includes training pixels"
    ]


def test_eval_predict_scene_covers_every_pixel(workspace, tmp_path, capsys):
    pred = tmp_path / "scene.csv"
    assert main(_eval_args(
        workspace, "--model", "centroid", "--pred-out", str(pred), "--predict-scene",
    )) == 0
    rows = pred.read_text().splitlines()
    assert len(rows) - 1 == 32 * 32
    capsys.readouterr()


def test_eval_threads_env(workspace, tmp_path, monkeypatch, capsys):
    base = [
        "eval", "--hdr", str(workspace["hdr"]), "--gt", str(workspace["gt"]),
        "--split", str(workspace["split"]), "--seed", "1", "--model", "centroid",
    ]
    monkeypatch.setenv("HSIDJ_THREADS", "not-a-number")
    assert main(base) == 1
    assert "HSIDJ_THREADS" in capsys.readouterr().err

    monkeypatch.setenv("HSIDJ_THREADS", "2")
    out = tmp_path / "env.json"
    assert main(base + ["--out", str(out)]) == 0
    assert json.loads(out.read_text())["threads"] == 2
    capsys.readouterr()


def test_eval_threads_do_not_change_results(workspace, tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    base = [
        "eval", "--hdr", str(workspace["hdr"]), "--gt", str(workspace["gt"]),
        "--split", str(workspace["split"]), "--seed", "1", "--model", "centroid",
    ]
    assert main(base + ["--threads", "1", "--out", str(a)]) == 0
    assert main(base + ["--threads", "4", "--out", str(b)]) == 0
    da, db = json.loads(a.read_text()), json.loads(b.read_text())
    for ra, rb in zip(da["reports"], db["reports"]):
        assert ra["confusion"] == rb["confusion"]
    capsys.readouterr()


# map

def test_map_from_gt_modes(workspace, tmp_path, capsys):
    for mode in ("val_only", "test_only", "full_labeled", "full_scene"):
        out = tmp_path / f"{mode}.ppm"
        assert main([
            "map", "--gt", str(workspace["gt"]), "--split", str(workspace["split"]),
            "--mode", mode, "--from-gt", "--out", str(out),
        ]) == 0
        rgb = read_ppm(out)
        assert rgb.shape == (32, 32, 3)
    capsys.readouterr()


def test_map_from_predictions(workspace, tmp_path, capsys):
    pred = tmp_path / "pred.csv"
    assert main(_eval_args(workspace, "--model", "centroid",
                           "--pred-out", str(pred))) == 0
    out = tmp_path / "test.ppm"
    assert main([
        "map", "--gt", str(workspace["gt"]), "--split", str(workspace["split"]),
        "--mode", "test_only", "--pred", str(pred), "--out", str(out),
        "--palette-out", str(tmp_path / "palette.csv"),
    ]) == 0
    assert (tmp_path / "palette.csv").read_text().startswith("index,r,g,b")
    text = capsys.readouterr().out
    assert "painted pixels" in text


def test_map_missing_predictions_exit_1(workspace, tmp_path, capsys):
    pred = tmp_path / "short.csv"
    pred.write_text("index,label\n0,1\n")
    assert main([
        "map", "--gt", str(workspace["gt"]), "--split", str(workspace["split"]),
        "--mode", "test_only", "--pred", str(pred), "--out", str(tmp_path / "x.ppm"),
    ]) == 1
    assert "no prediction" in capsys.readouterr().err


def test_map_duplicate_prediction_rows_exit_3(workspace, tmp_path, capsys):
    pred = tmp_path / "dup.csv"
    pred.write_text("index,label\n7,1\n7,2\n")
    assert main([
        "map", "--gt", str(workspace["gt"]), "--mode", "full_labeled",
        "--pred", str(pred), "--out", str(tmp_path / "x.ppm"),
    ]) == 3
    assert "duplicate index" in capsys.readouterr().err


def test_map_pred_and_from_gt_conflict(workspace, tmp_path, capsys):
    assert main([
        "map", "--gt", str(workspace["gt"]), "--mode", "full_labeled",
        "--pred", "p.csv", "--from-gt", "--out", str(tmp_path / "x.ppm"),
    ]) == 2
    capsys.readouterr()


# bench

def test_bench_reports_memory(capsys):
    assert main([
        "bench", "--rows", "48", "--cols", "48", "--bands", "8",
        "--window", "8", "--seed", "2",
    ]) == 0
    out = capsys.readouterr().out
    assert "streamed 2304 patches" in out
    assert "peak extra" in out


def test_bench_max_mib_gate(capsys):
    assert main([
        "bench", "--rows", "48", "--cols", "48", "--bands", "8",
        "--window", "8", "--seed", "2", "--max-mib", "0.000001",
    ]) == 1
    assert "bench: FAIL" in capsys.readouterr().out
