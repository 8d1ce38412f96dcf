"""Acceptance gate: one test per shipping criterion, one printed verdict each.

Every test prints `criterion N (<name>): PASS/FAIL` on the real stdout so the
gate can be read off a plain pytest run. Failures print FAIL before the
assertion surfaces; a test that exceeds its runtime budget fails too.
"""

import contextlib
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from hsidj import (
    ConfusionMatrix,
    GroundTruth,
    HSICube,
    PatchSpec,
    SplitConfig,
    Standardizer,
    SynthConfig,
    disjoint_split,
    evaluate_protocol,
    evaluate_set,
    evaluate_with_training_reuse,
    extract_patch,
    features_for,
    fit_centroid,
    fit_knn,
    iter_patches,
    labels_at,
    metrics,
    read_envi,
    softmax_loss_grad,
    split_counts,
    synth_dataset,
    write_envi,
    write_ppm,
)
from hsidj.evaluate import SoftmaxModel
from hsidj.mapgen import ThematicMap
from hsidj.patching import measure_stream_memory

GOLDEN = Path(__file__).parent / "golden"


@contextlib.contextmanager
def criterion(capsys, num: int, name: str, limit_s: float):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        elapsed = time.perf_counter() - start
        with capsys.disabled():
            print(f"criterion {num} ({name}): FAIL after {elapsed:.2f}s")
        raise
    elapsed = time.perf_counter() - start
    verdict = "PASS" if elapsed < limit_s else "FAIL"
    with capsys.disabled():
        print(f"criterion {num} ({name}): {verdict} in {elapsed:.2f}s (limit {limit_s:g}s)")
    assert elapsed < limit_s, f"runtime {elapsed:.2f}s exceeds the {limit_s:g}s budget"


def test_criterion_1_split_count_reproduction(capsys):
    """Published per-class train/val/test counts are reproduced exactly."""
    rows = [
        (46, 0.7, 0.5, (6, 7, 33)),
        (20, 0.7, 0.5, (3, 3, 14)),
        (1428, 0.7, 0.5, (214, 214, 1000)),
        (1251, 0.7, 0.8, (75, 300, 876)),
        (6631, 0.7, 0.5, (994, 995, 4642)),
        (270, 0.7, 0.5, (40, 41, 189)),
        (2009, 0.7, 0.5, (301, 301, 1407)),
    ]
    with criterion(capsys, 1, "split-count reproduction", 1.0):
        for n, p, m, expected in rows:
            assert split_counts(n, p, m) == expected, (n, p, m)


def _random_gt(rng) -> GroundTruth:
    k = int(rng.integers(2, 5))
    counts = [int(rng.integers(60, 141)) for _ in range(k)]
    total = sum(counts)
    cols = 30
    raster_rows = -(-total // cols) + 1
    flat = np.zeros(raster_rows * cols, dtype=np.int32)
    fill = np.concatenate(
        [np.full(c, lab + 1, dtype=np.int32) for lab, c in enumerate(counts)]
    )
    pos = rng.choice(flat.size, size=total, replace=False)
    flat[pos] = fill
    return GroundTruth(flat.reshape(raster_rows, cols))


def test_criterion_2_disjointness_property_suite(capsys):
    """1000 randomized splits keep every structural promise, deterministically."""
    rng = np.random.default_rng(20260815)
    with criterion(capsys, 2, "disjointness property suite", 30.0):
        for _ in range(1000):
            gt = _random_gt(rng)
            cfg = SplitConfig(
                test_ratio=float(rng.uniform(0.5, 0.9)),
                val_ratio=float(rng.uniform(0.3, 0.8)),
                seed=int(rng.integers(0, 2**63)),
            )
            s = disjoint_split(gt, cfg)
            train, val, test = (
                set(s.train_indices()), set(s.val_indices()), set(s.test_indices())
            )
            assert not (train & val) and not (train & test) and not (val & test)
            flat = gt.labels.ravel()
            assert train | val | test == set(np.flatnonzero(flat).tolist())
            for c in s.classes:
                assert all(flat[i] == c.label for i in c.train + c.val + c.test)
            assert disjoint_split(gt, cfg) == s


def _oracle_metrics(cells: np.ndarray):
    total = int(cells.sum())
    k = cells.shape[0]
    rows, cols = cells.sum(axis=1), cells.sum(axis=0)
    recall = {i: Fraction(int(cells[i, i]), int(rows[i])) for i in range(k) if rows[i]}
    precision = {i: Fraction(int(cells[i, i]), int(cols[i])) for i in range(k) if cols[i]}
    oa = Fraction(int(np.trace(cells)), total)
    aa = sum(recall.values()) / len(recall)
    p_e = Fraction(sum(int(rows[i]) * int(cols[i]) for i in range(k)), total * total)
    kappa = None if p_e == 1 else (oa - p_e) / (1 - p_e)
    return oa, aa, kappa, recall, precision


def test_criterion_3_metric_oracle_equivalence(capsys):
    """Metrics agree with an exact-rational brute-force oracle to 1e-12."""
    rng = np.random.default_rng(3)
    with criterion(capsys, 3, "metric oracle equivalence", 5.0):
        anchor = metrics(ConfusionMatrix((1, 2), np.array([[2, 0], [0, 2]])))
        assert anchor.kappa == 100.0
        anchor = metrics(ConfusionMatrix((1, 2), np.array([[1, 1], [1, 1]])))
        assert anchor.kappa == 0.0

        worst = 0.0
        checked = 0
        while checked < 500:
            k = int(rng.integers(1, 11))
            cells = rng.integers(0, 51, size=(k, k)).astype(np.int64)
            if cells.sum() == 0 or not cells.sum(axis=1).any():
                continue
            checked += 1
            cm = ConfusionMatrix(labels=tuple(range(1, k + 1)), cells=cells)
            got = metrics(cm)
            oa, aa, kappa, recall, precision = _oracle_metrics(cells)
            worst = max(worst, abs(got.oa - float(100 * oa)))
            worst = max(worst, abs(got.aa - float(100 * aa)))
            if kappa is None:
                assert got.degenerate_kappa
            else:
                worst = max(worst, abs(got.kappa - float(100 * kappa)))
            for i, pc in enumerate(got.per_class):
                if i in recall:
                    worst = max(worst, abs(pc.recall - float(100 * recall[i])))
                else:
                    assert pc.recall is None
                if i in precision:
                    worst = max(worst, abs(pc.precision - float(100 * precision[i])))
                else:
                    assert pc.precision is None
                if i in recall and i in precision and (recall[i] or precision[i]):
                    f1 = 2 * recall[i] * precision[i] / (recall[i] + precision[i])
                    worst = max(worst, abs(pc.f1 - float(100 * f1)))
        assert checked == 500
        assert worst < 1e-12, f"max deviation {worst}"


def test_criterion_4_leakage_inflation_demonstration(capsys):
    """Reusing training pixels in the test set inflates OA in every seed."""
    spec = PatchSpec(window=8)
    with criterion(capsys, 4, "leakage inflation demonstration", 60.0):
        for seed in range(10):
            cube, gt = synth_dataset(SynthConfig(
                rows=64, cols=64, bands=16, num_classes=4, blob_count=10,
                class_separation=3.0, noise_sigma=2.0, seed=seed,
            ))
            s = disjoint_split(gt, SplitConfig(test_ratio=0.7, val_ratio=0.5, seed=seed))
            train = s.train_indices()
            model = fit_knn(
                features_for(cube, gt, train, "patch", spec),
                labels_at(gt, train), 1, "patch",
            )
            reports = evaluate_protocol(model, cube, gt, s, spec)
            overlap = evaluate_with_training_reuse(model, cube, gt, s, spec, 0.5, seed)
            assert overlap.reused_oa == 100.0, f"seed {seed}"
            assert overlap.honest.metrics.oa < 100.0, f"seed {seed}"
            assert overlap.report.metrics.oa > overlap.honest.metrics.oa, f"seed {seed}"
            assert reports.full.metrics.oa >= reports.test.metrics.oa, f"seed {seed}"


def test_criterion_5_gradient_check(capsys):
    """Analytic softmax gradients match central differences to 1e-5 relative."""
    rng = np.random.default_rng(5)
    h = 1e-6
    with criterion(capsys, 5, "gradient check", 10.0):
        for _ in range(100):
            n = int(rng.integers(5, 21))
            d = int(rng.integers(2, 7))
            k = int(rng.integers(2, 5))
            x = rng.normal(size=(n, d))
            y = rng.integers(1, k + 1, size=n)
            y[:k] = np.arange(1, k + 1)  # every class present
            model = SoftmaxModel(
                labels=np.arange(1, k + 1, dtype=np.int64),
                weights=rng.normal(size=(k, d)) * 0.7,
                bias=rng.normal(size=k) * 0.2,
                scaler=Standardizer.fit(x),
                feature_kind="spectrum",
            )
            l2 = float(rng.uniform(0.0, 0.5))
            _, dw, db = softmax_loss_grad(model, x, y, l2)

            def loss(w, b):
                from dataclasses import replace
                return softmax_loss_grad(replace(model, weights=w, bias=b), x, y, l2)[0]

            fd_w = np.zeros_like(dw)
            for idx in np.ndindex(*dw.shape):
                bump = np.zeros_like(dw)
                bump[idx] = h
                fd_w[idx] = (loss(model.weights + bump, model.bias)
                             - loss(model.weights - bump, model.bias)) / (2 * h)
            fd_b = np.zeros_like(db)
            for i in range(db.size):
                bump = np.zeros_like(db)
                bump[i] = h
                fd_b[i] = (loss(model.weights, model.bias + bump)
                           - loss(model.weights, model.bias - bump)) / (2 * h)
            analytic = np.concatenate([dw.ravel(), db.ravel()])
            numeric = np.concatenate([fd_w.ravel(), fd_b.ravel()])
            rel = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)
            assert rel < 1e-5, f"relative gradient error {rel}"


def test_criterion_6_protocol_conservation(capsys):
    """Full-scene confusion is the exact cell-wise sum of the part confusions."""
    spec = PatchSpec(window=3)
    with criterion(capsys, 6, "protocol conservation", 20.0):
        for seed in range(20):
            cube, gt = synth_dataset(SynthConfig(
                rows=24, cols=24, bands=4, num_classes=3, blob_count=6,
                class_separation=4.0, noise_sigma=1.5, seed=seed,
            ))
            s = disjoint_split(gt, SplitConfig(test_ratio=0.7, val_ratio=0.5, seed=seed))
            train = s.train_indices()
            model = fit_centroid(
                features_for(cube, gt, train, "spectrum", spec),
                labels_at(gt, train), "spectrum",
            )
            parts = [
                evaluate_set(model, cube, gt, idx, spec, name)
                for name, idx in (
                    ("train", train), ("val", s.val_indices()), ("test", s.test_indices())
                )
            ]
            full = evaluate_set(
                model, cube, gt, np.flatnonzero(gt.labels.ravel()).tolist(), spec, "full"
            )
            summed = sum(p.cm.cells for p in parts)
            assert np.array_equal(full.cm.cells, summed), f"seed {seed}"


def _oracle_patch(values: np.ndarray, row: int, col: int, ws: int) -> np.ndarray:
    rows, cols, bands = values.shape
    m = ws // 2
    padded = np.zeros((rows + ws - 1, cols + ws - 1, bands), dtype=values.dtype)
    padded[m : m + rows, m : m + cols, :] = values
    return padded[row : row + ws, col : col + ws, :]


def test_criterion_7_patch_geometry_oracle(capsys):
    """extract_patch equals the brute-force padded copy; count is rows*cols."""
    rng = np.random.default_rng(7)
    with criterion(capsys, 7, "patch geometry oracle", 10.0):
        for rows, cols in ((1, 1), (5, 3), (12, 12)):
            values = rng.normal(size=(rows, cols, 2)).astype(np.float32)
            cube = HSICube(values)
            gt = GroundTruth(rng.integers(0, 4, size=(rows, cols)).astype(np.int32))
            for ws in (1, 3, 4, 7, 8):
                spec = PatchSpec(window=ws)
                for r in range(rows):
                    for c in range(cols):
                        rec = extract_patch(cube, gt, r, c, spec)
                        assert np.array_equal(rec.values, _oracle_patch(values, r, c, ws))
                        assert rec.label == int(gt.labels[r, c])
        for rows, cols in ((1, 9), (12, 12), (145, 145)):
            values = np.zeros((rows, cols, 1), dtype=np.float32)
            cube = HSICube(values)
            gt = GroundTruth(np.zeros((rows, cols), dtype=np.int32))
            count = sum(1 for _ in iter_patches(cube, gt, PatchSpec(window=1)))
            assert count == rows * cols
            if (rows, cols) == (145, 145):
                assert count == 21025


def test_criterion_8_streaming_memory_bound(capsys):
    """Streaming all 512x512 window-8 patches stays under 64 MiB extra."""
    with criterion(capsys, 8, "streaming memory bound", 120.0):
        cube, gt = synth_dataset(SynthConfig(
            rows=512, cols=512, bands=64, num_classes=5, blob_count=8,
            class_separation=3.0, noise_sigma=1.0, seed=0,
        ))
        result = measure_stream_memory(cube, gt, PatchSpec(window=8))
        assert result.patches == 512 * 512
        # full materialization would need 512*512*8*8*64 float32 = 4 GiB
        assert result.peak_extra_mib < 64.0, f"peak {result.peak_extra_mib:.2f} MiB"


def test_criterion_9_format_golden_files(capsys, tmp_path):
    """ENVI round-trips bit-exactly; PPM output matches checked-in goldens."""
    rng = np.random.default_rng(9)
    with criterion(capsys, 9, "format golden files", 5.0):
        values = (rng.normal(size=(6, 5, 4)) * 1000).astype(np.float32)
        cube = HSICube(values)
        for interleave in ("bip", "bil", "bsq"):
            hdr = tmp_path / f"{interleave}.hdr"
            raw = tmp_path / f"{interleave}.raw"
            write_envi(cube, hdr, raw, interleave=interleave)
            again = read_envi(hdr, raw)
            assert again.values.dtype == np.float32
            assert np.array_equal(again.values, values)
            raw2 = tmp_path / f"{interleave}2.raw"
            write_envi(again, tmp_path / f"{interleave}2.hdr", raw2, interleave=interleave)
            assert raw2.read_bytes() == raw.read_bytes()

        two = tmp_path / "two.ppm"
        write_ppm(ThematicMap(np.array([[1, 2]], dtype=np.int32), "full_labeled"), two)
        assert two.read_bytes() == (GOLDEN / "classes_1_2.ppm").read_bytes()
        quilt = np.array([[0, 1, 2, 3], [4, 5, 10, 0], [20, 19, 18, 17]], dtype=np.int32)
        qpath = tmp_path / "quilt.ppm"
        write_ppm(ThematicMap(quilt, "full_scene"), qpath)
        assert qpath.read_bytes() == (GOLDEN / "quilt_4x3.ppm").read_bytes()
