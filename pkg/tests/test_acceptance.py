"""Acceptance gate: one check per criterion, each printing a PASS/FAIL line.

Run under pytest (lines appear in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""

import json
import sys
import tempfile
import time
from collections import deque
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from recipes import DESK_TEST_SCENES, desk_models, hue_run  # noqa: E402
from ripeline.classifier import (  # noqa: E402
    ClassifierConfig,
    ShaRnnModel,
    attend,
    classify,
    gradient_errors,
    init_model,
    predict_proba,
    with_zero_head,
)
from ripeline.data import DatasetManifest, ManifestRecord, split  # noqa: E402
from ripeline.detector import DetectorModel, validate_regions  # noqa: E402
from ripeline.evaluation import (  # noqa: E402
    ConfusionCounts,
    UndefinedMetricError,
    f1,
    per_class_accuracy,
    precision,
    recall,
    recall_from_precision_f1,
)
from ripeline.imaging import RgbImage, rgb_to_lab, write_png  # noqa: E402
from ripeline.maturity import MaturityClass  # noqa: E402
from ripeline.regions import GrowthConfig, build_graph, grow_regions, region_mask  # noqa: E402
from ripeline.superpixels import SlicConfig, slic_segment  # noqa: E402
from ripeline.synthetic import red_disc_scene, scene_corpus  # noqa: E402


# ---------------------------------------------------------------- criteria

def criterion_1():
    counts = [("class1", 800, 787), ("class2", 760, 735), ("class3", 425, 413),
              ("class4", 390, 375), ("class5", 625, 602)]
    rep = per_class_accuracy(counts)
    got = [c.accuracy_pct for c in rep.classes]
    ok = (
        got == [98.38, 96.71, 97.18, 96.15, 96.32]
        and rep.overall.accuracy_pct == 97.07
        and max(got) == 98.38 and min(got) == 96.15
    )
    return ok, f"per-class {got}, overall {rep.overall.accuracy_pct}"


def criterion_2():
    r = recall_from_precision_f1(0.9338, 0.9577)
    return 0.9825 <= r <= 0.9833, f"R = {r:.6f}"


def _oracle(truth, pred, k):
    tp = sum(1 for t, p in zip(truth, pred) if t == k and p == k)
    fp = sum(1 for t, p in zip(truth, pred) if t != k and p == k)
    fn = sum(1 for t, p in zip(truth, pred) if t == k and p != k)
    return tp, fp, fn


def _rate_or_none(fn, c):
    try:
        return fn(c)
    except UndefinedMetricError:
        return None


def criterion_3():
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 201))
        truth, pred = rng.integers(0, 5, n).tolist(), rng.integers(0, 5, n).tolist()
        cc = ConfusionCounts.from_labels(truth, pred)
        for k in range(5):
            tp, fp, fn = _oracle(truth, pred, k)
            want_p = tp / (tp + fp) if tp + fp else None
            want_r = tp / (tp + fn) if tp + fn else None
            want_f = None
            if want_p is not None and want_r is not None and want_p + want_r > 0:
                want_f = 2 * tp / (2 * tp + fp + fn)
            c = cc.for_class(k)
            got = (_rate_or_none(precision, c), _rate_or_none(recall, c), _rate_or_none(f1, c))
            if got != (want_p, want_r, want_f):
                mismatches += 1
    return mismatches == 0, f"{mismatches} mismatching class-vectors out of 5000"


def _flood_ok(labels):
    """Every label value forms exactly one 4-connected component."""
    h, w = labels.shape
    seen = np.zeros((h, w), dtype=bool)
    visited_labels = set()
    for y0 in range(h):
        for x0 in range(w):
            if seen[y0, x0]:
                continue
            v = int(labels[y0, x0])
            if v in visited_labels:
                return False
            visited_labels.add(v)
            seen[y0, x0] = True
            q = deque([(y0, x0)])
            while q:
                y, x = q.popleft()
                for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                    if 0 <= ny < h and 0 <= nx < w and not seen[ny, nx] and labels[ny, nx] == v:
                        seen[ny, nx] = True
                        q.append((ny, nx))
    return True


def _segmentation_corpus():
    rng = np.random.default_rng(99)
    items = [(s.image, SlicConfig()) for s in scene_corpus(60, seed=99)]
    for _ in range(20):
        h, w = rng.integers(24, 64, 2)
        items.append((RgbImage(rng.integers(0, 256, (h, w, 3), dtype=np.uint8)),
                      SlicConfig(k_target=int(rng.integers(4, 40)))))
    for _ in range(20):
        img, _ = red_disc_scene(int(rng.integers(40, 96)), radius=float(rng.uniform(8, 18)))
        items.append((img, SlicConfig(k_target=int(rng.integers(9, 80)), compactness=float(rng.uniform(2, 30)))))
    return items


def criterion_4():
    start = time.perf_counter()
    failures = []
    for i, (img, cfg) in enumerate(_segmentation_corpus()):
        lab = rgb_to_lab(img)
        a, b = slic_segment(lab, cfg), slic_segment(lab, cfg)
        dense = set(np.unique(a.labels).tolist()) == set(range(a.k))
        if not (dense and a.labels.shape == (img.height, img.width) and _flood_ok(a.labels)):
            failures.append((i, "partition/connectivity"))
        if not 1 <= a.iterations_run <= cfg.max_iters:
            failures.append((i, "iterations"))
        if not np.array_equal(a.labels, b.labels):
            failures.append((i, "determinism"))
    elapsed = time.perf_counter() - start
    return not failures and elapsed < 60, f"100 images, {len(failures)} failures, {elapsed:.1f}s"


def criterion_5():
    img, mask = red_disc_scene(96, 30)
    lab = rgb_to_lab(img)
    labels = slic_segment(lab, SlicConfig(k_target=64))
    regions = grow_regions(build_graph(labels, lab), GrowthConfig(similarity_threshold=10), image_pixels=96 * 96)
    if len(regions) != 1:
        return False, f"{len(regions)} regions"
    diff = np.logical_xor(region_mask(labels, regions[0]), mask).sum() / mask.sum()
    return diff <= 0.05, f"1 region, symmetric difference {100 * diff:.2f}% of disc"


def criterion_6():
    worst = {}
    for seed in range(3):
        model = init_model(ClassifierConfig(side=8, d=8, layers=2), seed=seed)
        x = np.random.default_rng(seed).random((8, 24))
        for name, err in gradient_errors(model, (x, seed), epsilon=1e-4, n_coords=100, seed=seed).items():
            worst[name] = max(worst.get(name, 0.0), err)
    name = max(worst, key=worst.get)
    return worst[name] < 1e-4, f"max relative error {worst[name]:.2e} ({name}), {len(worst)} groups"


def criterion_7():
    rng = np.random.default_rng(7)
    model = init_model(ClassifierConfig(side=8, d=8, layers=1), seed=7)
    worst_attn = 0.0
    for _ in range(1000):
        T = int(rng.integers(1, 20))
        H = rng.normal(0, rng.uniform(0.1, 10), (T, 8))
        _, w = attend(H, H[-1], model)
        worst_attn = max(worst_attn, abs(w.sum() - 1.0))
        if (w < 0).any():
            return False, "negative attention weight"
    worst_cls = 0.0
    for _ in range(200):
        p = classify(model, RgbImage(rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)))
        worst_cls = max(worst_cls, abs(p.sum() - 1.0))
    uniform = classify(with_zero_head(model), RgbImage(np.full((8, 8, 3), 99, dtype=np.uint8)))
    ok = worst_attn <= 1e-9 and worst_cls <= 1e-9 and uniform.tolist() == [0.2] * 5
    return ok, f"attention |sum-1| <= {worst_attn:.1e}, classify |sum-1| <= {worst_cls:.1e}, zero head {uniform.tolist()}"


def criterion_8():
    start = time.perf_counter()
    _, curve = hue_run()
    elapsed = time.perf_counter() - start
    base = [e for e in curve if e["phase"] == "train"]
    tuned = curve[-1]
    train_acc, val_acc = base[-1]["accuracy"], base[-1]["val_accuracy"]
    ok = len(base) == 60 and train_acc >= 0.98 and val_acc >= 0.90 and tuned["val_accuracy"] >= val_acc
    ok = ok and elapsed < 300
    return ok, (f"train {100 * train_acc:.1f}%, val {100 * val_acc:.1f}% after 60 epochs; "
                f"val {100 * tuned['val_accuracy']:.1f}% after fine-tune; {elapsed:.1f}s")


def criterion_9():
    rng = np.random.default_rng(9)
    probe = [RgbImage(rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)) for _ in range(20)]
    detector, classifier = desk_models()[0], hue_run()[0]
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        det = DetectorModel.load(detector.save(tmp / "det.rpld"))
        det_ok = validate_regions(det, probe) == validate_regions(detector, probe)
        cls = ShaRnnModel.load(classifier.save(tmp / "cls.rpld"))
        cls_ok = np.array_equal(predict_proba(cls, probe), predict_proba(classifier, probe))
        records = [ManifestRecord(f"{c.label}/{i}.png", c) for i in range(4) for c in MaturityClass]
        m = split(DatasetManifest(records), 0.25, seed=1)
        again = DatasetManifest.load(m.save(tmp / "manifest.jsonl"))
        man_ok = again == m and again.dumps() == m.dumps()
    return det_ok and cls_ok and man_ok, f"detector {det_ok}, classifier {cls_ok}, manifest {man_ok} (20 probes)"


def _bbox_iou(a, b):
    ix = max(0, min(a[2], b[2]) - max(a[0], b[0]) + 1)
    iy = max(0, min(a[3], b[3]) - max(a[1], b[1]) + 1)
    inter = ix * iy
    area = lambda r: (r[2] - r[0] + 1) * (r[3] - r[1] + 1)
    return inter / (area(a) + area(b) - inter)


def criterion_10():
    from ripeline.cli import main
    import contextlib
    import io

    detector, classifier = desk_models()
    scenes = scene_corpus(**DESK_TEST_SCENES)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        (tmp / "img").mkdir()
        truth = {}
        for i, s in enumerate(scenes):
            truth[str(write_png(s.image, tmp / "img" / f"scene_{i:02d}.png"))] = s.tomatoes
        det_path, cls_path = detector.save(tmp / "det.rpld"), classifier.save(tmp / "cls.rpld")
        out, err = io.StringIO(), io.StringIO()
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            code = main(["pipeline", "--detector", str(det_path), "--classifier", str(cls_path), str(tmp / "img")])
    records = [json.loads(x) for x in out.getvalue().splitlines()]
    summary = records[-1]["summary"]
    planted = hit = 0
    for rec in records[:-1]:
        for t in truth[rec["image"]]:
            planted += 1
            match = [r for r in rec.get("regions", []) if _bbox_iou(r["bbox"], t.bbox) >= 0.5]
            hit += any(r["class"] == t.cls.label for r in match)
    rate = hit / planted
    ok = code == 0 and summary["failed"] == 0 and summary["images"] == 20 and rate >= 0.9
    return ok, f"exit {code}, {summary['failed']} failures, {hit}/{planted} planted tomatoes detected and classed"


CRITERIA = {
    1: ("per-class accuracy arithmetic", criterion_1),
    2: ("recall from precision and F1", criterion_2),
    3: ("metrics oracle equivalence", criterion_3),
    4: ("segmentation invariants", criterion_4),
    5: ("disc recovery", criterion_5),
    6: ("gradient check", criterion_6),
    7: ("attention/softmax invariants", criterion_7),
    8: ("desk-scale learning", criterion_8),
    9: ("round-trip persistence", criterion_9),
    10: ("end-to-end pipeline", criterion_10),
}


def run(n):
    name, fn = CRITERIA[n]
    ok, detail = fn()
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d} {name}: {detail}"
    print(line)
    return ok, line


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n, acceptance_log):
    ok, line = run(n)
    acceptance_log.append((n, line))
    assert ok, line


if __name__ == "__main__":
    results = [run(n)[0] for n in sorted(CRITERIA)]
    sys.exit(0 if all(results) else 1)
