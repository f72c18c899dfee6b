import csv
import json
from fractions import Fraction

import numpy as np
import pytest

from ripeline.data import ManifestRecord
from ripeline.evaluation import (
    BinaryCounts,
    ClassReport,
    ConfusionCounts,
    ReportInputError,
    UndefinedMetricError,
    emit_report,
    evaluate,
    f1,
    macro_scores,
    per_class_accuracy,
    precision,
    recall,
    recall_from_precision_f1,
    round_half_up,
)
from ripeline.imaging import RgbImage
from ripeline.maturity import MaturityClass

REFERENCE_COUNTS = [("class1", 800, 787), ("class2", 760, 735), ("class3", 425, 413), ("class4", 390, 375), ("class5", 625, 602)]


def brute_counts(truth, pred, cls):
    tp = fp = fn = 0
    for t, p in zip(truth, pred):
        if t == cls and p == cls:
            tp += 1
        elif t != cls and p == cls:
            fp += 1
        elif t == cls and p != cls:
            fn += 1
    return tp, fp, fn


def test_basic_rates():
    c = BinaryCounts(tp=1, fp=0, fn=0)
    assert precision(c) == recall(c) == f1(c) == 1.0
    assert precision(BinaryCounts(0, 5, 0)) == 0.0
    assert recall(BinaryCounts(0, 0, 5)) == 0.0
    with pytest.raises(UndefinedMetricError):
        f1(BinaryCounts(0, 5, 5))
    with pytest.raises(UndefinedMetricError):
        precision(BinaryCounts(0, 0, 3))
    with pytest.raises(UndefinedMetricError):
        recall(BinaryCounts(0, 3, 0))
    with pytest.raises(ValueError):
        BinaryCounts(-1, 0, 0)


def test_f1_formula():
    c = BinaryCounts(tp=7, fp=3, fn=5)
    p, r = Fraction(7, 10), Fraction(7, 12)
    assert f1(c) == float(2 * p * r / (p + r))


def test_recall_inversion_reference():
    r = recall_from_precision_f1(0.9338, 0.9577)
    assert 0.9825 <= r <= 0.9833
    p = 0.9338
    assert 2 * p * r / (p + r) == pytest.approx(0.9577, abs=1e-12)


def test_against_brute_force_oracle():
    rng = np.random.default_rng(0)
    for _ in range(300):
        n = int(rng.integers(1, 201))
        truth, pred = rng.integers(0, 5, n), rng.integers(0, 5, n)
        cc = ConfusionCounts.from_labels(truth, pred)
        assert np.array_equal(cc.matrix.sum(axis=1), np.bincount(truth, minlength=5))
        for k in range(5):
            tp, fp, fn = brute_counts(truth.tolist(), pred.tolist(), k)
            b = cc.for_class(k)
            assert (b.tp, b.fp, b.fn) == (tp, fp, fn)
            if tp + fp:
                assert precision(b) == tp / (tp + fp)
            if tp + fn:
                assert recall(b) == tp / (tp + fn)


def test_macro_f1_permutation_invariant():
    rng = np.random.default_rng(1)
    for _ in range(50):
        truth, pred = rng.integers(0, 5, 120), rng.integers(0, 5, 120)
        perm = rng.permutation(5)
        a = macro_scores(ConfusionCounts.from_labels(truth, pred))
        b = macro_scores(ConfusionCounts.from_labels(perm[truth], perm[pred]))
        if a["macro_f1"] is None:
            assert b["macro_f1"] is None
        else:
            assert b["macro_f1"] == pytest.approx(a["macro_f1"], abs=1e-15)


def test_macro_undefined_is_none():
    m = macro_scores(ConfusionCounts.from_labels([0, 1, 2, 3], [0, 1, 2, 3]))
    assert m["macro_f1"] is None and m["per_class_f1"][4] is None
    assert m["per_class_f1"][:4] == [1.0] * 4


def test_round_half_up():
    assert str(round_half_up(96.145)) == "96.15"
    assert str(round_half_up(Fraction(96145, 1000))) == "96.15"
    assert str(round_half_up(Fraction(2912, 30))) == "97.07"
    assert str(round_half_up(0.125, 2)) == "0.13"


def test_reference_accuracies():
    rep = per_class_accuracy(REFERENCE_COUNTS)
    assert [c.accuracy_pct for c in rep.classes] == [98.38, 96.71, 97.18, 96.15, 96.32]
    assert (rep.overall.total, rep.overall.correct, rep.overall.accuracy_pct) == (3000, 2912, 97.07)
    assert rep.overall.accuracy_exact == pytest.approx(97.0666666, abs=1e-6)
    assert min(c.accuracy_pct for c in rep.classes) == 96.15
    assert max(c.accuracy_pct for c in rep.classes) == 98.38


def test_report_input_errors():
    with pytest.raises(ReportInputError):
        per_class_accuracy([("a", 0, 0)])
    with pytest.raises(ReportInputError):
        per_class_accuracy({"a": (3, 4)})
    with pytest.raises(ReportInputError):
        per_class_accuracy([])


def test_emit_csv(tmp_path):
    path = emit_report(per_class_accuracy(REFERENCE_COUNTS), "csv", tmp_path / "r.csv")
    text = path.read_text()
    assert "class1,800,787,98.38\n" in text
    rows = list(csv.reader(text.splitlines()))
    assert rows[0] == ["class", "total", "correct", "accuracy_pct"]
    assert rows[-1] == ["overall", "3000", "2912", "97.07"]


def test_emit_json_canonical(tmp_path):
    rep = per_class_accuracy(REFERENCE_COUNTS)
    first = emit_report(rep, "json", tmp_path / "a.json").read_bytes()
    again = ClassReport.from_dict(json.loads(first))
    assert emit_report(again, "json", tmp_path / "b.json").read_bytes() == first


def test_emit_svg(tmp_path):
    svg = emit_report(per_class_accuracy(REFERENCE_COUNTS), "svg", tmp_path / "r.svg").read_text()
    assert svg.startswith("<svg") and svg.count("<rect") == 5
    assert ">90<" in svg and ">100<" in svg and "98.38" in svg


def test_emit_errors(tmp_path):
    with pytest.raises(ValueError):
        emit_report(per_class_accuracy(REFERENCE_COUNTS), "xml", tmp_path / "r.xml")
    with pytest.raises(OSError):
        emit_report(per_class_accuracy(REFERENCE_COUNTS), "json", tmp_path / "missing" / "r.json")


def records(n_per_class):
    return [ManifestRecord(f"{c.label}/{i}", c) for i in range(n_per_class) for c in MaturityClass]


def fake_loader(record):
    return RgbImage(np.full((4, 4, 3), int(record.label), dtype=np.uint8))


def test_evaluate_perfect_model():
    perfect = lambda images: [int(img.data[0, 0, 0]) for img in images]
    res = evaluate(perfect, records(4), loader=fake_loader)
    assert all(c.accuracy_pct == 100.0 for c in res.report.classes)
    assert res.report.overall.accuracy_pct == 100.0
    assert res.macro["macro_f1"] == 1.0


def test_evaluate_constant_model():
    res = evaluate(lambda images: [2] * len(images), records(6), loader=fake_loader)
    assert res.report.overall.accuracy_pct == 20.0


def test_evaluate_records_failures():
    recs = records(2)

    def loader(r):
        if r.path.endswith("/1") and r.label == MaturityClass.PINK:
            raise OSError("unreadable")
        return fake_loader(r)

    res = evaluate(lambda images: [int(i.data[0, 0, 0]) for i in images], recs, loader=loader)
    assert len(res.failures) == 1 and res.to_dict()["evaluated"] == 9
    with pytest.raises(ReportInputError):
        evaluate(lambda images: [], [], loader=fake_loader)
