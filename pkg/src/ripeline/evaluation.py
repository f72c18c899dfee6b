"""Precision / recall / F1, per-class accuracy tables and report rendering.

Rates are computed from integer counts with exact rational arithmetic and
converted to float once at the end. Undefined rates (zero denominators)
raise :class:`UndefinedMetricError` instead of silently becoming 0.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .maturity import NUM_CLASSES, MaturityClass

__all__ = [
    "UndefinedMetricError",
    "ReportInputError",
    "BinaryCounts",
    "ConfusionCounts",
    "ClassRow",
    "ClassReport",
    "EvaluationResult",
    "precision",
    "recall",
    "f1",
    "recall_from_precision_f1",
    "macro_scores",
    "round_half_up",
    "per_class_accuracy",
    "evaluate",
    "emit_report",
]


class UndefinedMetricError(ZeroDivisionError):
    pass


class ReportInputError(ValueError):
    pass


@dataclass(frozen=True)
class BinaryCounts:
    tp: int
    fp: int
    fn: int
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("counts must be non-negative")


def _precision(c) -> Fraction:
    if c.tp + c.fp == 0:
        raise UndefinedMetricError("precision undefined: TP + FP = 0")
    return Fraction(c.tp, c.tp + c.fp)


def _recall(c) -> Fraction:
    if c.tp + c.fn == 0:
        raise UndefinedMetricError("recall undefined: TP + FN = 0")
    return Fraction(c.tp, c.tp + c.fn)


def _f1(c) -> Fraction:
    p, r = _precision(c), _recall(c)
    if p + r == 0:
        raise UndefinedMetricError("F1 undefined: P + R = 0")
    return 2 * p * r / (p + r)


def precision(counts) -> float:
    """``TP / (TP + FP)``."""
    return float(_precision(counts))


def recall(counts) -> float:
    """``TP / (TP + FN)``."""
    return float(_recall(counts))


def f1(counts) -> float:
    """``2PR / (P + R)``."""
    return float(_f1(counts))


def recall_from_precision_f1(p: float, f1_score: float) -> float:
    """Invert the F1 formula: the recall implied by a precision and an F1."""
    denom = 2 * p - f1_score
    if denom <= 0:
        raise UndefinedMetricError("no recall is consistent with these values")
    return p * f1_score / denom


@dataclass(frozen=True)
class ConfusionCounts:
    """Multi-class confusion matrix (rows = truth, columns = prediction)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.int64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("confusion matrix must be square")
        if (m < 0).any():
            raise ValueError("confusion matrix entries must be non-negative")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_labels(cls, truth: Sequence[int], pred: Sequence[int], n_classes: int = NUM_CLASSES):
        m = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(m, (np.asarray(truth, dtype=np.int64), np.asarray(pred, dtype=np.int64)), 1)
        return cls(m)

    @property
    def n_classes(self) -> int:
        return self.matrix.shape[0]

    @property
    def tp(self) -> np.ndarray:
        return np.diag(self.matrix).copy()

    @property
    def fp(self) -> np.ndarray:
        return self.matrix.sum(axis=0) - np.diag(self.matrix)

    @property
    def fn(self) -> np.ndarray:
        return self.matrix.sum(axis=1) - np.diag(self.matrix)

    @property
    def support(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    def for_class(self, i: int) -> BinaryCounts:
        total = int(self.matrix.sum())
        tp, fp, fn = int(self.tp[i]), int(self.fp[i]), int(self.fn[i])
        return BinaryCounts(tp, fp, fn, total - tp - fp - fn)

    def to_dict(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "tp": self.tp.tolist(),
            "fp": self.fp.tolist(),
            "fn": self.fn.tolist(),
        }


def _safe(fn, c):
    try:
        return fn(c)
    except UndefinedMetricError:
        return None


def macro_scores(counts: ConfusionCounts) -> dict:
    """Unweighted means of the per-class precision, recall and F1.

    A macro value is ``None`` when any class has that metric undefined; the
    per-class values (``None`` where undefined) are returned alongside.
    """
    out = {}
    for name, fn in (("precision", _precision), ("recall", _recall), ("f1", _f1)):
        vals = [_safe(fn, counts.for_class(i)) for i in range(counts.n_classes)]
        out[f"per_class_{name}"] = [None if v is None else float(v) for v in vals]
        out[f"macro_{name}"] = None if any(v is None for v in vals) else float(sum(vals) / len(vals))
    return out


def round_half_up(value, places: int = 2) -> Decimal:
    """Round half away from zero on the decimal representation of ``value``."""
    if isinstance(value, Fraction):
        d = Decimal(value.numerator) / Decimal(value.denominator)
    elif isinstance(value, float):
        d = Decimal(repr(value))
    else:
        d = Decimal(value)
    return d.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)


@dataclass(frozen=True)
class ClassRow:
    name: str
    total: int
    correct: int

    def __post_init__(self):
        if self.total < 1:
            raise ReportInputError(f"{self.name}: total must be >= 1")
        if not 0 <= self.correct <= self.total:
            raise ReportInputError(f"{self.name}: correct must lie in [0, total]")

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.correct, self.total)

    @property
    def accuracy_pct(self) -> float:
        return float(round_half_up(self.ratio * 100))

    @property
    def accuracy_exact(self) -> float:
        return float(self.ratio * 100)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "total": self.total,
            "correct": self.correct,
            "accuracy_pct": self.accuracy_pct,
            "accuracy_exact": self.accuracy_exact,
        }


@dataclass(frozen=True)
class ClassReport:
    classes: tuple[ClassRow, ...]

    @property
    def overall(self) -> ClassRow:
        return ClassRow("overall", sum(c.total for c in self.classes), sum(c.correct for c in self.classes))

    def __getitem__(self, name: str) -> ClassRow:
        for c in self.classes:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"classes": [c.to_dict() for c in self.classes], "overall": self.overall.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "ClassReport":
        return cls(tuple(ClassRow(c["name"], c["total"], c["correct"]) for c in d["classes"]))


def per_class_accuracy(counts: Mapping[str, tuple[int, int]] | Sequence[tuple[str, int, int]]) -> ClassReport:
    """Per-class and overall accuracy from ``{name: (total, correct)}``.

    Percentages are rounded half-up to two decimals; the exact ratio is kept
    as ``accuracy_exact``.
    """
    if isinstance(counts, Mapping):
        rows = [ClassRow(name, int(t), int(c)) for name, (t, c) in counts.items()]
    else:
        rows = [ClassRow(name, int(t), int(c)) for name, t, c in counts]
    if not rows:
        raise ReportInputError("no classes given")
    return ClassReport(tuple(rows))


@dataclass
class EvaluationResult:
    counts: ConfusionCounts
    report: ClassReport | None
    macro: dict
    failures: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "confusion": self.counts.to_dict(),
            "report": self.report.to_dict() if self.report else None,
            "macro": self.macro,
            "failures": self.failures,
            "evaluated": int(self.counts.matrix.sum()),
        }


def _predictor(model) -> Callable:
    if callable(model) and not hasattr(model, "params"):
        return model
    from .classifier import predict_proba

    return lambda images: predict_proba(model, images).argmax(axis=1)


def evaluate(model, records, loader: Callable | None = None, batch_size: int = 64) -> EvaluationResult:
    """Classify every record and tabulate the results.

    ``model`` is a trained classifier or any callable mapping a list of
    images to predicted class ids. ``records`` are manifest records (use
    ``manifest.in_split("val")``). Records that fail to load are listed in
    ``failures`` and excluded.
    """
    from .data import load_record_image

    records = list(records)
    if not records:
        raise ReportInputError("no records to evaluate")
    loader = loader or load_record_image
    predict = _predictor(model)
    truth, pred, failures = [], [], []
    for start in range(0, len(records), batch_size):
        chunk, images = [], []
        for r in records[start : start + batch_size]:
            try:
                images.append(loader(r))
                chunk.append(r)
            except Exception as exc:  # noqa: BLE001 - any decode failure is recorded
                failures.append({"path": r.path, "error": f"{type(exc).__name__}: {exc}"})
        if not images:
            continue
        preds = np.asarray(predict(images), dtype=np.int64)
        truth.extend(int(r.label) for r in chunk)
        pred.extend(preds.tolist())
    counts = ConfusionCounts.from_labels(truth, pred)
    present = [c for c in MaturityClass if counts.support[c] > 0]
    report = None
    if present:
        report = per_class_accuracy([(c.label, int(counts.support[c]), int(counts.tp[c])) for c in present])
    return EvaluationResult(counts, report, macro_scores(counts), failures)


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _csv_text(report: ClassReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class", "total", "correct", "accuracy_pct"])
    for row in (*report.classes, report.overall):
        w.writerow([row.name, row.total, row.correct, f"{round_half_up(row.ratio * 100)}"])
    return buf.getvalue()


def _svg_text(report: ClassReport, lo: float = 90.0, hi: float = 100.0) -> str:
    width, height, margin = 60 + 70 * len(report.classes), 260, 40
    plot_h = height - 2 * margin
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - 10}" y2="{height - margin}" stroke="black"/>',
    ]
    for tick in range(int(lo), int(hi) + 1, 2):
        y = height - margin - (tick - lo) / (hi - lo) * plot_h
        parts.append(f'<text x="{margin - 6}" y="{y + 4:.1f}" font-size="10" text-anchor="end">{tick}</text>')
    for i, row in enumerate(report.classes):
        v = min(max(row.accuracy_pct, lo), hi)
        bar_h = (v - lo) / (hi - lo) * plot_h
        x = margin + 15 + 70 * i
        y = height - margin - bar_h
        parts.append(f'<rect x="{x}" y="{y:.1f}" width="40" height="{bar_h:.1f}" fill="#c0392b"/>')
        parts.append(f'<text x="{x + 20}" y="{y - 4:.1f}" font-size="10" text-anchor="middle">{row.accuracy_pct:.2f}</text>')
        parts.append(f'<text x="{x + 20}" y="{height - margin + 14}" font-size="10" text-anchor="middle">{row.name}</text>')
    parts.append("</svg>\n")
    return "\n".join(parts)


def emit_report(report, fmt: str, path) -> Path:
    """Write ``report`` as ``json``, ``csv`` or ``svg`` (bar chart, axis 90-100).

    ``report`` may be a :class:`ClassReport` or an :class:`EvaluationResult`;
    csv and svg render the per-class table in both cases.
    """
    table = report.report if isinstance(report, EvaluationResult) else report
    if fmt == "json":
        text = _canonical_json(report.to_dict())
    elif fmt == "csv":
        text = _csv_text(table)
    elif fmt == "svg":
        text = _svg_text(table)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path
