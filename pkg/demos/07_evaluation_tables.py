"""
Metrics and report tables
=========================

Precision, recall and F1 from integer counts, a per-class accuracy table
with half-up rounding, and the three report formats.
"""

# %%
import tempfile
from pathlib import Path

from ripeline.evaluation import (
    BinaryCounts,
    UndefinedMetricError,
    emit_report,
    f1,
    per_class_accuracy,
    precision,
    recall,
    recall_from_precision_f1,
)

c = BinaryCounts(tp=45, fp=5, fn=3)
print(f"P={precision(c):.4f} R={recall(c):.4f} F1={f1(c):.4f}")

try:
    f1(BinaryCounts(tp=0, fp=4, fn=4))
except UndefinedMetricError as exc:
    print("undefined:", exc)

# %%
# Given a precision and an F1 score, recall follows from the harmonic mean.
print("recall from P=0.9338, F1=0.9577:", round(recall_from_precision_f1(0.9338, 0.9577), 4))

# %%
report = per_class_accuracy({
    "class1": (800, 787),
    "class2": (760, 735),
    "class3": (425, 413),
    "class4": (390, 375),
    "class5": (625, 602),
})
for row in (*report.classes, report.overall):
    print(f"{row.name:>8} {row.correct:4d}/{row.total:<4d} {row.accuracy_pct:6.2f}%  (exact {row.accuracy_exact:.4f})")

out = Path(tempfile.mkdtemp())
for fmt in ("json", "csv", "svg"):
    print("wrote", emit_report(report, fmt, out / f"report.{fmt}"))
print((out / "report.csv").read_text())
