"""One-pass-evaluation metrics: success, precision and normalized precision curves."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import NothingToEvaluateError
from .geometry import Box, iou

SUCCESS_THRESHOLDS = np.round(np.arange(101) * 0.01, 2)
PRECISION_THRESHOLDS = np.arange(51, dtype=float)
NORM_PRECISION_THRESHOLDS = np.round(np.arange(51) * 0.01, 2)


@dataclass
class MetricCurve:
    thresholds: np.ndarray
    values: np.ndarray
    auc: float

    def at(self, threshold: float) -> float:
        i = int(np.argmin(np.abs(self.thresholds - threshold)))
        return float(self.values[i])


def _box(p):
    return getattr(p, "box", p)


def _aligned(preds, gts):
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions for {len(gts)} ground-truth frames")
    pairs = [(_box(p), g) for p, g in zip(preds, gts) if g is not None]
    if not pairs:
        raise NothingToEvaluateError("no frame has a ground-truth box")
    return pairs


def frame_ious(preds, gts) -> np.ndarray:
    """IoU per present ground-truth frame; a missing prediction scores 0."""
    return np.array([0.0 if p is None else iou(p, g) for p, g in _aligned(preds, gts)])


def center_errors(preds, gts, normalized: bool = False) -> np.ndarray:
    out = []
    for p, g in _aligned(preds, gts):
        if p is None:
            out.append(math.inf)
            continue
        (px, py), (gx, gy) = p.center, g.center
        dx, dy = px - gx, py - gy
        if normalized:
            dx, dy = dx / g.width, dy / g.height
        out.append(math.hypot(dx, dy))
    return np.array(out)


def _curve(thresholds, values) -> MetricCurve:
    return MetricCurve(thresholds, values, float(values.mean()))


def success_curve(preds, gts) -> MetricCurve:
    ious = frame_ious(preds, gts)
    values = (ious[None, :] > SUCCESS_THRESHOLDS[:, None]).mean(axis=1)
    return _curve(SUCCESS_THRESHOLDS, values)


def precision_curve(preds, gts, normalized: bool = False) -> MetricCurve:
    errors = center_errors(preds, gts, normalized)
    thresholds = NORM_PRECISION_THRESHOLDS if normalized else PRECISION_THRESHOLDS
    values = (errors[None, :] <= thresholds[:, None]).mean(axis=1)
    return _curve(thresholds, values)


@dataclass
class IoUSeries:
    ious: list  # per frame; None where the target is absent
    absent_spans: list  # inclusive (start, end) frame indices


def iou_over_time(preds, gts) -> IoUSeries:
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions for {len(gts)} ground-truth frames")
    series, spans = [], []
    start = None
    for t, (p, g) in enumerate(zip(preds, gts)):
        p = _box(p)
        if g is None:
            series.append(None)
            if start is None:
                start = t
            continue
        if start is not None:
            spans.append((start, t - 1))
            start = None
        series.append(0.0 if p is None else iou(p, g))
    if start is not None:
        spans.append((start, len(gts) - 1))
    return IoUSeries(series, spans)


@dataclass
class Report:
    success: MetricCurve
    precision: MetricCurve
    norm_precision: MetricCurve

    @property
    def summary(self) -> dict[str, float]:
        return {
            "success_auc": self.success.auc,
            "precision_at_20": self.precision.at(20),
            "precision_auc": self.precision.auc,
            "norm_precision_auc": self.norm_precision.auc,
        }


def evaluate_video(preds, gts) -> Report:
    return Report(success_curve(preds, gts), precision_curve(preds, gts), precision_curve(preds, gts, True))


def _mean_curve(curves: Sequence[MetricCurve]) -> MetricCurve:
    values = np.mean([c.values for c in curves], axis=0)
    return _curve(curves[0].thresholds, values)


def evaluate_dataset(results: Sequence[tuple[Sequence, Sequence]]) -> Report:
    """Average per-video curves pointwise over ``(preds, gts)`` pairs.

    Videos with no present ground truth are skipped.
    """
    reports = []
    for preds, gts in results:
        try:
            reports.append(evaluate_video(preds, gts))
        except NothingToEvaluateError:
            continue
    if not reports:
        raise NothingToEvaluateError("no video has a ground-truth box")
    return Report(
        _mean_curve([r.success for r in reports]),
        _mean_curve([r.precision for r in reports]),
        _mean_curve([r.norm_precision for r in reports]),
    )


def write_report(report: Report, out_dir) -> Path:
    """One ``threshold,value`` CSV per curve plus ``summary.txt`` with ``key=value`` lines."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, curve in (("success", report.success), ("precision", report.precision),
                        ("norm_precision", report.norm_precision)):
        with open(out / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["threshold", "value"])
            for t, v in zip(curve.thresholds, curve.values):
                w.writerow([f"{t:g}", repr(float(v))])
    (out / "summary.txt").write_text("".join(f"{k}={v!r}\n" for k, v in report.summary.items()))
    return out


def read_summary(path) -> dict[str, float]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = float(v)
    return out


def plot_report(out_dir) -> Path:
    """Render the report CSVs in ``out_dir`` to ``curves.png``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))
    for ax, name, xlabel in zip(axes, ("success", "precision", "norm_precision"),
                                ("overlap threshold", "location error threshold (px)", "normalized error threshold")):
        rows = np.loadtxt(out / f"{name}.csv", delimiter=",", skiprows=1)
        ax.plot(rows[:, 0], rows[:, 1])
        ax.set_title(f"{name} (AUC {rows[:, 1].mean():.3f})")
        ax.set_xlabel(xlabel)
        ax.set_ylim(0, 1.02)
    fig.tight_layout()
    fig.savefig(out / "curves.png", dpi=100)
    plt.close(fig)
    return out / "curves.png"
