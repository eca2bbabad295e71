"""Expected calibration error over equal-width confidence bins.

Confidence is the max component of the aggregated predictive mean. Bin m of
M covers the half-open interval ((m-1)/M, m/M]; confidence 0 falls into bin
1. ECE is the count-weighted mean absolute gap between per-bin accuracy and
per-bin confidence; empty bins carry weight 0.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .aggregate import PredictiveSummary
from .errors import ValidationError
from .tensor import LabelSet, aligned_labels


def bin_edges(n_bins: int) -> np.ndarray:
    """The M+1 boundaries m/M for m in 0..M."""
    if n_bins < 1:
        raise ValidationError("need at least one bin")
    return np.arange(n_bins + 1, dtype=np.float64) / n_bins


def bin_assign(confidence: float, n_bins: int) -> int:
    """1-based bin index of a confidence in [0, 1]."""
    if not 0.0 <= confidence <= 1.0:
        raise ValidationError(f"confidence {confidence} outside [0, 1]")
    edges = bin_edges(n_bins)
    # smallest m >= 1 with confidence <= edges[m]
    idx = int(np.searchsorted(edges[1:], confidence, side="left")) + 1
    return min(idx, n_bins)


@dataclass(frozen=True)
class CalibrationBin:
    """One confidence interval with its sample count, accuracy, and confidence."""

    index: int
    lo: float
    hi: float
    count: int
    accuracy: float | None
    confidence: float | None

    def __post_init__(self):
        if self.count < 0:
            raise ValidationError("bin count is negative")
        if (self.count > 0) != (self.accuracy is not None):
            raise ValidationError("accuracy must be set exactly when the bin is nonempty")
        if (self.count > 0) != (self.confidence is not None):
            raise ValidationError("confidence must be set exactly when the bin is nonempty")

    @property
    def gap(self) -> float | None:
        if self.count == 0:
            return None
        return abs(self.accuracy - self.confidence)

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class CalibrationReport:
    n_bins: int
    bins: tuple[CalibrationBin, ...]
    ece: float
    n: int

    def __post_init__(self):
        if sum(b.count for b in self.bins) != self.n:
            raise ValidationError("bin counts must sum to the sample count")
        recomputed = sum(
            (b.count / self.n) * b.gap for b in self.bins if b.count > 0
        )
        if abs(recomputed - self.ece) > 1e-12:
            raise ValidationError(
                f"ece {self.ece} disagrees with its bin recomposition {recomputed}"
            )


def calibration_report(summaries: list[PredictiveSummary], labels: LabelSet,
                       n_bins: int = 10) -> CalibrationReport:
    """Bin samples by confidence and compute per-bin accuracy, confidence, ECE."""
    if not summaries:
        raise ValidationError("no summaries to calibrate")
    if n_bins < 1:
        raise ValidationError("need at least one bin")
    ids = [s.sample_id for s in summaries]
    truth = aligned_labels(ids, labels)
    predicted = np.array([s.predicted_class for s in summaries], dtype=np.int64)
    confidence = np.array([s.confidence for s in summaries], dtype=np.float64)
    correct = (predicted == truth).astype(np.float64)

    edges = bin_edges(n_bins)
    indices = np.minimum(np.searchsorted(edges[1:], confidence, side="left") + 1, n_bins)

    n = len(summaries)
    bins = []
    ece = 0.0
    for m in range(1, n_bins + 1):
        mask = indices == m
        count = int(mask.sum())
        if count:
            # summing in sorted order makes the result independent of sample order
            acc = float(np.sort(correct[mask]).sum() / count)
            conf = float(np.sort(confidence[mask]).sum() / count)
            ece += (count / n) * abs(acc - conf)
        else:
            acc = conf = None
        bins.append(CalibrationBin(m, float(edges[m - 1]), float(edges[m]), count, acc, conf))
    return CalibrationReport(n_bins=n_bins, bins=tuple(bins), ece=ece, n=n)


def reliability_diagram_data(report: CalibrationReport) -> list[dict]:
    """One row per bin (including empty ones) for reliability plotting."""
    return [
        {
            "bin": b.index,
            "midpoint": b.midpoint,
            "lo": b.lo,
            "hi": b.hi,
            "count": b.count,
            "accuracy": b.accuracy,
            "confidence": b.confidence,
            "gap": None if b.count == 0 else b.accuracy - b.confidence,
        }
        for b in report.bins
    ]


RELIABILITY_HEADER = "bin,lo,hi,count,accuracy,confidence,gap"


def save_reliability(report: CalibrationReport, path, header_comment: str | None = None) -> None:
    """Reliability CSV with ``n/a`` rendered for empty bins."""

    def cell(value):
        return "n/a" if value is None else "%.17g" % value

    buf = io.StringIO()
    if header_comment is not None:
        buf.write(f"# {header_comment}\n")
    buf.write(RELIABILITY_HEADER + "\n")
    for row in reliability_diagram_data(report):
        buf.write(
            f"{row['bin']},{cell(row['lo'])},{cell(row['hi'])},{row['count']},"
            f"{cell(row['accuracy'])},{cell(row['confidence'])},{cell(row['gap'])}\n"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(buf.getvalue())


def calibration_as_dict(report: CalibrationReport) -> dict:
    return {
        "ece": report.ece,
        "n": report.n,
        "M": report.n_bins,
        "bins": [
            {
                "bin": b.index,
                "lo": b.lo,
                "hi": b.hi,
                "count": b.count,
                "accuracy": b.accuracy,
                "confidence": b.confidence,
                "gap": b.gap,
            }
            for b in report.bins
        ],
    }
