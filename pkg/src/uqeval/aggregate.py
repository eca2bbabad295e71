"""Collapse prediction tensors into per-sample predictive summaries.

All three aggregation schemes (MC-dropout, ensemble, ensemble-MC-dropout)
reduce the pass axis to a single predictive mean per sample and score its
predictive entropy. MCD and ensemble average over the full pass axis; EMCD
first averages within each member's passes and then averages the member
means, which coincides with the grand mean when every member contributed
the same number of passes.

Entropy defaults to base 2 and is reported both raw and normalized by
``log2(C)`` so uncertainty thresholds live on [0, 1] for any class count.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ValidationError
from .tensor import PredictionTensor

MEAN_SUM_TOL = 1e-9

# Clamp applies inside the log only, so 0 * log(0) evaluates to exactly 0.
LOG_CLAMP = 1e-300

SCHEME_KINDS = ("mcd", "ensemble", "emcd")
LOG_BASES = ("2", "e")


@dataclass(frozen=True)
class AggregationScheme:
    """How a tensor's pass axis maps to an aggregation rule.

    ``member_pass_counts`` is required for EMCD and partitions the pass
    axis into consecutive per-member blocks; it must sum to the tensor's
    pass count.
    """

    kind: str
    member_pass_counts: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValidationError(f"unknown scheme kind {self.kind!r}; expected one of {SCHEME_KINDS}")
        if self.kind == "emcd":
            parts = self.member_pass_counts
            if not parts:
                raise ValidationError("emcd requires member_pass_counts")
            parts = tuple(int(p) for p in parts)
            if any(p < 1 for p in parts):
                raise ValidationError(f"every member needs at least one pass, got {parts}")
            object.__setattr__(self, "member_pass_counts", parts)
        elif self.member_pass_counts is not None:
            raise ValidationError(f"{self.kind} does not take member_pass_counts")


MCD = AggregationScheme("mcd")
ENSEMBLE = AggregationScheme("ensemble")


def emcd_scheme(member_pass_counts) -> AggregationScheme:
    return AggregationScheme("emcd", tuple(member_pass_counts))


@dataclass(frozen=True, eq=False)
class PredictiveSummary:
    """Per-sample aggregate: predictive mean, predicted class, entropy."""

    sample_id: str
    mean: np.ndarray
    predicted_class: int
    confidence: float
    entropy: float
    normalized_entropy: float

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        mean.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        if abs(float(mean.sum()) - 1.0) > MEAN_SUM_TOL:
            raise ValidationError(
                f"summary mean for {self.sample_id!r} sums to {mean.sum():.12g}"
            )
        if self.predicted_class != int(np.argmax(mean)):
            raise ValidationError("predicted_class must be the argmax of the mean")
        if self.confidence != float(mean[self.predicted_class]):
            raise ValidationError("confidence must be the mean's argmax component")
        if not 0.0 <= self.normalized_entropy <= 1.0:
            raise ValidationError(
                f"normalized entropy {self.normalized_entropy} outside [0, 1]"
            )
        if self.entropy < 0.0:
            raise ValidationError(f"entropy {self.entropy} is negative")


def predictive_mean(rows: np.ndarray) -> np.ndarray:
    """Arithmetic mean of T probability rows, renormalized to sum exactly 1.

    Input rows may individually deviate from sum 1 by the ingestion
    tolerance; dividing the mean by its own sum restores the tighter
    summary-level invariant without moving any component more than the
    ingestion tolerance allows.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[np.newaxis, :]
    if rows.ndim != 2 or rows.shape[0] < 1:
        raise ValidationError("need at least one probability row")
    mean = rows.mean(axis=0)
    total = float(mean.sum())
    if abs(total - 1.0) > 1e-5:
        raise ValidationError(f"mean of rows sums to {total:.9g}, not 1")
    return mean / total


def predictive_entropy(mean: np.ndarray, base: str = "2") -> float:
    """Entropy of a predictive mean: ``-sum(p * log p)`` with 0·log 0 = 0.

    ``base`` selects log2 (default) or the natural log. Smaller values mean
    a more confident prediction; the maximum is ``log(C)`` at the uniform
    distribution.
    """
    mean = np.asarray(mean, dtype=np.float64)
    if abs(float(mean.sum()) - 1.0) > MEAN_SUM_TOL or np.any(mean < 0):
        raise ValidationError(f"entropy input must be a normalized probability vector, got sum {mean.sum():.12g}")
    log = _log_fn(base)
    value = float(-np.sum(mean * log(np.clip(mean, LOG_CLAMP, 1.0))))
    return max(value, 0.0)


def max_entropy(n_classes: int, base: str = "2") -> float:
    return float(_log_fn(base)(n_classes))


def _log_fn(base: str):
    if base == "2":
        return np.log2
    if base == "e":
        return np.log
    raise ValueError(f"log base must be one of {LOG_BASES}, got {base!r}")


def summarize_mean(sample_id: str, mean: np.ndarray, n_classes: int, base: str = "2") -> PredictiveSummary:
    """Build a validated summary from an already-aggregated mean vector."""
    predicted = int(np.argmax(mean))  # np.argmax already breaks ties low
    entropy = predictive_entropy(mean, base)
    normalized = min(entropy / max_entropy(n_classes, base), 1.0)
    return PredictiveSummary(
        sample_id=str(sample_id),
        mean=mean,
        predicted_class=predicted,
        confidence=float(mean[predicted]),
        entropy=entropy,
        normalized_entropy=normalized,
    )


def aggregate(tensor: PredictionTensor, scheme: AggregationScheme, base: str = "2") -> list[PredictiveSummary]:
    """One :class:`PredictiveSummary` per sample under the given scheme."""
    if scheme.kind == "emcd":
        parts = scheme.member_pass_counts
        if sum(parts) != tensor.n_passes:
            raise ValidationError(
                f"partition {parts} sums to {sum(parts)} but tensor has {tensor.n_passes} passes"
            )
        bounds = np.cumsum((0,) + parts)
        member_means = [
            tensor.probs[:, bounds[k]:bounds[k + 1], :].mean(axis=1)
            for k in range(len(parts))
        ]
        means = np.mean(member_means, axis=0)
    else:
        means = tensor.probs.mean(axis=1)
    means = means / means.sum(axis=1, keepdims=True)
    return [
        summarize_mean(sid, means[i], tensor.n_classes, base)
        for i, sid in enumerate(tensor.sample_ids)
    ]


def pass_variance(rows: np.ndarray) -> np.ndarray:
    """Unbiased per-class variance across the pass rows of one sample."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise ValidationError("pass variance needs at least two passes")
    return rows.var(axis=0, ddof=1)


SUMMARY_FLOAT_FORMAT = "%.17g"


def save_summaries(summaries: list[PredictiveSummary], path, header_comment: str | None = None) -> None:
    """CSV export: ``sample_id,predicted_class,confidence,entropy,normalized_entropy,p_0..p_{C-1}``."""
    if not summaries:
        raise ValidationError("no summaries to save")
    n_classes = len(summaries[0].mean)
    buf = io.StringIO()
    if header_comment is not None:
        buf.write(f"# {header_comment}\n")
    cols = ",".join(f"p_{c}" for c in range(n_classes))
    buf.write(f"sample_id,predicted_class,confidence,entropy,normalized_entropy,{cols}\n")
    fmt = SUMMARY_FLOAT_FORMAT
    for s in summaries:
        mean = ",".join(fmt % v for v in s.mean)
        buf.write(
            f"{s.sample_id},{s.predicted_class},{fmt % s.confidence},"
            f"{fmt % s.entropy},{fmt % s.normalized_entropy},{mean}\n"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(buf.getvalue())


def load_summaries(path) -> list[PredictiveSummary]:
    """Parse a summaries CSV written by :func:`save_summaries`."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = [
            (i, line.rstrip("\r\n"))
            for i, line in enumerate(fh, start=1)
            if line.strip() and not line.startswith("#")
        ]
    if not lines:
        raise FormatError(f"{path}: empty summaries file")
    header = next(csv.reader([lines[0][1]]))
    fixed = ["sample_id", "predicted_class", "confidence", "entropy", "normalized_entropy"]
    if header[: len(fixed)] != fixed or len(header) < len(fixed) + 2:
        raise FormatError(f"{path}: unexpected summaries header {header}")
    n_classes = len(header) - len(fixed)
    out = []
    for lineno, raw in lines[1:]:
        cells = next(csv.reader([raw]))
        if len(cells) != len(header):
            raise FormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(cells)}")
        try:
            mean = np.array([float(c) for c in cells[len(fixed):]], dtype=np.float64)
            out.append(
                PredictiveSummary(
                    sample_id=cells[0],
                    mean=mean,
                    predicted_class=int(cells[1]),
                    confidence=float(cells[2]),
                    entropy=float(cells[3]),
                    normalized_entropy=float(cells[4]),
                )
            )
        except (ValueError, ValidationError) as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
    if any(len(s.mean) != n_classes for s in out):
        raise FormatError(f"{path}: inconsistent class counts")
    return out
