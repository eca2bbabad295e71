"""Uncertainty confusion matrix and its derived metrics.

Each prediction is crossed by correctness (predicted class vs. label) and
certainty (uncertainty score vs. threshold, uncertain iff ``u >= t``) into
one of four outcomes:

* TC - correct and certain (the favourable diagonal, with TU);
* TU - incorrect and uncertain;
* FU - correct and uncertain (fortunate: flagged but right);
* FC - incorrect and certain (the worst cell: confidently wrong).

From the counts: USen = TU/(TU+FC), USpe = TC/(TC+FU), UPre = TU/(TU+FU),
UAcc = (TU+TC)/n. A 0/0 ratio is reported as ``None`` (rendered ``n/a`` in
text and ``null`` in JSON), never coerced to a number.

Thresholds are interpreted on the normalized-entropy scale by default;
``normalized=False`` switches to raw entropy for binary-task emulation.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from statistics import median

import numpy as np

from .aggregate import PredictiveSummary
from .errors import ValidationError
from .tensor import LabelSet, aligned_labels

OUTCOMES = ("TC", "TU", "FU", "FC")


def classify_outcome(correct: bool, uncertainty: float, threshold: float) -> str:
    """Outcome cell for one prediction; uncertain iff ``uncertainty >= threshold``."""
    if not 0.0 <= uncertainty <= 1.0:
        raise ValidationError(f"uncertainty {uncertainty} outside [0, 1]")
    if not 0.0 <= threshold <= 1.0:
        raise ValidationError(f"threshold {threshold} outside [0, 1]")
    uncertain = uncertainty >= threshold
    if correct:
        return "FU" if uncertain else "TC"
    return "TU" if uncertain else "FC"


@dataclass(frozen=True)
class UncertaintyConfusion:
    """The four outcome counts at one threshold."""

    threshold: float
    tc: int
    tu: int
    fu: int
    fc: int

    def __post_init__(self):
        for name in ("tc", "tu", "fu", "fc"):
            if getattr(self, name) < 0:
                raise ValidationError(f"count {name} is negative")

    @property
    def n(self) -> int:
        return self.tc + self.tu + self.fu + self.fc


def usen(ucm: UncertaintyConfusion) -> float | None:
    """TU over all incorrect predictions; None when there are none."""
    return _ratio(ucm.tu, ucm.tu + ucm.fc)


def uspe(ucm: UncertaintyConfusion) -> float | None:
    """TC over all correct predictions; None when there are none."""
    return _ratio(ucm.tc, ucm.tc + ucm.fu)


def upre(ucm: UncertaintyConfusion) -> float | None:
    """TU over all uncertain predictions; None when there are none."""
    return _ratio(ucm.tu, ucm.tu + ucm.fu)


def uacc(ucm: UncertaintyConfusion) -> float | None:
    """Diagonal outcomes (TU+TC) over all outcomes."""
    return _ratio(ucm.tu + ucm.tc, ucm.n)


def _ratio(num: int, den: int) -> float | None:
    if den == 0:
        return None
    return num / den


def _uncertainties(summaries: list[PredictiveSummary], normalized: bool) -> np.ndarray:
    if normalized:
        return np.array([s.normalized_entropy for s in summaries], dtype=np.float64)
    return np.array([s.entropy for s in summaries], dtype=np.float64)


def _correctness(summaries: list[PredictiveSummary], labels: LabelSet) -> np.ndarray:
    ids = [s.sample_id for s in summaries]
    truth = aligned_labels(ids, labels)
    predicted = np.array([s.predicted_class for s in summaries], dtype=np.int64)
    return predicted == truth


def build_ucm(summaries: list[PredictiveSummary], labels: LabelSet, threshold: float,
              normalized: bool = True) -> UncertaintyConfusion:
    """Count the four outcomes over all samples at one threshold."""
    if not summaries:
        raise ValidationError("no summaries to evaluate")
    _check_threshold(threshold, normalized)
    correct = _correctness(summaries, labels)
    uncertain = _uncertainties(summaries, normalized) >= threshold
    return UncertaintyConfusion(
        threshold=float(threshold),
        tc=int(np.sum(correct & ~uncertain)),
        tu=int(np.sum(~correct & uncertain)),
        fu=int(np.sum(correct & uncertain)),
        fc=int(np.sum(~correct & ~uncertain)),
    )


def _check_threshold(threshold: float, normalized: bool) -> None:
    if normalized and not 0.0 <= threshold <= 1.0:
        raise ValidationError(f"threshold {threshold} outside [0, 1]")
    if not normalized and threshold < 0.0:
        raise ValidationError(f"raw-entropy threshold {threshold} is negative")


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    ucm: UncertaintyConfusion
    uacc: float | None
    usen: float | None
    uspe: float | None
    upre: float | None


@dataclass(frozen=True)
class SweepCurve:
    """Per-threshold confusion counts and metrics along an increasing grid."""

    points: tuple[SweepPoint, ...]

    def __post_init__(self):
        thresholds = [p.threshold for p in self.points]
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ValidationError("sweep thresholds must be strictly increasing")
        uspes = [p.uspe for p in self.points if p.uspe is not None]
        if any(b < a for a, b in zip(uspes, uspes[1:])):
            raise ValidationError("uspe must be nondecreasing along the sweep")
        usens = [p.usen for p in self.points if p.usen is not None]
        if any(b > a for a, b in zip(usens, usens[1:])):
            raise ValidationError("usen must be nonincreasing along the sweep")

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)


def metrics_point(ucm: UncertaintyConfusion) -> SweepPoint:
    return SweepPoint(ucm.threshold, ucm, uacc(ucm), usen(ucm), uspe(ucm), upre(ucm))


def threshold_sweep(summaries: list[PredictiveSummary], labels: LabelSet, thresholds,
                    normalized: bool = True) -> SweepCurve:
    """Evaluate the confusion metrics at every threshold of an increasing grid."""
    thresholds = [float(t) for t in thresholds]
    if not thresholds:
        raise ValidationError("empty threshold grid")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValidationError("thresholds must be strictly increasing")
    points = tuple(
        metrics_point(build_ucm(summaries, labels, t, normalized)) for t in thresholds
    )
    return SweepCurve(points)


@dataclass(frozen=True)
class SeparationReport:
    """Normalized-entropy statistics of the correct vs. incorrect groups."""

    n_correct: int
    n_incorrect: int
    correct_mean: float | None
    correct_median: float | None
    incorrect_mean: float | None
    incorrect_median: float | None
    mean_difference: float | None
    median_difference: float | None


def separation_report(summaries: list[PredictiveSummary], labels: LabelSet) -> SeparationReport:
    """Group statistics of normalized entropy split by prediction correctness.

    Differences are incorrect minus correct; a positive value means errors
    carry higher uncertainty. Statistics of an empty group are None.
    """
    correct = _correctness(summaries, labels)
    u = _uncertainties(summaries, normalized=True)
    groups = {True: u[correct], False: u[~correct]}

    def stats(values):
        if values.size == 0:
            return None, None
        return float(values.mean()), float(median(values.tolist()))

    c_mean, c_median = stats(groups[True])
    i_mean, i_median = stats(groups[False])
    both = c_mean is not None and i_mean is not None
    return SeparationReport(
        n_correct=int(groups[True].size),
        n_incorrect=int(groups[False].size),
        correct_mean=c_mean,
        correct_median=c_median,
        incorrect_mean=i_mean,
        incorrect_median=i_median,
        mean_difference=(i_mean - c_mean) if both else None,
        median_difference=(i_median - c_median) if both else None,
    )


SWEEP_HEADER = "threshold,tc,tu,fu,fc,uacc,usen,uspe,upre"


def format_metric(value: float | None) -> str:
    return "n/a" if value is None else "%.17g" % value


def save_sweep(curve: SweepCurve, path, header_comment: str | None = None,
               scheme: str | None = None) -> None:
    """Sweep CSV with ``n/a`` for undefined ratios.

    ``scheme`` prepends a scheme column so several sweeps can share a file.
    """
    buf = io.StringIO()
    if header_comment is not None:
        buf.write(f"# {header_comment}\n")
    header = SWEEP_HEADER if scheme is None else "scheme," + SWEEP_HEADER
    buf.write(header + "\n")
    buf.write(render_sweep_rows(curve, scheme))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(buf.getvalue())


def render_sweep_rows(curve: SweepCurve, scheme: str | None = None) -> str:
    rows = []
    prefix = "" if scheme is None else f"{scheme},"
    for p in curve:
        m = p.ucm
        rows.append(
            f"{prefix}{'%.12g' % p.threshold},{m.tc},{m.tu},{m.fu},{m.fc},"
            f"{format_metric(p.uacc)},{format_metric(p.usen)},"
            f"{format_metric(p.uspe)},{format_metric(p.upre)}"
        )
    return "\n".join(rows) + "\n"


def ucm_as_dict(ucm: UncertaintyConfusion) -> dict:
    """JSON-ready mirror of one confusion matrix with nulls for 0/0 ratios."""
    acc = uacc(ucm)
    return {
        "threshold": ucm.threshold,
        "counts": {"tc": ucm.tc, "tu": ucm.tu, "fu": ucm.fu, "fc": ucm.fc},
        "n": ucm.n,
        "uacc": acc,
        "uacc_percent": None if acc is None else 100.0 * acc,
        "usen": usen(ucm),
        "uspe": uspe(ucm),
        "upre": upre(ucm),
    }


def separation_as_dict(report: SeparationReport) -> dict:
    return {
        "n_correct": report.n_correct,
        "n_incorrect": report.n_incorrect,
        "correct": {"mean": report.correct_mean, "median": report.correct_median},
        "incorrect": {"mean": report.incorrect_mean, "median": report.incorrect_median},
        "mean_difference": report.mean_difference,
        "median_difference": report.median_difference,
    }
