"""Verification-performance metrics: ROC/DET machinery, equal error rate,
miss rates at fixed false-match operating points, AUC, accuracy, and the
per-subject (threshold-adaptive) variants plus rank-1.

All rates are reported in percent. The acceptance rule everywhere is
"accept iff score >= threshold"; every metric is a rank statistic and is
therefore invariant under strictly increasing score transformations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .protocol import ScoreSet

FMR_TARGETS_PERCENT = (0.1, 1.0, 10.0)


@dataclass(frozen=True)
class RocCurve:
    """Exact step curve over the observed score multiset.

    Thresholds are strictly increasing and include a sentinel below the
    minimum score (fmr=1, fnmr=0) and above the maximum (fmr=0, fnmr=1).
    Rates are fractions in [0, 1].
    """

    thresholds: np.ndarray
    fmr: np.ndarray
    fnmr: np.ndarray

    def __len__(self) -> int:
        return len(self.thresholds)


def _as_scores(values: Iterable[float], name: str) -> np.ndarray:
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values,
                     dtype=np.float64)
    if arr.size == 0:
        raise ValueError(f"{name} score list is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} scores contain non-finite values")
    return arr


def roc(genuine: Iterable[float], impostor: Iterable[float]) -> RocCurve:
    """Build the exact ROC/DET step curve.

    FMR(t) is the impostor fraction with score >= t, FNMR(t) the genuine
    fraction with score < t, evaluated at every observed score plus the
    two sentinels.
    """
    gen = np.sort(_as_scores(genuine, "genuine"))
    imp = np.sort(_as_scores(impostor, "impostor"))
    uniq = np.unique(np.concatenate([gen, imp]))
    thresholds = np.concatenate([[uniq[0] - 1.0], uniq, [uniq[-1] + 1.0]])
    fmr = (len(imp) - np.searchsorted(imp, thresholds, side="left")) / len(imp)
    fnmr = np.searchsorted(gen, thresholds, side="left") / len(gen)
    return RocCurve(thresholds=thresholds, fmr=fmr, fnmr=fnmr)


def eer(curve: RocCurve) -> tuple[float, float]:
    """Equal error rate (percent) and its threshold.

    Returns the exact step-curve crossing when FMR == FNMR at some
    threshold; otherwise interpolates linearly between the two bracketing
    points, which is also where the reported threshold lives.
    """
    diff = curve.fnmr - curve.fmr
    i = int(np.argmax(diff >= 0.0))
    if diff[i] == 0.0:
        return float(curve.fmr[i]) * 100.0, float(curve.thresholds[i])
    f0, f1 = float(curve.fmr[i - 1]), float(curve.fmr[i])
    n0, n1 = float(curve.fnmr[i - 1]), float(curve.fnmr[i])
    t0, t1 = float(curve.thresholds[i - 1]), float(curve.thresholds[i])
    s = (f0 - n0) / ((n1 - n0) - (f1 - f0))
    value = n0 + s * (n1 - n0)
    threshold = t0 + s * (t1 - t0)
    return value * 100.0, threshold


def threshold_at_fmr(curve: RocCurve, x_percent: float) -> float:
    """Smallest threshold whose FMR does not exceed x percent."""
    if not 0 < x_percent <= 100:
        raise ValueError(f"x_percent {x_percent} outside (0, 100]")
    i = int(np.argmax(curve.fmr <= x_percent / 100.0))
    return float(curve.thresholds[i])


def fnmr_at_fmr(curve: RocCurve, x_percent: float) -> float:
    """FNMR (percent) at the smallest threshold with FMR <= x percent.

    Conservative by construction: the realized FMR never exceeds the
    target.
    """
    if not 0 < x_percent <= 100:
        raise ValueError(f"x_percent {x_percent} outside (0, 100]")
    i = int(np.argmax(curve.fmr <= x_percent / 100.0))
    return float(curve.fnmr[i]) * 100.0


def auc(genuine: Iterable[float], impostor: Iterable[float]) -> float:
    """Area under the ROC curve in percent.

    Equals the rank statistic P(genuine > impostor) + 0.5 P(equal) over
    all genuine x impostor pairs.
    """
    gen = _as_scores(genuine, "genuine")
    imp = np.sort(_as_scores(impostor, "impostor"))
    below = np.searchsorted(imp, gen, side="left")
    ties = np.searchsorted(imp, gen, side="right") - below
    total = float(below.sum()) + 0.5 * float(ties.sum())
    return total / (len(gen) * len(imp)) * 100.0


def accuracy_at(
    genuine: Iterable[float], impostor: Iterable[float], threshold: float
) -> float:
    """Fraction of correct decisions (percent) under accept iff score >= threshold."""
    if not np.isfinite(threshold):
        raise ValueError(f"threshold must be finite, got {threshold}")
    gen = _as_scores(genuine, "genuine")
    imp = _as_scores(impostor, "impostor")
    correct = int((gen >= threshold).sum()) + int((imp < threshold).sum())
    return correct / (len(gen) + len(imp)) * 100.0


@dataclass(frozen=True)
class GlobalMetrics:
    eer: float
    eer_threshold: float
    fnmr_at_fmr: dict[float, float]
    auc: float
    accuracy: float


@dataclass(frozen=True)
class PerSubjectMetrics:
    eer: float
    auc: float
    accuracy: float
    rank1: float


@dataclass(frozen=True)
class MetricsReport:
    """Everything the evaluation stage reports, all rates in percent."""

    global_metrics: GlobalMetrics
    per_subject: PerSubjectMetrics

    def __post_init__(self) -> None:
        rates = [
            self.global_metrics.eer,
            self.global_metrics.auc,
            self.global_metrics.accuracy,
            *self.global_metrics.fnmr_at_fmr.values(),
            self.per_subject.eer,
            self.per_subject.auc,
            self.per_subject.accuracy,
            self.per_subject.rank1,
        ]
        for value in rates:
            if not 0.0 <= value <= 100.0:
                raise ValueError(f"rate {value} outside [0, 100]")


def pooled_scores(score_sets: Sequence[ScoreSet]) -> tuple[np.ndarray, np.ndarray]:
    genuine = np.array([v for s in score_sets for v in s.genuine])
    impostor = np.array([v for s in score_sets for v in s.impostor()])
    return genuine, impostor


def global_metrics(
    score_sets: Sequence[ScoreSet],
    fmr_targets: Sequence[float] = FMR_TARGETS_PERCENT,
) -> GlobalMetrics:
    """Single-threshold evaluation over the pooled score distributions."""
    genuine, impostor = pooled_scores(score_sets)
    curve = roc(genuine, impostor)
    eer_value, eer_thr = eer(curve)
    return GlobalMetrics(
        eer=eer_value,
        eer_threshold=eer_thr,
        fnmr_at_fmr={x: fnmr_at_fmr(curve, x) for x in fmr_targets},
        auc=auc(genuine, impostor),
        accuracy=accuracy_at(genuine, impostor, eer_thr),
    )


def per_subject_metrics(score_sets: Sequence[ScoreSet]) -> PerSubjectMetrics:
    """Subject-adaptive evaluation: EER/AUC/accuracy per subject, averaged.

    Accuracy uses each subject's own EER threshold. Rank-1 is the fraction
    of genuine attempts strictly exceeding all 20 of that subject's
    impostor scores.
    """
    if not score_sets:
        raise ValueError("no score sets")
    eers, aucs, accs = [], [], []
    hits = 0
    attempts = 0
    for s in score_sets:
        genuine = np.asarray(s.genuine)
        impostor = np.asarray(s.impostor())
        curve = roc(genuine, impostor)
        eer_value, eer_thr = eer(curve)
        eers.append(eer_value)
        aucs.append(auc(genuine, impostor))
        accs.append(accuracy_at(genuine, impostor, eer_thr))
        top_impostor = impostor.max()
        hits += int((genuine > top_impostor).sum())
        attempts += len(genuine)
    return PerSubjectMetrics(
        eer=float(np.mean(eers)),
        auc=float(np.mean(aucs)),
        accuracy=float(np.mean(accs)),
        rank1=hits / attempts * 100.0,
    )


def compute_metrics_report(score_sets: Sequence[ScoreSet]) -> MetricsReport:
    return MetricsReport(
        global_metrics=global_metrics(score_sets),
        per_subject=per_subject_metrics(score_sets),
    )
