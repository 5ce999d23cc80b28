"""Score fusion and the evaluation protocol.

Decision rule everywhere: a sample is predicted positive iff ``score >= th``.
Ratio metrics with a zero denominator raise :class:`UndefinedMetric`; in
sweeps and reports such values are carried as ``None``/NaN, never as 0.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMoment, LengthMismatch, SingleClass, UndefinedMetric
from .features import MOMENTS, moment_mask

THRESHOLD_GRID = np.arange(101) / 100.0
METRIC_FIELDS = ("auc_pr", "precision", "recall", "f1", "tpr", "tnr")


def fuse_mean(scores_a, scores_b) -> np.ndarray:
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatch(f"cannot fuse scores of shapes {a.shape} and {b.shape}")
    return (a + b) / 2.0


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)


def _arrays(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    if s.shape != y.shape:
        raise LengthMismatch(f"{len(s)} scores vs {len(y)} labels")
    return s, y


def confusion_at_threshold(scores, labels, th: float) -> ConfusionCounts:
    s, y = _arrays(scores, labels)
    pred = s >= th
    tp = int(np.count_nonzero(pred & y))
    fp = int(np.count_nonzero(pred & ~y))
    fn = int(np.count_nonzero(~pred & y))
    return ConfusionCounts(tp, fp, len(s) - tp - fp - fn, fn)


def _ratio(num, den, name):
    if den == 0:
        raise UndefinedMetric(f"{name} undefined: zero denominator")
    return num / den


def precision(c: ConfusionCounts) -> float:
    return _ratio(c.tp, c.tp + c.fp, "precision")


def recall(c: ConfusionCounts) -> float:
    return _ratio(c.tp, c.tp + c.fn, "recall")


tpr = recall


def tnr(c: ConfusionCounts) -> float:
    return _ratio(c.tn, c.tn + c.fp, "TNR")


def f1_from_pr(p: float, r: float) -> float:
    return _ratio(2.0 * p * r, p + r, "F1")


def f1(c: ConfusionCounts) -> float:
    return f1_from_pr(precision(c), recall(c))


def maybe(fn, *args):
    """``fn(*args)``, or ``None`` if the metric is undefined."""
    try:
        return fn(*args)
    except UndefinedMetric:
        return None


@dataclass(frozen=True, eq=False)
class PrCurve:
    """One point per distinct score, thresholds descending."""

    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    auc: float

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["threshold", "recall", "precision"])
        for th, r, p in zip(self.thresholds, self.recall, self.precision):
            w.writerow([repr(float(th)), repr(float(r)), repr(float(p))])
        return out.getvalue()


def _require_both(y):
    if y.all() or not y.any():
        raise SingleClass("evaluation needs both classes present")


def pr_curve(scores, labels) -> PrCurve:
    """Precision-recall curve and average-precision area ``sum (R_k - R_{k-1}) P_k``."""
    s, y = _arrays(scores, labels)
    _require_both(y)
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    tp_cum = np.cumsum(y_sorted)
    fp_cum = np.cumsum(~y_sorted)
    # last index of each tied score group
    last = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    tp = tp_cum[last].astype(np.float64)
    fp = fp_cum[last].astype(np.float64)
    prec = tp / (tp + fp)
    rec = tp / y.sum()
    auc = float(np.sum(np.diff(np.r_[0.0, rec]) * prec))
    return PrCurve(s_sorted[last], prec, rec, auc)


def auc_pr(scores, labels) -> float:
    return pr_curve(scores, labels).auc


@dataclass(frozen=True, eq=False)
class SweepResult:
    thresholds: np.ndarray
    precision: np.ndarray  # NaN where undefined
    recall: np.ndarray
    f1: np.ndarray
    best_threshold: float
    best_f1: float

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["threshold", "precision", "recall", "f1"])
        for row in zip(self.thresholds, self.precision, self.recall, self.f1):
            w.writerow([f"{row[0]:.2f}"] + ["" if math.isnan(v) else repr(float(v)) for v in row[1:]])
        return out.getvalue()


def f1_sweep(scores, labels, grid=THRESHOLD_GRID) -> SweepResult:
    """F1 on the 0.00..1.00 grid; the best threshold is the lowest attaining max F1."""
    s, y = _arrays(scores, labels)
    _require_both(y)
    grid = np.asarray(grid, dtype=np.float64)
    P = np.full(len(grid), np.nan)
    R = np.full(len(grid), np.nan)
    F = np.full(len(grid), np.nan)
    for k, th in enumerate(grid):
        c = confusion_at_threshold(s, y, th)
        p, r = maybe(precision, c), maybe(recall, c)
        if p is not None:
            P[k] = p
        if r is not None:
            R[k] = r
        if p is not None and r is not None:
            fv = maybe(f1_from_pr, p, r)
            if fv is not None:
                F[k] = fv
    if np.isnan(F).all():
        best_k = 0
        best = float("nan")
    else:
        best = float(np.nanmax(F))
        best_k = int(np.flatnonzero(F == best)[0])
    return SweepResult(grid, P, R, F, float(grid[best_k]), best)


@dataclass(frozen=True)
class MomentMetrics:
    moment: str
    n_samples: int
    auc_pr: float
    best_threshold: float
    precision: float | None
    recall: float | None
    f1: float | None
    tpr: float | None
    tnr: float | None
    counts: ConfusionCounts

    def to_dict(self) -> dict:
        return {"n_samples": self.n_samples, "auc_pr": self.auc_pr,
                "best_threshold": self.best_threshold, "precision": self.precision,
                "recall": self.recall, "f1": self.f1, "tpr": self.tpr, "tnr": self.tnr,
                "counts": {"tp": self.counts.tp, "fp": self.counts.fp,
                           "tn": self.counts.tn, "fn": self.counts.fn}}


@dataclass(frozen=True)
class MomentReport:
    moments: dict  # moment name -> MomentMetrics

    def __getitem__(self, moment: str) -> MomentMetrics:
        return self.moments[moment]


def evaluate_moment(scores, labels, moment: str = "all") -> tuple[MomentMetrics, PrCurve, SweepResult]:
    s, y = _arrays(scores, labels)
    if len(s) == 0:
        raise EmptyMoment(f"no windows for moment {moment}")
    curve = pr_curve(s, y)
    sweep = f1_sweep(s, y)
    c = confusion_at_threshold(s, y, sweep.best_threshold)
    r = maybe(recall, c)
    mm = MomentMetrics(moment, len(s), curve.auc, sweep.best_threshold, maybe(precision, c), r,
                       maybe(f1, c), r, maybe(tnr, c), c)
    return mm, curve, sweep


def evaluate_moments(scores, labels, offsets, moments=MOMENTS):
    """Per-moment metrics.  Returns ``(MomentReport, curves, sweeps)`` keyed by moment."""
    s, y = _arrays(scores, labels)
    offsets = np.asarray(offsets, dtype=np.float64)
    if offsets.shape != s.shape:
        raise LengthMismatch("offsets must align with scores")
    out, curves, sweeps = {}, {}, {}
    for m in moments:
        mask = moment_mask(offsets, m)
        if not mask.any():
            raise EmptyMoment(f"no windows at moment {m}")
        out[m], curves[m], sweeps[m] = evaluate_moment(s[mask], y[mask], m)
    return MomentReport(out), curves, sweeps


def variation_row(fused: MomentReport, a: MomentReport, b: MomentReport) -> dict:
    """Per metric column: fused value minus the better of ``a`` and ``b``."""
    rows = {}
    for m, fm in fused.moments.items():
        row = {}
        for field in METRIC_FIELDS:
            vals = [getattr(r.moments[m], field) for r in (a, b)]
            vals = [v for v in vals if v is not None]
            fv = getattr(fm, field)
            row[field] = None if fv is None or not vals else fv - max(vals)
        rows[m] = row
    return rows


# --------------------------------------------------------------------------
# Score distributions (boxplot statistics)


@dataclass(frozen=True)
class BoxStats:
    center_offset_s: float
    true_class: int
    n: int
    q1: float
    median: float
    q3: float
    whisker_lo: float
    whisker_hi: float
    n_outliers: int


def box_stats(values, offset: float = 0.0, true_class: int = 0) -> BoxStats:
    v = np.sort(np.asarray(values, dtype=np.float64))
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    return BoxStats(float(offset), int(true_class), len(v), float(q1), float(med), float(q3),
                    float(inside.min()), float(inside.max()), int(len(v) - len(inside)))


@dataclass(frozen=True)
class ScoreDistribution:
    boxes: tuple  # BoxStats ordered by (offset, class)

    def get(self, offset: float, true_class: int) -> BoxStats:
        for b in self.boxes:
            if abs(b.center_offset_s - offset) < 1e-9 and b.true_class == true_class:
                return b
        raise KeyError((offset, true_class))

    def to_csv(self, classifier: str = "") -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["classifier", "center_offset_s", "true_class", "n", "q1", "median", "q3",
                    "whisker_lo", "whisker_hi", "n_outliers"])
        for b in self.boxes:
            w.writerow([classifier, f"{b.center_offset_s:.1f}", b.true_class, b.n,
                        repr(b.q1), repr(b.median), repr(b.q3), repr(b.whisker_lo),
                        repr(b.whisker_hi), b.n_outliers])
        return out.getvalue()


def score_distributions(scores, labels, offsets) -> ScoreDistribution:
    """Boxplot statistics of class-1 scores per window offset and true class."""
    s, y = _arrays(scores, labels)
    offsets = np.round(np.asarray(offsets, dtype=np.float64), 6)
    boxes = []
    for off in np.unique(offsets):
        at = offsets == off
        for cls in (0, 1):
            sel = at & (y == bool(cls))
            if sel.any():
                boxes.append(box_stats(s[sel], off, cls))
    return ScoreDistribution(tuple(boxes))
