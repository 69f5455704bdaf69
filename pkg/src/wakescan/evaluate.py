"""Scoring reports against ground truth, detection metrics and ROC sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .detect import Analysis, DetectConfig, Status, WakeKind, WakeReport, angular_distance
from .synth import GroundTruth

__all__ = [
    "DetectionCounts",
    "Metrics",
    "score_report",
    "score_wake",
    "compute_metrics",
    "line_match",
    "roc_sweep",
    "roc_dominance",
    "default_margin_grid",
    "PUBLISHED_TABLE_PRIORS",
    "PUBLISHED_TABLE_METHODS",
]

THETA_TOL = 3.0
R_TOL = 5.0


@dataclass(frozen=True)
class DetectionCounts:
    """Confusion counts; fractional values are allowed for replaying percentages."""

    tp: float = 0
    tn: float = 0
    fp: float = 0
    fn: float = 0

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be a finite non-negative number, got {v}")

    @property
    def n(self) -> float:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "DetectionCounts") -> "DetectionCounts":
        return DetectionCounts(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)

    def as_dict(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


@dataclass(frozen=True)
class Metrics:
    sensitivity: float
    specificity: float
    accuracy_pct: float
    f1: float
    lr_plus: float
    youden_j: float
    # set when a rate had a zero denominator and was reported as 1.0
    sensitivity_undefined: bool = False
    specificity_undefined: bool = False

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        if math.isinf(d["lr_plus"]):
            d["lr_plus"] = "inf"
        return d


def compute_metrics(counts: DetectionCounts) -> Metrics:
    """Sensitivity, specificity, accuracy, F1, LR+ and Youden's J.

    A rate whose denominator is zero is reported as 1.0 and flagged.  LR+ is
    ``inf`` when the specificity is 1; F1 is 0 when there are no positives
    and no errors to weigh.
    """
    if not counts.n > 0:
        raise ValueError("metrics need at least one scored wake")
    tp, tn, fp, fn = counts.tp, counts.tn, counts.fp, counts.fn
    sens_undef = tp + fn == 0
    spec_undef = tn + fp == 0
    sens = 1.0 if sens_undef else tp / (tp + fn)
    spec = 1.0 if spec_undef else tn / (tn + fp)
    acc = 100.0 * (tp + tn) / counts.n
    f1_den = 2 * tp + fp + fn
    f1 = 2 * tp / f1_den if f1_den > 0 else 0.0
    lr = math.inf if spec == 1.0 else sens / (1.0 - spec)
    return Metrics(sens, spec, acc, f1, lr, sens + spec - 1.0, sens_undef, spec_undef)


def line_match(theta_a, r_a, theta_b, r_b, theta_tol=THETA_TOL, r_tol=R_TOL) -> bool:
    """Whether two Radon points describe the same line within tolerance.

    ``(theta, r)`` and ``(theta + 180, -r)`` are the same line, so a pair
    straddling 0/180 degrees is compared with one offset flipped.
    """
    dtheta = angular_distance(theta_a, theta_b)
    if dtheta > theta_tol:
        return False
    wrapped = abs(theta_a - theta_b) > 90
    rb = -r_b if wrapped else r_b
    return abs(r_a - rb) <= r_tol


def score_wake(candidate, truth_entry: dict, theta_tol=THETA_TOL, r_tol=R_TOL) -> str:
    """One of ``"tp"``, ``"tn"``, ``"fp"``, ``"fn"``."""
    confirmed = Status(candidate.status) is Status.CONFIRMED
    if not truth_entry["visible"]:
        return "fp" if confirmed else "tn"
    if not confirmed:
        return "fn"
    ok = line_match(candidate.theta, candidate.r, truth_entry["theta"], truth_entry["r"], theta_tol, r_tol)
    return "tp" if ok else "fp"


def _pair_score(cands, entries, theta_tol, r_tol):
    """Best total over both assignments of two same-family candidates to two truths."""
    def total(order):
        outs = [score_wake(c, e, theta_tol, r_tol) for c, e in zip(cands, order)]
        return outs, sum(o in ("tp", "tn") for o in outs), outs.count("tp")

    a = total(entries)
    b = total(entries[::-1])
    # more correct outcomes wins; then more true positives; then the given order
    return a[0] if (a[1], a[2]) >= (b[1], b[2]) else b[0]


def score_report(report: WakeReport, truth: GroundTruth, theta_tol=THETA_TOL, r_tol=R_TOL) -> DetectionCounts:
    """Count each of the five wakes as TP, TN, FP or FN.

    The two narrow-V arms, and likewise the two Kelvin arms, are matched to
    their truths in whichever order scores better, since the arm numbering
    is arbitrary on both sides.
    """
    if not theta_tol > 0 or not r_tol > 0:
        raise ValueError("tolerances must be positive")
    kinds = {WakeKind(c.kind) for c in report.candidates}
    if kinds != set(WakeKind) or set(truth.wakes) != {k.value for k in WakeKind}:
        raise ValueError("report and truth must both cover the five wake kinds")
    outs = [score_wake(report.get(WakeKind.TURBULENT), truth.wakes["turbulent"], theta_tol, r_tol)]
    for a, b in (("narrow1", "narrow2"), ("kelvin1", "kelvin2")):
        outs += _pair_score([report.get(a), report.get(b)], [truth.wakes[a], truth.wakes[b]], theta_tol, r_tol)
    return DetectionCounts(*(outs.count(k) for k in ("tp", "tn", "fp", "fn")))


def default_margin_grid(n: int = 16) -> np.ndarray:
    """``-inf``, an even grid over ``[-0.5, 1.0]`` and ``+inf``."""
    return np.concatenate([[-math.inf], np.linspace(-0.5, 1.0, n), [math.inf]])


def roc_sweep(analyses, truths, config: DetectConfig, margins=None, theta_tol=THETA_TOL, r_tol=R_TOL):
    """ROC points from sweeping the narrow-V/Kelvin F-index margin.

    ``analyses`` are per-scene :class:`~wakescan.detect.Analysis` objects, so
    the inversion runs once per scene however many margins are tried.
    Returns ``(margin, fpr, tpr)`` rows sorted by fpr, then tpr.
    """
    margins = default_margin_grid() if margins is None else np.asarray(margins, float)
    rows = []
    for m in margins:
        cfg = replace(config, f_margin=float(m))
        total = DetectionCounts()
        for a, t in zip(analyses, truths):
            total = total + score_report(a.report(cfg), t, theta_tol, r_tol)
        met = compute_metrics(total)
        rows.append((float(m), 1.0 - met.specificity, met.sensitivity))
    rows.sort(key=lambda row: (row[1], row[2], row[0]))
    return rows


def _best_tpr(curve, x):
    """Highest tpr reachable at false positive rate at most ``x``."""
    fpr = np.array([c[1] for c in curve])
    tpr = np.array([c[2] for c in curve])
    ok = fpr <= x + 1e-12
    return float(tpr[ok].max()) if ok.any() else 0.0


def roc_dominance(curve_a, curve_b, n_grid: int = 21):
    """Fraction of shared fpr grid points where ``a`` reaches at least ``b``'s tpr.

    The grid spans the fpr range both curves cover.  Returns
    ``(fraction, grid, tpr_a, tpr_b)``.
    """
    lo = max(min(c[1] for c in curve_a), min(c[1] for c in curve_b))
    hi = min(max(c[1] for c in curve_a), max(c[1] for c in curve_b))
    grid = np.linspace(lo, hi, n_grid) if hi > lo else np.array([lo])
    ta = np.array([_best_tpr(curve_a, x) for x in grid])
    tb = np.array([_best_tpr(curve_b, x) for x in grid])
    return float(np.mean(ta >= tb - 1e-12)), grid, ta, tb


# Percentage rows of the published prior and method comparisons:
# TP, TN, FP, FN, sensitivity %, specificity %, accuracy %, F1, LR+, J.
PUBLISHED_TABLE_PRIORS = {
    "GMC": (49.29, 30.71, 17.86, 2.14, 95.83, 63.24, 80.00, 0.83, 2.61, 0.59),
    "L1": (35.00, 28.57, 32.14, 4.29, 89.09, 47.06, 63.57, 0.66, 1.68, 0.36),
    "L0.2": (40.00, 26.43, 32.86, 0.71, 98.25, 44.58, 66.43, 0.70, 1.77, 0.43),
    "L0.5": (37.86, 30.00, 30.71, 1.43, 96.36, 49.41, 67.86, 0.70, 1.90, 0.46),
    "L0.8": (33.57, 32.14, 29.29, 5.00, 87.04, 52.33, 65.71, 0.66, 1.83, 0.39),
    "TV": (35.71, 34.29, 26.43, 3.57, 90.91, 56.47, 70.00, 0.70, 2.09, 0.47),
    "Nuclear": (33.57, 29.29, 32.14, 5.00, 87.04, 47.67, 62.86, 0.64, 1.66, 0.35),
}

PUBLISHED_TABLE_METHODS = {
    "Proposed (GMC)": (49.29, 30.71, 17.86, 2.14, 95.83, 63.24, 80.00, 0.83, 2.61, 0.59),
    "Radon baseline": (33.57, 35.71, 26.43, 4.29, 88.68, 57.47, 69.29, 0.69, 2.09, 0.46),
    "Log-Hough": (38.57, 25.71, 33.57, 2.14, 94.74, 43.37, 64.29, 0.68, 1.67, 0.38),
}
