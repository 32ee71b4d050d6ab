"""Evaluation metrics: MAE, tick accuracy (PTA) and at-risk classification."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import OutOfRange
from .grades import clip_grade, snap_to_grid, tick_distance

AT_RISK_THRESHOLD = 2.0

# Table ordering used by evaluate output (paper family order).
FAMILY_ORDER = ("BO", "MF", "CS_MF", "CSR_PC", "CSR_CF", "CSR_HY", "MLP", "LSTM")


def _check_pair(preds, labels):
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise OutOfRange(f"shape mismatch {preds.shape} vs {labels.shape}")
    if preds.size == 0:
        raise OutOfRange("empty prediction set")
    return preds, labels


def mae(preds, labels):
    preds, labels = _check_pair(preds, labels)
    return float(np.mean(np.abs(preds - labels)))


def tick_errors(preds, labels):
    """Per-example tick distance after snapping predictions to the grid."""
    preds, labels = _check_pair(preds, labels)
    return np.array([tick_distance(snap_to_grid(clip_grade(p)), y)
                     for p, y in zip(preds, labels)])


def pta(preds, labels, max_tick):
    """Percentage of predictions within max_tick ticks of the true grade."""
    if max_tick not in (0, 1, 2):
        raise OutOfRange(f"max_tick must be 0, 1 or 2, got {max_tick}")
    ticks = tick_errors(preds, labels)
    return float(100.0 * np.mean(ticks <= max_tick))


@dataclass
class AtRiskMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    prevalence: float
    degenerate: bool  # no predicted or no actual positives; F1 forced to 0

    def as_dict(self):
        return asdict(self)


def at_risk_metrics(preds, labels, threshold=AT_RISK_THRESHOLD, inclusive=False):
    """Confusion-matrix metrics for the at-risk class (grade below 2.0).

    The threshold is strict by default ("below 2.0"): a grade of exactly
    2.0 is not at risk. inclusive=True switches to <=.
    """
    preds, labels = _check_pair(preds, labels)
    if inclusive:
        pos_true = labels <= threshold
        pos_pred = preds <= threshold
    else:
        pos_true = labels < threshold
        pos_pred = preds < threshold
    tp = int(np.sum(pos_true & pos_pred))
    fp = int(np.sum(~pos_true & pos_pred))
    fn = int(np.sum(pos_true & ~pos_pred))
    tn = int(np.sum(~pos_true & ~pos_pred))
    n = preds.size
    accuracy = (tp + tn) / n
    degenerate = (tp + fp == 0) or (tp + fn == 0)
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall > 0 else 0.0)
    return AtRiskMetrics(accuracy=float(accuracy), precision=float(precision),
                         recall=float(recall), f1=float(f1),
                         prevalence=float(np.mean(pos_true)),
                         degenerate=degenerate)


@dataclass
class MetricReport:
    n: int
    mae: float
    pta0: float
    pta1: float
    pta2: float
    at_risk: AtRiskMetrics

    def as_dict(self):
        d = asdict(self)
        return d

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def metric_report(preds, labels, inclusive=False):
    preds, labels = _check_pair(preds, labels)
    return MetricReport(
        n=int(preds.size),
        mae=mae(preds, labels),
        pta0=pta(preds, labels, 0),
        pta1=pta(preds, labels, 1),
        pta2=pta(preds, labels, 2),
        at_risk=at_risk_metrics(preds, labels, inclusive=inclusive),
    )


def report_table(reports):
    """Fixed-width table of MetricReports keyed by family, in paper order."""
    cols = ["Method", "N", "MAE", "PTA0", "PTA1", "PTA2", "Acc", "F-1"]
    rows = [cols]
    families = [f for f in FAMILY_ORDER if f in reports]
    families += [f for f in sorted(reports) if f not in FAMILY_ORDER]
    for fam in families:
        r = reports[fam]
        rows.append([fam, str(r.n), f"{r.mae:.3f}", f"{r.pta0:.2f}",
                     f"{r.pta1:.2f}", f"{r.pta2:.2f}",
                     f"{r.at_risk.accuracy:.3f}", f"{r.at_risk.f1:.3f}"])
    widths = [max(len(row[i]) for row in rows) for i in range(len(cols))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
        if i == 0:
            lines.append("-" * len(lines[0]))
    return "\n".join(lines)
