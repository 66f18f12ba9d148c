"""Binary classification metrics: confusion rates, balanced accuracy, AUC."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .errors import DataError

FIELDS = ("accuracy", "tpr", "tnr", "auc", "balanced_accuracy", "tp", "fp", "tn", "fn")


@dataclass(frozen=True)
class MetricsReport:
    """Unweighted classification summary.

    ``tpr``/``tnr`` (and therefore ``balanced_accuracy``) are ``None`` when
    the labels lack the class they condition on. ``auc`` is ``None`` until
    filled in by :func:`evaluate`.
    """

    accuracy: Optional[float]
    tpr: Optional[float]
    tnr: Optional[float]
    auc: Optional[float]
    balanced_accuracy: Optional[float]
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def counts(self):
        return (self.tp, self.fp, self.tn, self.fn)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    def csv_header(self):
        return ",".join(FIELDS)

    def csv_row(self):
        vals = self.to_dict()
        return ",".join("" if vals[k] is None else repr(vals[k]) for k in FIELDS)


def _as_binary(a, name):
    arr = np.asarray(a).reshape(-1)
    if not np.all((arr == 0) | (arr == 1)):
        raise DataError(f"{name} must contain only 0 and 1")
    return arr.astype(int)


def confusion(labels, predictions):
    labels = _as_binary(labels, "labels")
    preds = _as_binary(predictions, "predictions")
    if labels.shape != preds.shape:
        raise DataError(f"{labels.size} labels but {preds.size} predictions")
    tp = int(np.sum((labels == 1) & (preds == 1)))
    fn = int(np.sum((labels == 1) & (preds == 0)))
    tn = int(np.sum((labels == 0) & (preds == 0)))
    fp = int(np.sum((labels == 0) & (preds == 1)))
    n = labels.size
    accuracy = (tp + tn) / n if n else None
    tpr = tp / (tp + fn) if tp + fn else None
    tnr = tn / (tn + fp) if tn + fp else None
    bal = (tpr + tnr) / 2 if tpr is not None and tnr is not None else None
    return MetricsReport(accuracy, tpr, tnr, None, bal, tp, fp, tn, fn)


def auc(labels, scores):
    """Area under the ROC curve in Mann-Whitney form, ties counted as 1/2.

    Uses midranks, so the cost is one sort. The numerator is an exact
    half-integer before the final division.
    """
    labels = _as_binary(labels, "labels")
    scores = np.asarray(scores, dtype=float).reshape(-1)
    if labels.shape != scores.shape:
        raise DataError(f"{labels.size} labels but {scores.size} scores")
    n1 = int(labels.sum())
    n0 = labels.size - n1
    if n1 == 0 or n0 == 0:
        raise DataError("AUC needs both classes present")
    ranks = rankdata(scores, method="average")
    u = float(ranks[labels == 1].sum()) - n1 * (n1 + 1) / 2.0
    return u / (n1 * n0)


def evaluate(labels, predictions, scores=None):
    """Confusion report with AUC filled in when scores are given and defined."""
    report = confusion(labels, predictions)
    if scores is None:
        return report
    lab = np.asarray(labels).reshape(-1)
    value = auc(lab, scores) if 0 < lab.sum() < lab.size else None
    return MetricsReport(**{**report.to_dict(), "auc": value})
