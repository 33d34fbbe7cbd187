"""Classification metrics: ACC, AUC, F1, SEN, SPE.

Binary problems use class 1 as the positive class. With more than two
classes every metric except accuracy is the macro average of the
one-vs-rest values.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.stats import rankdata

from .errors import ContractError, DataError

METRIC_NAMES = ("ACC", "AUC", "F1", "SEN", "SPE")


class Rates(NamedTuple):
    sen: float
    spe: float
    f1: float
    undefined: tuple[str, ...] = ()


def confusion_matrix(y_true, y_pred, num_classes: int) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ContractError(f"label arrays differ in shape: {y_true.shape} vs {y_pred.shape}")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def accuracy(cm) -> float:
    cm = np.asarray(cm)
    total = cm.sum()
    if total <= 0:
        raise ContractError("accuracy of an empty confusion matrix")
    return float(np.trace(cm) / total)


def _ratio(num: float, den: float, tag: str, undefined: list[str]) -> float:
    if den == 0:
        undefined.append(tag)
        return 0.0
    return num / den


def _one_vs_rest(cm: np.ndarray, positive: int) -> Rates:
    tp = cm[positive, positive]
    fn = cm[positive].sum() - tp
    fp = cm[:, positive].sum() - tp
    tn = cm.sum() - tp - fn - fp
    undefined: list[str] = []
    sen = _ratio(tp, tp + fn, f"SEN[{positive}]", undefined)
    spe = _ratio(tn, tn + fp, f"SPE[{positive}]", undefined)
    prec = _ratio(tp, tp + fp, f"PREC[{positive}]", undefined)
    f1 = _ratio(2 * prec * sen, prec + sen, f"F1[{positive}]", undefined)
    return Rates(float(sen), float(spe), float(f1), tuple(undefined))


def sens_spec_f1(cm, positive: int | str | None = None) -> Rates:
    """Sensitivity, specificity and F1.

    ``positive`` selects the positive class; ``"macro"`` averages the
    one-vs-rest values over all classes. The default is class 1 for binary
    matrices and macro otherwise. 0/0 ratios are reported as 0 and listed
    in ``undefined``.
    """
    cm = np.asarray(cm)
    c = cm.shape[0]
    if positive is None:
        positive = 1 if c == 2 else "macro"
    if positive == "macro":
        per = [_one_vs_rest(cm, k) for k in range(c)]
        return Rates(
            float(np.mean([r.sen for r in per])),
            float(np.mean([r.spe for r in per])),
            float(np.mean([r.f1 for r in per])),
            tuple(tag for r in per for tag in r.undefined),
        )
    return _one_vs_rest(cm, int(positive))


def binary_auc(scores, labels) -> float:
    """Mann-Whitney AUC with average ranks for ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC undefined: labels contain a single class")
    ranks = rankdata(scores, method="average")
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_auc(scores, labels) -> float:
    """AUC for 1-D positive-class scores, or macro one-vs-rest for ``(n, C)`` probabilities."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim == 1:
        return binary_auc(scores, labels == 1)
    c = scores.shape[1]
    if c == 2:
        return binary_auc(scores[:, 1], labels == 1)
    return float(np.mean([binary_auc(scores[:, k], labels == k) for k in range(c)]))


def trapezoid_auc(scores, labels) -> float:
    """Area under the empirical ROC curve by trapezoidal integration."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    distinct = np.r_[np.flatnonzero(np.diff(s)), y.size - 1]
    tps = np.r_[0, np.cumsum(y)[distinct]]
    fps = np.r_[0, np.cumsum(~y)[distinct]]
    tpr = tps / tps[-1]
    fpr = fps / fps[-1]
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def evaluate(probs, labels) -> dict[str, float]:
    """All five metrics from ``(n, C)`` probabilities and integer labels."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    c = probs.shape[1]
    cm = confusion_matrix(labels, probs.argmax(axis=1), c)
    rates = sens_spec_f1(cm)
    try:
        auc = roc_auc(probs, labels)
    except DataError:
        auc = float("nan")
    return {"ACC": accuracy(cm), "AUC": auc, "F1": rates.f1, "SEN": rates.sen, "SPE": rates.spe}
