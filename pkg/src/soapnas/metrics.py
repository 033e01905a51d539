"""Ranking and classification metrics.

All functions compute in float64 regardless of input dtype. ROC-AUC uses
the rank formulation of the Mann-Whitney statistic (ties credited 0.5) and
Kendall tau is the tie-corrected tau-b computed with an O(n log n)
merge-count, so the O(n^2) pair-counting definitions stay available as
independent test oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, LengthMismatch, SingleClass


def _as_score_label(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape[0] != y.shape[0]:
        raise LengthMismatch(f"{s.shape[0]} scores vs {y.shape[0]} labels")
    y = y.astype(np.int64)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos + n_neg != y.shape[0]:
        raise ValueError("labels must be 0/1")
    if n_pos == 0 or n_neg == 0:
        raise SingleClass(f"need both classes, got {n_pos} positives / {n_neg} negatives")
    return s, y, n_pos, n_neg


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean rank of their run."""
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    boundaries = np.flatnonzero(np.diff(sorted_vals) != 0) + 1
    starts = np.concatenate(([0], boundaries))
    stops = np.concatenate((boundaries, [values.shape[0]]))
    ranks = np.empty(values.shape[0], dtype=np.float64)
    for a, b in zip(starts, stops):
        ranks[order[a:b]] = 0.5 * (a + 1 + b)
    return ranks


def roc_auc(scores, labels) -> float:
    """P(random positive outscores random negative), ties counted half."""
    s, y, n_pos, n_neg = _as_score_label(scores, labels)
    ranks = _average_ranks(s)
    pos_rank_sum = float(ranks[y == 1].sum())
    u = pos_rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


@dataclass(frozen=True)
class RocCurve:
    """Operating points ordered from (0,0) to (1,1)."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    def area(self) -> float:
        return float(np.trapezoid(self.tpr, self.fpr))

    def rows(self):
        for f, t, thr in zip(self.fpr, self.tpr, self.thresholds):
            yield float(f), float(t), float(thr)


def roc_curve(scores, labels) -> RocCurve:
    """One point per distinct score value; trapezoidal area equals roc_auc."""
    s, y, n_pos, n_neg = _as_score_label(scores, labels)
    order = np.argsort(-s, kind="stable")
    s_desc = s[order]
    y_desc = y[order]
    # last index of each run of equal scores = an operating point
    distinct = np.flatnonzero(np.diff(s_desc) != 0)
    stops = np.concatenate((distinct, [s_desc.shape[0] - 1]))
    tp = np.cumsum(y_desc)[stops]
    fp = stops + 1 - tp
    fpr = np.concatenate(([0.0], fp / n_neg))
    tpr = np.concatenate(([0.0], tp / n_pos))
    thresholds = np.concatenate(([math.inf], s_desc[stops]))
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds)


def accuracy(probs, labels, threshold: float = 0.5) -> float:
    """Fraction of elements with (prob >= threshold) == label."""
    p = np.asarray(probs, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if p.shape[0] != y.shape[0]:
        raise LengthMismatch(f"{p.shape[0]} probs vs {y.shape[0]} labels")
    return float(((p >= threshold).astype(np.int64) == y.astype(np.int64)).mean())


def _as_pair(x, y):
    xv = np.asarray(x, dtype=np.float64).ravel()
    yv = np.asarray(y, dtype=np.float64).ravel()
    if xv.shape[0] != yv.shape[0]:
        raise LengthMismatch(f"{xv.shape[0]} vs {yv.shape[0]}")
    if xv.shape[0] < 2:
        raise DegenerateInput("need at least 2 points")
    return xv, yv


def pearson(x, y) -> float:
    """Sample correlation coefficient."""
    xv, yv = _as_pair(x, y)
    xc = xv - xv.mean()
    yc = yv - yv.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if denom == 0.0:
        raise DegenerateInput("pearson undefined for a constant list")
    return float(xc @ yc) / denom


def _tie_pair_count(values: np.ndarray) -> int:
    _, counts = np.unique(values, return_counts=True)
    return int((counts * (counts - 1) // 2).sum())


def _count_inversions(seq: np.ndarray) -> int:
    """Pairs (i, j) with i < j and seq[i] > seq[j], via a Fenwick tree."""
    ranks = np.searchsorted(np.unique(seq), seq) + 1
    size = int(ranks.max())
    tree = np.zeros(size + 1, dtype=np.int64)
    inversions = 0
    for i, r in enumerate(ranks):
        # count previous elements with rank <= r, subtract from i
        j = r
        seen_le = 0
        while j > 0:
            seen_le += tree[j]
            j -= j & (-j)
        inversions += i - int(seen_le)
        j = r
        while j <= size:
            tree[j] += 1
            j += j & (-j)
    return inversions


def kendall_tau(x, y) -> float:
    """Tau-b: (concordant - discordant) / sqrt((n0-n1)(n0-n2))."""
    xv, yv = _as_pair(x, y)
    n = xv.shape[0]
    n0 = n * (n - 1) // 2
    n1 = _tie_pair_count(xv)
    n2 = _tie_pair_count(yv)
    pair_view = np.rec.fromarrays([xv, yv])
    n3 = _tie_pair_count(pair_view)
    if n0 == n1 or n0 == n2:
        raise DegenerateInput("kendall tau undefined when all pairs are tied")
    order = np.lexsort((yv, xv))
    discordant = _count_inversions(yv[order])
    concordant = n0 - n1 - n2 + n3 - discordant
    return (concordant - discordant) / math.sqrt(float(n0 - n1) * float(n0 - n2))
