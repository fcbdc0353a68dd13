"""Ranking metrics: AUROC (Mann-Whitney) and average precision."""

from __future__ import annotations

import numpy as np

from .errors import LengthMismatch, NoPositives, SingleClass
from .scoring import rank_normalize


def _check(labels, scores):
    y = np.asarray(labels).ravel().astype(bool)
    s = np.asarray(scores, dtype=np.float64).ravel()
    if len(y) != len(s):
        raise LengthMismatch(f"{len(y)} labels for {len(s)} scores")
    return y, s


def auroc(labels, scores) -> float:
    """Probability that a positive outscores a negative, ties counting half."""
    y, s = _check(labels, scores)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUROC needs both classes")
    ranks = rank_normalize(s) * len(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def aupr(labels, scores) -> float:
    """Average precision over a descending threshold sweep.

    Tied scores form a single threshold: AP = sum over thresholds of
    (recall gain) x (precision at that threshold).
    """
    y, s = _check(labels, scores)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise NoPositives("AUPR needs at least one positive")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    last = np.flatnonzero(np.concatenate([s_sorted[1:] != s_sorted[:-1], [True]]))
    tp = np.cumsum(y_sorted)[last]
    pred = last + 1
    precision = tp / pred
    recall = tp / n_pos
    gain = np.diff(np.concatenate([[0.0], recall]))
    return float(np.sum(gain * precision))
