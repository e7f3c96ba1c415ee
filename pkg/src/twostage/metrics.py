"""Missed-detection / false-alarm rates and the equal-error operating point.

A device is declared active when its score is strictly above the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class ErrorRates:
    mdp: Optional[float]
    fap: Optional[float]
    threshold_used: float
    equal_error: Optional[float] = None


def mdp_fap(truth, soft_scores, theta: float) -> ErrorRates:
    """Rates at a fixed threshold; a rate with an empty denominator is ``None``."""
    truth = np.asarray(truth).astype(bool)
    scores = np.asarray(soft_scores, dtype=float)
    if truth.shape != scores.shape:
        raise ValueError("truth and scores must have the same shape")
    detected = scores > theta
    n_active = int(truth.sum())
    n_idle = truth.size - n_active
    mdp = float(np.sum(truth & ~detected)) / n_active if n_active else None
    fap = float(np.sum(~truth & detected)) / n_idle if n_idle else None
    return ErrorRates(mdp, fap, float(theta))


def _sweep(scores, miss_weight, alarm_weight):
    """MDP/FAP at every distinct score used as threshold, plus ``-inf``.

    ``miss_weight`` / ``alarm_weight`` are per-sample weights of active /
    inactive entries; each set sums to one.
    """
    order = np.argsort(scores, kind="stable")
    scores = scores[order]
    below_miss = np.cumsum(miss_weight[order])
    # alarms counted from the top so an empty tail is exactly zero
    above_alarm = np.r_[np.cumsum(alarm_weight[order][::-1])[::-1][1:], 0.0]
    last_of_run = np.r_[scores[1:] != scores[:-1], True]
    thresholds = np.r_[-np.inf, scores[last_of_run]]
    mdp = np.clip(np.r_[0.0, below_miss[last_of_run]], 0.0, 1.0)
    fap = np.clip(np.r_[alarm_weight.sum(), above_alarm[last_of_run]], 0.0, 1.0)
    return thresholds, mdp, fap


def _crossing(thresholds, mdp, fap) -> ErrorRates:
    gap = np.abs(mdp - fap)
    # smallest gap, then smallest total error, then smallest threshold
    best = np.lexsort((thresholds, mdp + fap, np.round(gap, 12)))[0]
    return ErrorRates(float(mdp[best]), float(fap[best]), float(thresholds[best]),
                      float(0.5 * (mdp[best] + fap[best])))


def equal_error_rate(truth, soft_scores) -> ErrorRates:
    """Operating point where MDP and FAP are closest, reported as their mean."""
    return pooled_equal_error_rate([truth], [soft_scores])


def pooled_equal_error_rate(truths: Sequence, scores: Sequence) -> ErrorRates:
    """Equal-error point of the trial-averaged MDP and FAP under one common threshold.

    Every trial weighs the same, so the MDP (FAP) at the returned threshold
    is the mean of the per-trial MDPs (FAPs). Trials without an active or
    without an inactive device are left out of the corresponding average.
    """
    truths = [np.asarray(t).astype(bool) for t in truths]
    scores = [np.asarray(s, dtype=float) for s in scores]
    n_miss_trials = sum(1 for t in truths if t.any())
    n_alarm_trials = sum(1 for t in truths if not t.all())
    if n_miss_trials == 0 or n_alarm_trials == 0:
        raise UndefinedMetricError("equal-error rate needs both active and inactive devices")
    miss_w, alarm_w = [], []
    for t in truths:
        k = t.sum()
        miss_w.append(np.where(t, 1.0 / max(k, 1) / n_miss_trials, 0.0))
        alarm_w.append(np.where(t, 0.0, 1.0 / max(t.size - k, 1) / n_alarm_trials))
    return _crossing(*_sweep(np.concatenate(scores), np.concatenate(miss_w), np.concatenate(alarm_w)))


def binomial_se(rate: Optional[float], n: int) -> Optional[float]:
    if rate is None or n <= 0:
        return None
    return float(np.sqrt(rate * (1.0 - rate) / n))
