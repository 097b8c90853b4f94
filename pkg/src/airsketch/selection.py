"""Threshold-based selection of received sketches.

A slot is kept when its denoising factor is at most the threshold. The
threshold minimizes ``(1/M~) * (1 + r sigma2 eta_th / (2 Tr(X^T X)))^2`` over
the observed factors, where ``M~`` counts the kept slots.
"""

from dataclasses import dataclass
import math

import numpy as np


@dataclass(frozen=True)
class SelectionDecision:
    threshold: float
    selected_slots: tuple
    fallback: bool = False

    @property
    def M_tilde(self):
        return len(self.selected_slots)


def select(etas, eta_th):
    etas = np.asarray(etas, dtype=float)
    if np.any(etas <= 0):
        raise ValueError("denoising factors must be positive")
    return SelectionDecision(float(eta_th), tuple(int(i) for i in np.flatnonzero(etas <= eta_th)))


def threshold_objective(eta_th, M_tilde, r, sigma2, global_trace):
    return (1.0 + r * sigma2 * eta_th / (2.0 * global_trace)) ** 2 / M_tilde


def optimize_threshold(etas, r, sigma2, global_trace, M=None):
    """Best threshold among the observed factors, by one sort and one scan.

    With ``M`` given, candidates keeping fewer than ``ceil(r / M)`` slots are
    skipped so detection stays feasible. Ties in the objective resolve to the
    smaller threshold. Returns ``(eta_th, objective)``; ``(nan, nan)`` when
    no candidate is feasible.
    """
    etas = np.asarray(etas, dtype=float)
    if etas.size == 0:
        raise ValueError("empty denoising-factor history")
    if global_trace <= 0:
        raise ValueError("global trace must be positive")
    values = np.sort(etas)
    # kept count for threshold values[i] includes every tie
    kept = np.searchsorted(values, values, side="right")
    obj = threshold_objective(values, kept, r, sigma2, global_trace)
    if M is not None:
        obj = np.where(kept * M >= r, obj, np.inf)
    if not np.isfinite(obj).any():
        return math.nan, math.nan
    best = int(np.argmin(obj))  # first minimum = smallest threshold
    return float(values[best]), float(obj[best])


def choose_slots(etas, r, sigma2, global_trace, M):
    """Optimized selection; falls back to every slot when nothing is feasible."""
    eta_th, _ = optimize_threshold(etas, r, sigma2, global_trace, M)
    if math.isnan(eta_th):
        return SelectionDecision(math.inf, tuple(range(len(etas))), fallback=True)
    return select(etas, eta_th)
