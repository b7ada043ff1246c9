"""Quantitative readouts: visitation/similarity correlation, coverage, and
success statistics over run artifacts."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .artifacts import RunArtifact


@dataclass(frozen=True)
class CorrelationRecord:
    episode: int
    pearson_r: float | None  # None when either variable has zero variance
    n_states: int

    @property
    def defined(self) -> bool:
        return self.pearson_r is not None


def pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be 1-D and equally long")
    if len(x) < 2:
        raise ValueError("need at least 2 points")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt(xc @ xc))
    sy = float(np.sqrt(yc @ yc))
    if sx == 0.0 or sy == 0.0:
        return None
    r = float((xc @ yc) / (sx * sy))
    return max(-1.0, min(1.0, r))


def visitation_similarity_correlation(
    visitation: np.ndarray,
    psi_sim: np.ndarray,
    episode: int = 0,
    exclude_unvisited: bool = False,
) -> CorrelationRecord:
    """Pearson correlation of visit counts against goal similarity.

    Never-visited states are included with count 0 by default; the
    ``exclude_unvisited`` flag preserves the alternative convention.
    """
    visitation = np.asarray(visitation, dtype=np.float64)
    psi_sim = np.asarray(psi_sim, dtype=np.float64)
    if visitation.shape != psi_sim.shape:
        raise ValueError("visitation and psi_sim must have the same length")
    if exclude_unvisited:
        mask = visitation > 0
        visitation, psi_sim = visitation[mask], psi_sim[mask]
    if len(visitation) < 2:
        return CorrelationRecord(episode=episode, pearson_r=None, n_states=len(visitation))
    return CorrelationRecord(
        episode=episode, pearson_r=pearson(visitation, psi_sim), n_states=len(visitation)
    )


def coverage(visitation: np.ndarray, num_states: int | None = None) -> float:
    visitation = np.asarray(visitation)
    n = len(visitation) if num_states is None else num_states
    if n == 0:
        return 0.0
    return float(np.count_nonzero(visitation > 0) / n)


@dataclass(frozen=True)
class SuccessSummary:
    first_success: int | None
    first_majority_success: int | None
    terminal_rate: float


def majority_threshold(n: int) -> int:
    return n // 2 + 1


def success_summary(artifact: RunArtifact, terminal_window: float = 0.1) -> SuccessSummary:
    """First-success events plus the mean eval success rate over the last
    ``terminal_window`` fraction of checkpoints."""
    first_majority = None
    for ck in artifact.checkpoints:
        if ck.eval_success_k >= majority_threshold(ck.eval_success_n):
            first_majority = ck.episode
            break
    rates = [ck.eval_success_k / ck.eval_success_n for ck in artifact.checkpoints]
    if rates:
        tail = max(1, math.ceil(terminal_window * len(rates)))
        terminal = float(np.mean(rates[-tail:]))
    else:
        terminal = 0.0
    return SuccessSummary(
        first_success=artifact.events.get("first_success_episode"),
        first_majority_success=first_majority,
        terminal_rate=terminal,
    )


def mean_and_se(values) -> tuple[float, float]:
    """Sample mean and standard error (ddof=1; SE 0 for a single value)."""
    arr = np.asarray(list(values), dtype=np.float64)
    if len(arr) == 0:
        return float("nan"), float("nan")
    if len(arr) == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(len(arr)))
