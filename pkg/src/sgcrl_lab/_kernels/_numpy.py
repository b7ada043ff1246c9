"""Pure-numpy reference implementations of the hot kernels.

The compiled extension in ``_core.pyx`` mirrors these functions exactly; tests
pin both backends against each other and against independent oracles.
"""
from __future__ import annotations

import numpy as np

BACKEND = "numpy"


def _responsibilities(logits: np.ndarray, forward: bool) -> np.ndarray:
    axis = 1 if forward else 0
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def infonce_batch_update(
    vectors: np.ndarray,
    anchors: np.ndarray,
    futures: np.ndarray,
    eta: float,
    forward: bool = False,
    anchor_stop_gradient: bool = False,
    normalize: bool = True,
) -> None:
    """Accumulated contrastive gradient step on the table, in place.

    Slot gradients for repeated states (or states in both roles) are summed
    before a single normalization of the touched rows.
    """
    u = vectors[anchors]
    v = vectors[futures]
    p = _responsibilities(u @ v.T, forward)
    delta = np.eye(len(anchors))
    field = np.zeros_like(vectors)
    if not anchor_stop_gradient:
        np.add.at(field, anchors, (delta - p) @ v)
    np.add.at(field, futures, (delta - p).T @ u)
    touched = np.unique(np.concatenate([anchors, futures]))
    vectors[touched] += eta * field[touched]
    if normalize:
        norms = np.linalg.norm(vectors[touched], axis=1, keepdims=True)
        vectors[touched] /= norms


def scalar_batch_update(
    sims: np.ndarray, anchors: np.ndarray, futures: np.ndarray, eta: float
) -> None:
    """Backward InfoNCE gradient applied directly to scalar logits, in place."""
    logits = sims[np.ix_(anchors, futures)]
    p = _responsibilities(logits, forward=False)
    n = len(anchors)
    delta = np.eye(n)
    rows = np.broadcast_to(anchors[:, None], (n, n))
    cols = np.broadcast_to(futures[None, :], (n, n))
    np.add.at(sims, (rows, cols), eta * (delta - p))


def rollout(
    transition: np.ndarray,
    vectors: np.ndarray,
    goal_vec: np.ndarray,
    start: int,
    goal: int,
    tau: float,
    max_steps: int,
    terminate_on_goal: bool,
    uniforms: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, bool]:
    """Softmax rollout against a fixed goal embedding.

    One uniform variate is consumed per potential step (the caller draws
    ``max_steps`` of them up front), so the RNG stream advances identically
    across backends regardless of early termination.
    """
    states = np.empty(max_steps + 1, dtype=np.int64)
    actions = np.empty(max_steps, dtype=np.int64)
    s = start
    states[0] = s
    if terminate_on_goal and s == goal:
        return states[:1], actions[:0], True
    success = False
    t = 0
    for t in range(max_steps):
        logits = vectors[transition[s]] @ goal_vec / tau
        e = np.exp(logits - logits.max())
        cdf = np.cumsum(e)
        a = int(np.searchsorted(cdf, uniforms[t] * cdf[-1], side="right"))
        a = min(a, len(cdf) - 1)
        s = int(transition[s, a])
        actions[t] = a
        states[t + 1] = s
        if s == goal:
            success = True
            if terminate_on_goal:
                t += 1
                break
    else:
        t = max_steps
    return states[: t + 1], actions[:t], success
