"""Lookup-table critic: per-state unit-norm embeddings trained by explicit
InfoNCE gradient steps, plus the scalar-table ablation and pinning interventions.

The backward loss is the default: softmax responsibilities are normalized over
anchors (columns of the probability matrix sum to one). Both contrastive roles
read and write the same table because the anchor embedding of a pair (s, a) is
the next-state row under the known dynamics.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels

NORM_TOL = 1e-9


@dataclass
class UpdateConfig:
    learning_rate: float = 1e-2
    batch_size: int = 128
    normalize: bool = True
    forward: bool = False  # forward InfoNCE: responsibilities normalized over futures
    anchor_stop_gradient: bool = False

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TripletBatch:
    """Parallel anchor/future state ids; anchors are next-state ids."""

    anchors: np.ndarray
    futures: np.ndarray

    def __post_init__(self) -> None:
        self.anchors = np.asarray(self.anchors, dtype=np.int64)
        self.futures = np.asarray(self.futures, dtype=np.int64)
        if self.anchors.shape != self.futures.shape or self.anchors.ndim != 1:
            raise ValueError("anchors and futures must be 1-D and equally long")
        if len(self.anchors) < 1:
            raise ValueError("batch must be non-empty")

    def __len__(self) -> int:
        return len(self.anchors)


@dataclass
class EmbeddingTable:
    """Dense (num_states, dim) matrix of unit-norm rows with optional pins."""

    vectors: np.ndarray
    pinned: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def num_states(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def row(self, s: int) -> np.ndarray:
        return self.vectors[s]

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.vectors.copy(), {s: v.copy() for s, v in self.pinned.items()})

    def apply_pins(self) -> None:
        for s, v in self.pinned.items():
            self.vectors[s] = v

    def max_norm_deviation(self) -> float:
        return float(np.abs(np.linalg.norm(self.vectors, axis=1) - 1.0).max())


def normalize_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot normalize a zero row")
    return m / norms


def init_table(
    num_states: int,
    dim: int = 16,
    common_scale: float = 1.0,
    noise_scale: float = 0.1,
    seed: int | np.random.Generator = 0,
) -> EmbeddingTable:
    """Shared Gaussian seed plus per-state Gaussian noise, rows unit-normalized.

    The shared component x has entries iid N(0, 1/dim); the per-state noise has
    entries iid N(0, noise_scale^2 / dim). With noise_scale=0 every row equals
    x / ||x|| and all pairwise similarities are exactly 1.
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    if noise_scale < 0:
        raise ValueError("noise_scale must be >= 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = rng.normal(0.0, np.sqrt(1.0 / dim), size=dim)
    eps = rng.normal(0.0, noise_scale / np.sqrt(dim), size=(num_states, dim))
    rows = common_scale * x + eps
    return EmbeddingTable(normalize_rows(rows))


def prob_matrix(table: EmbeddingTable, batch: TripletBatch, forward: bool = False) -> np.ndarray:
    """Softmax responsibilities p[i, j] for anchor i against future j.

    Backward (default): columns are normalized over anchors, sum(p[:, j]) == 1.
    Forward: rows are normalized over futures.
    """
    logits = table.vectors[batch.anchors] @ table.vectors[batch.futures].T
    axis = 1 if forward else 0
    logits = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=axis, keepdims=True)


def infonce_loss(table: EmbeddingTable, batch: TripletBatch, forward: bool = False) -> float:
    """Summed (not averaged) contrastive loss for the batch."""
    logits = table.vectors[batch.anchors] @ table.vectors[batch.futures].T
    axis = 1 if forward else 0
    shifted = logits - logits.max(axis=axis, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=axis)) + logits.max(axis=axis)
    return float(np.sum(log_z - np.diag(logits)))


def infonce_gradient_field(
    table: EmbeddingTable, batch: TripletBatch, cfg: UpdateConfig
) -> np.ndarray:
    """Per-state summed ascent direction (the update before the learning rate).

    States occurring in several slots, or in both roles, accumulate all their
    slot gradients into one row of the field.
    """
    p = prob_matrix(table, batch, forward=cfg.forward)
    delta = np.eye(len(batch))
    field_ = np.zeros_like(table.vectors)
    if not cfg.anchor_stop_gradient:
        anchor_grads = (delta - p) @ table.vectors[batch.futures]
        np.add.at(field_, batch.anchors, anchor_grads)
    future_grads = (delta - p).T @ table.vectors[batch.anchors]
    np.add.at(field_, batch.futures, future_grads)
    return field_


def infonce_step(table: EmbeddingTable, batch: TripletBatch, cfg: UpdateConfig) -> EmbeddingTable:
    """One accumulated gradient step, one normalization, pins restored. In place."""
    _kernels.infonce_batch_update(
        table.vectors,
        batch.anchors,
        batch.futures,
        cfg.learning_rate,
        forward=cfg.forward,
        anchor_stop_gradient=cfg.anchor_stop_gradient,
        normalize=cfg.normalize,
    )
    table.apply_pins()
    return table


def psi_similarity(table: EmbeddingTable, s: int, g: int) -> float:
    return float(table.vectors[s] @ table.vectors[g])


def similarity_map(table: EmbeddingTable, goal_vec: np.ndarray) -> np.ndarray:
    """Inner product of every state row with a goal embedding."""
    return table.vectors @ goal_vec


def pin_region(table: EmbeddingTable, states, target: np.ndarray) -> EmbeddingTable:
    """Pin the given states to a fixed unit vector through all later updates."""
    target = np.asarray(target, dtype=np.float64)
    if abs(np.linalg.norm(target) - 1.0) > 1e-6:
        raise ValueError("pin target must have unit norm (tolerance 1e-6)")
    for s in states:
        table.pinned[int(s)] = target.copy()
    table.apply_pins()
    return table


# ---------------------------------------------------------------------------
# scalar-table ablation: raw state-state similarity scores in place of vectors


@dataclass
class ScalarSimTable:
    sims: np.ndarray  # (num_states, num_states), unnormalized logits

    @property
    def num_states(self) -> int:
        return self.sims.shape[0]

    def copy(self) -> "ScalarSimTable":
        return ScalarSimTable(self.sims.copy())


def init_scalar_table(num_states: int, fill: float = 1.0) -> ScalarSimTable:
    return ScalarSimTable(np.full((num_states, num_states), fill, dtype=np.float64))


def scalar_table_from_embeddings(table: EmbeddingTable) -> ScalarSimTable:
    """Gram matrix of an embedding table, so the ablation starts from the
    same similarity landscape as the vector model."""
    return ScalarSimTable(table.vectors @ table.vectors.T)


def scalar_prob_matrix(table: ScalarSimTable, batch: TripletBatch) -> np.ndarray:
    logits = table.sims[np.ix_(batch.anchors, batch.futures)]
    logits = logits - logits.max(axis=0, keepdims=True)  # scalar logits are unbounded
    e = np.exp(logits)
    return e / e.sum(axis=0, keepdims=True)


def scalar_loss(table: ScalarSimTable, batch: TripletBatch) -> float:
    logits = table.sims[np.ix_(batch.anchors, batch.futures)]
    shifted = logits - logits.max(axis=0, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=0)) + logits.max(axis=0)
    return float(np.sum(log_z - np.diag(logits)))


def scalar_step(table: ScalarSimTable, batch: TripletBatch, cfg: UpdateConfig) -> ScalarSimTable:
    """Same softmax-responsibility gradient applied to scalar logits; no
    normalization. Duplicate (anchor, future) pairs accumulate."""
    _kernels.scalar_batch_update(table.sims, batch.anchors, batch.futures, cfg.learning_rate)
    return table


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_VERSION = 1


def save_table(
    table: EmbeddingTable, path: str | Path, seed: int | None = None, step: int | None = None
) -> Path:
    """Write <path>.npy plus a JSON sidecar; lossless float64 round trip."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path.with_suffix(".npy"), table.vectors)
    meta = {
        "version": CHECKPOINT_VERSION,
        "num_states": table.num_states,
        "dim": table.dim,
        "seed": seed,
        "step": step,
        "pinned_ids": sorted(table.pinned),
    }
    if table.pinned:
        pins = np.stack([table.pinned[s] for s in sorted(table.pinned)])
        np.save(path.with_suffix(".pins.npy"), pins)
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    return path.with_suffix(".npy")


def load_table(path: str | Path) -> tuple[EmbeddingTable, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('version')!r}")
    vectors = np.load(path.with_suffix(".npy"))
    pinned: dict[int, np.ndarray] = {}
    if meta["pinned_ids"]:
        pins = np.load(path.with_suffix(".pins.npy"))
        pinned = {int(s): pins[i] for i, s in enumerate(meta["pinned_ids"])}
    return EmbeddingTable(vectors, pinned), meta
