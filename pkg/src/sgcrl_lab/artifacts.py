"""Persistent run artifacts.

On-disk layout, one directory per run:

    manifest.json            schema version, config, seed, code version
    events.json              first-success events and run totals
    checkpoints.csv          episode, eval_success_k, eval_success_n, pearson_r, coverage
    psi_sim/<episode>.csv    state_id, similarity, visits
    embeddings/<episode>.npy (+ .json sidecar) optional snapshots
    extras.csv               optional recipe-specific per-checkpoint columns

Floats are serialized with round-trip precision; loading a directory written
by a different schema version fails loudly.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


@dataclass
class Checkpoint:
    episode: int
    psi_sim: np.ndarray
    visitation: np.ndarray
    eval_success_k: int
    eval_success_n: int
    snapshot: np.ndarray | None = None
    extras: dict = field(default_factory=dict)


@dataclass
class RunArtifact:
    manifest: dict
    checkpoints: list[Checkpoint]
    events: dict

    def validate(self) -> None:
        episodes = [ck.episode for ck in self.checkpoints]
        if any(b <= a for a, b in zip(episodes, episodes[1:])):
            raise ValueError("checkpoint episodes must strictly increase")
        for ck in self.checkpoints:
            sims = np.asarray(ck.psi_sim)
            if not np.all(np.isfinite(sims)):
                raise ValueError("psi_sim contains non-finite values")


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_artifact(artifact: RunArtifact, out_dir: str | Path, incomplete: bool = False) -> Path:
    """Write the artifact; lossless round trip via load_artifact."""
    from .metrics import coverage, visitation_similarity_correlation

    artifact.validate()
    out = Path(out_dir)
    (out / "psi_sim").mkdir(parents=True, exist_ok=True)
    manifest = dict(artifact.manifest)
    manifest["schema_version"] = SCHEMA_VERSION
    manifest["incomplete"] = bool(incomplete)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    (out / "events.json").write_text(json.dumps(artifact.events, indent=2, sort_keys=True))

    with open(out / "checkpoints.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "eval_success_k", "eval_success_n", "pearson_r", "coverage"])
        for ck in artifact.checkpoints:
            rec = visitation_similarity_correlation(ck.visitation, ck.psi_sim, ck.episode)
            w.writerow(
                [
                    ck.episode,
                    ck.eval_success_k,
                    ck.eval_success_n,
                    _fmt(rec.pearson_r) if rec.defined else "",
                    _fmt(coverage(ck.visitation)),
                ]
            )

    for ck in artifact.checkpoints:
        with open(out / "psi_sim" / f"{ck.episode}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["state_id", "similarity", "visits"])
            for s, (sim, visits) in enumerate(zip(ck.psi_sim, ck.visitation)):
                w.writerow([s, _fmt(sim), int(visits)])

    snaps = [ck for ck in artifact.checkpoints if ck.snapshot is not None]
    if snaps:
        (out / "embeddings").mkdir(exist_ok=True)
        for ck in snaps:
            np.save(out / "embeddings" / f"{ck.episode}.npy", ck.snapshot)

    extra_keys = sorted({k for ck in artifact.checkpoints for k in ck.extras})
    if extra_keys:
        with open(out / "extras.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["episode"] + extra_keys)
            for ck in artifact.checkpoints:
                w.writerow([ck.episode] + [ck.extras.get(k, "") for k in extra_keys])
    return out


def load_artifact(path: str | Path) -> RunArtifact:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    version = manifest.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ValueError(f"artifact schema version {version!r} != supported {SCHEMA_VERSION}")
    manifest.pop("incomplete", None)
    events = json.loads((path / "events.json").read_text())

    extras_by_episode: dict[int, dict] = {}
    extras_path = path / "extras.csv"
    if extras_path.exists():
        with open(extras_path, newline="") as fh:
            for row in csv.DictReader(fh):
                ep = int(row.pop("episode"))
                extras_by_episode[ep] = {k: int(v) for k, v in row.items() if v != ""}

    checkpoints = []
    with open(path / "checkpoints.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            ep = int(row["episode"])
            states, sims, visits = [], [], []
            with open(path / "psi_sim" / f"{ep}.csv", newline="") as psf:
                for prow in csv.DictReader(psf):
                    states.append(int(prow["state_id"]))
                    sims.append(float(prow["similarity"]))
                    visits.append(int(prow["visits"]))
            snap_path = path / "embeddings" / f"{ep}.npy"
            checkpoints.append(
                Checkpoint(
                    episode=ep,
                    psi_sim=np.asarray(sims),
                    visitation=np.asarray(visits, dtype=np.int64),
                    eval_success_k=int(row["eval_success_k"]),
                    eval_success_n=int(row["eval_success_n"]),
                    snapshot=np.load(snap_path) if snap_path.exists() else None,
                    extras=extras_by_episode.get(ep, {}),
                )
            )
    return RunArtifact(manifest=manifest, checkpoints=checkpoints, events=events)


def is_complete(path: str | Path) -> bool:
    try:
        manifest = json.loads((Path(path) / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError):
        return False
    return manifest.get("schema_version") == SCHEMA_VERSION and not manifest.get("incomplete")
