"""Actor and training loop: softmax action selection against a commanded goal
embedding, episode collection into a bounded replay buffer, geometric future
sampling, and the yoked / multi-goal / scalar-ablation variants.

One training loop owns its environment, critic, and buffer. Randomness is
split by role (collection / updates / evaluation) so that a run yoked to an
identically seeded copy of itself reproduces plain training bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Protocol

import numpy as np

from . import _kernels
from .artifacts import Checkpoint, RunArtifact
from .embeddings import (
    EmbeddingTable,
    ScalarSimTable,
    TripletBatch,
    UpdateConfig,
    infonce_step,
    init_table,
    scalar_step,
    scalar_table_from_embeddings,
    similarity_map,
)
from .envs import EpisodeSpec, StateId, TabularEnv


@dataclass
class PolicyConfig:
    """Softmax temperature and the commanded goal embedding."""

    goal_embedding: np.ndarray
    temperature: float = 0.1

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        self.goal_embedding = np.ascontiguousarray(self.goal_embedding, dtype=np.float64)
        if abs(np.linalg.norm(self.goal_embedding) - 1.0) > 1e-6:
            raise ValueError("goal_embedding must have unit norm (tolerance 1e-6)")


@dataclass(frozen=True)
class GoalSpec:
    """Commanded goal: a real state, an imaginary vector, or a weighted set."""

    kind: str  # "real" | "imaginary" | "multi"
    state: StateId | None = None
    vector: np.ndarray | None = None
    goals: tuple[tuple[StateId, float], ...] = ()

    @classmethod
    def real(cls, state: StateId) -> "GoalSpec":
        return cls(kind="real", state=int(state))

    @classmethod
    def imaginary(cls, vector: np.ndarray) -> "GoalSpec":
        v = np.asarray(vector, dtype=np.float64)
        v = v / np.linalg.norm(v)
        return cls(kind="imaginary", vector=v)

    @classmethod
    def multi(cls, goals) -> "GoalSpec":
        goals = tuple((int(s), float(w)) for s, w in goals)
        if not goals or any(w <= 0 or not math.isfinite(w) for _, w in goals):
            raise ValueError("multi-goal weights must be positive and finite")
        return cls(kind="multi", goals=goals)

    def real_states(self) -> list[StateId]:
        if self.kind == "real":
            return [self.state]
        if self.kind == "multi":
            return [s for s, _ in self.goals]
        return []

    def describe(self) -> dict:
        if self.kind == "real":
            return {"kind": "real", "state": self.state}
        if self.kind == "imaginary":
            return {"kind": "imaginary", "dim": int(self.vector.shape[0])}
        return {"kind": "multi", "goals": [list(g) for g in self.goals]}


@dataclass
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    success: bool

    @property
    def num_transitions(self) -> int:
        return len(self.actions)


class ReplayBuffer:
    """Episode ring buffer bounded by total stored transitions."""

    def __init__(self, capacity_transitions: int = 1000):
        if capacity_transitions < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity_transitions
        self.episodes: list[Trajectory] = []
        self.total_transitions = 0

    def add(self, traj: Trajectory) -> None:
        if traj.num_transitions == 0:
            return
        self.episodes.append(traj)
        self.total_transitions += traj.num_transitions
        while self.total_transitions > self.capacity and len(self.episodes) > 1:
            dropped = self.episodes.pop(0)
            self.total_transitions -= dropped.num_transitions
        # a single episode longer than the capacity is kept whole

    def __len__(self) -> int:
        return self.total_transitions


def combined_goal(table: EmbeddingTable, goals) -> np.ndarray:
    """Weight-summed, L2-normalized combination of goal rows."""
    acc = np.zeros(table.dim)
    for s, w in goals:
        acc += w * table.vectors[int(s)]
    norm = np.linalg.norm(acc)
    if norm < 1e-9:
        raise ValueError("combined goal embedding is degenerate (near-zero sum)")
    return acc / norm


def random_goal_policy(
    table: EmbeddingTable, rng: np.random.Generator, temperature: float = 0.1
) -> PolicyConfig:
    """Fresh Gaussian goal embedding, unit-normalized; redraw every episode."""
    y = rng.standard_normal(table.dim)
    return PolicyConfig(goal_embedding=y / np.linalg.norm(y), temperature=temperature)


def action_probabilities(
    env: TabularEnv, vectors: np.ndarray, s: StateId, policy: PolicyConfig
) -> np.ndarray:
    logits = vectors[env.transition[s]] @ policy.goal_embedding / policy.temperature
    e = np.exp(logits - logits.max())
    return e / e.sum()


def select_action(
    env: TabularEnv,
    table: EmbeddingTable,
    s: StateId,
    policy: PolicyConfig,
    rng: np.random.Generator,
) -> int:
    """Sample an action from the softmax over next-state goal similarities."""
    probs = action_probabilities(env, table.vectors, s, policy)
    cdf = np.cumsum(probs)
    a = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(a, env.num_actions - 1)


def collect_episode(
    env: TabularEnv,
    vectors: np.ndarray,
    policy: PolicyConfig,
    spec: EpisodeSpec,
    rng: np.random.Generator,
) -> Trajectory:
    """Roll out from env.start for at most max_steps, stopping early on goal.

    Exactly max_steps uniforms are drawn up front so the RNG stream does not
    depend on episode length or kernel backend.
    """
    uniforms = rng.random(spec.max_steps)
    states, actions, success = _kernels.rollout(
        np.ascontiguousarray(env.transition),
        np.ascontiguousarray(vectors),
        policy.goal_embedding,
        int(env.start),
        int(env.goal),
        policy.temperature,
        spec.max_steps,
        spec.terminate_on_goal,
        uniforms,
    )
    return Trajectory(states=states, actions=actions, success=bool(success))


def sample_triplets(
    buffer: ReplayBuffer,
    gamma: float,
    n: int,
    rng: np.random.Generator,
    truncation: str = "resample",
) -> TripletBatch:
    """Uniform anchor positions over stored transitions; future offsets are
    geometric, truncated at the trajectory end.

    ``resample`` conditions the offset on landing inside the trajectory (drawn
    by inverse CDF on the truncated support, which equals resampling until
    feasible: P(d) = (1-g) g^(d-1) / (1 - g^L)). ``clamp`` clips overshooting
    offsets to the final state, so the terminal state absorbs the geometric
    tail mass.
    """
    if len(buffer) == 0:
        raise ValueError("cannot sample triplets from an empty buffer")
    if truncation not in ("resample", "clamp"):
        raise ValueError("truncation must be 'resample' or 'clamp'")
    lengths = np.array([ep.num_transitions for ep in buffer.episodes])
    cum = np.cumsum(lengths)
    flat = rng.integers(0, cum[-1], size=n)
    ep_idx = np.searchsorted(cum, flat, side="right")
    t = flat - np.concatenate([[0], cum[:-1]])[ep_idx]
    span = lengths[ep_idx] - t  # feasible offsets: 1..span
    if gamma == 0.0:
        delta = np.ones(n, dtype=np.int64)
    else:
        u = rng.random(n)
        if truncation == "resample":
            delta = np.ceil(np.log1p(-u * (1.0 - gamma**span)) / np.log(gamma)).astype(np.int64)
        else:
            delta = np.ceil(np.log1p(-u) / np.log(gamma)).astype(np.int64)
        delta = np.clip(delta, 1, span)
    anchors = np.empty(n, dtype=np.int64)
    futures = np.empty(n, dtype=np.int64)
    for i in range(n):
        states = buffer.episodes[ep_idx[i]].states
        anchors[i] = states[t[i] + 1]
        futures[i] = states[t[i] + delta[i]]
    return TripletBatch(anchors=anchors, futures=futures)


# ---------------------------------------------------------------------------
# critics: vector table (the model) and scalar table (the ablation)


class Critic(Protocol):
    def goal_embedding(self, goal_spec: GoalSpec) -> np.ndarray: ...
    def policy_vectors(self, goal_vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...
    def update(self, batch: TripletBatch) -> None: ...
    def sim_map(self, goal_vec: np.ndarray) -> np.ndarray: ...
    def snapshot(self) -> np.ndarray: ...


class VectorCritic:
    def __init__(
        self,
        table: EmbeddingTable,
        cfg: UpdateConfig,
        goal_mirrors: list[tuple[int, int, float]] | None = None,
    ):
        # goal_mirrors: (state, source_state, sign) triples kept equal to
        # sign * current source row after every update, so an intervention
        # region tracks the (possibly drifting) goal embedding exactly
        self.table = table
        self.cfg = cfg
        self.goal_mirrors = list(goal_mirrors or [])
        self._apply_mirrors()

    def _apply_mirrors(self) -> None:
        for state, source, sign in self.goal_mirrors:
            self.table.vectors[state] = sign * self.table.vectors[source]

    def goal_embedding(self, goal_spec: GoalSpec) -> np.ndarray:
        if goal_spec.kind == "real":
            return self.table.vectors[goal_spec.state].copy()
        if goal_spec.kind == "imaginary":
            return goal_spec.vector.copy()
        return combined_goal(self.table, goal_spec.goals)

    def policy_vectors(self, goal_vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.table.vectors, goal_vec

    def update(self, batch: TripletBatch) -> None:
        infonce_step(self.table, batch, self.cfg)
        self._apply_mirrors()

    def sim_map(self, goal_vec: np.ndarray) -> np.ndarray:
        return similarity_map(self.table, goal_vec)

    def snapshot(self) -> np.ndarray:
        return self.table.vectors.copy()


class ScalarCritic:
    """State-goal similarity scores kept directly in an SxS table."""

    def __init__(self, sims: ScalarSimTable, cfg: UpdateConfig, goal: StateId):
        self.sims = sims
        self.cfg = cfg
        self.goal = int(goal)

    def goal_embedding(self, goal_spec: GoalSpec) -> np.ndarray:
        if goal_spec.kind != "real":
            raise ValueError("the scalar-table ablation needs a real goal state")
        return np.ones(1)

    def policy_vectors(self, goal_vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        # the goal column, viewed as 1-d embeddings, reuses the rollout kernel
        return np.ascontiguousarray(self.sims.sims[:, self.goal])[:, None], goal_vec

    def update(self, batch: TripletBatch) -> None:
        scalar_step(self.sims, batch, self.cfg)

    def sim_map(self, goal_vec: np.ndarray | None = None) -> np.ndarray:
        # goal_vec is ignored: similarities live directly in the goal column
        return self.sims.sims[:, self.goal].copy()

    def snapshot(self) -> np.ndarray:
        return self.sims.sims[:, self.goal].copy()


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainLoopConfig:
    gamma: float = 0.99
    episodes: int = 1000
    updates_per_episode: int = 10
    eval_every: int = 25
    eval_runs: int = 5
    seed: int = 0
    early_stop_after_majority: int | None = None
    checkpoint_first_episode: bool = True
    record_snapshots: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if self.episodes < 1 or self.updates_per_episode < 0:
            raise ValueError("episodes >= 1 and updates_per_episode >= 0 required")
        if self.eval_every < 1 or self.eval_runs < 1:
            raise ValueError("eval_every and eval_runs must be >= 1")


@dataclass
class AgentConfig:
    update: UpdateConfig = field(default_factory=UpdateConfig)
    loop: TrainLoopConfig = field(default_factory=TrainLoopConfig)
    episode: EpisodeSpec = field(default_factory=EpisodeSpec)
    temperature: float = 0.1
    buffer_capacity: int = 1000
    dim: int = 16
    common_scale: float = 1.0
    noise_scale: float = 0.1
    collection: str = "single"  # "single" | "random"
    triplet_truncation: str = "resample"  # "resample" | "clamp"


def split_rng(seed: int, n: int = 3) -> list[np.random.Generator]:
    """Independent role-separated generators from one seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


class Collector(Protocol):
    def collect(self) -> Trajectory: ...


class SgcrlRunner:
    """Owns one critic, buffer, and rng set; steps one episode at a time."""

    def __init__(
        self,
        env: TabularEnv,
        goal_spec: GoalSpec,
        cfg: AgentConfig,
        seed: int,
        critic: Critic | None = None,
    ):
        self.env = env
        self.goal_spec = goal_spec
        self.cfg = cfg
        self.seed = seed
        self.collect_rng, self.update_rng, self.eval_rng = split_rng(seed)
        if critic is None:
            table = init_table(
                env.num_states, cfg.dim, cfg.common_scale, cfg.noise_scale, seed=self.update_rng
            )
            critic = VectorCritic(table, cfg.update)
        self.critic = critic
        self.buffer = ReplayBuffer(cfg.buffer_capacity)
        self.episode_idx = 0
        self.transitions = 0
        self.visitation = np.zeros(env.num_states, dtype=np.int64)
        self.first_success_episode: int | None = None
        self.first_success_transitions: int | None = None

    def _collection_embedding(self) -> np.ndarray:
        if self.cfg.collection == "random":
            return random_goal_policy_for(
                self.critic, self.collect_rng, self.cfg.temperature
            ).goal_embedding
        return self.critic.goal_embedding(self.goal_spec)

    def collect(self) -> Trajectory:
        vectors, goal_vec = self.critic.policy_vectors(self._collection_embedding())
        policy = PolicyConfig(goal_embedding=goal_vec, temperature=self.cfg.temperature)
        return collect_episode(self.env, vectors, policy, self.cfg.episode, self.collect_rng)

    def absorb(self, traj: Trajectory) -> None:
        """Account for one episode of experience and run the critic updates."""
        self.episode_idx += 1
        self.transitions += traj.num_transitions
        np.add.at(self.visitation, traj.states, 1)
        if traj.success and self.first_success_episode is None:
            hits = np.flatnonzero(traj.states == self.env.goal)
            steps_to_goal = int(hits[0]) if len(hits) else traj.num_transitions
            self.first_success_episode = self.episode_idx
            self.first_success_transitions = self.transitions - traj.num_transitions + steps_to_goal
        self.buffer.add(traj)
        if len(self.buffer) > 0:
            for _ in range(self.cfg.loop.updates_per_episode):
                batch = sample_triplets(
                    self.buffer,
                    self.cfg.loop.gamma,
                    self.cfg.update.batch_size,
                    self.update_rng,
                    truncation=self.cfg.triplet_truncation,
                )
                self.critic.update(batch)

    def step_episode(self) -> Trajectory:
        traj = self.collect()
        self.absorb(traj)
        return traj

    def evaluate(self) -> tuple[int, dict]:
        """Run eval rollouts with the current policy; returns successes and
        per-goal reach counts for multi-goal runs."""
        vectors, goal_vec = self.critic.policy_vectors(
            self.critic.goal_embedding(self.goal_spec)
        )
        policy = PolicyConfig(goal_embedding=goal_vec, temperature=self.cfg.temperature)
        goals = self.goal_spec.real_states()
        successes = 0
        reach_counts = dict.fromkeys(goals, 0)
        both = 0
        for _ in range(self.cfg.loop.eval_runs):
            traj = collect_episode(self.env, vectors, policy, self.cfg.episode, self.eval_rng)
            if self.goal_spec.kind == "multi":
                visited = set(traj.states.tolist())
                hits = [g for g in goals if g in visited]
                for g in hits:
                    reach_counts[g] += 1
                if len(hits) == len(goals):
                    both += 1
                    successes += 1
            elif traj.success:
                successes += 1
        extras: dict = {}
        if self.goal_spec.kind == "multi":
            for k, g in enumerate(goals):
                extras[f"reach_goal{k}"] = reach_counts[g]
            extras["reach_all"] = both
        return successes, extras

    def checkpoint(self) -> Checkpoint:
        sim = self.critic.sim_map(self.critic.goal_embedding(self.goal_spec))
        eval_k, extras = self.evaluate()
        return Checkpoint(
            episode=self.episode_idx,
            psi_sim=np.asarray(sim, dtype=np.float64).copy(),
            visitation=self.visitation.copy(),
            eval_success_k=eval_k,
            eval_success_n=self.cfg.loop.eval_runs,
            snapshot=self.critic.snapshot() if self.cfg.loop.record_snapshots else None,
            extras=extras,
        )


def random_goal_policy_for(critic: Critic, rng: np.random.Generator, temperature: float):
    if isinstance(critic, VectorCritic):
        return random_goal_policy(critic.table, rng, temperature)
    raise ValueError("random-goal collection needs a vector critic")


def _loop(runner: SgcrlRunner, collector: Collector | None) -> Iterator[Checkpoint]:
    cfg = runner.cfg.loop
    majority = cfg.eval_runs // 2 + 1
    first_majority: int | None = None
    stop_at: int | None = None
    for ep in range(1, cfg.episodes + 1):
        traj = collector.collect() if collector is not None else runner.collect()
        runner.absorb(traj)
        at_checkpoint = ep % cfg.eval_every == 0 or (ep == 1 and cfg.checkpoint_first_episode)
        if at_checkpoint or ep == cfg.episodes or ep == stop_at:
            ck = runner.checkpoint()
            yield ck
            if ck.eval_success_k >= majority and first_majority is None:
                first_majority = ep
                if cfg.early_stop_after_majority is not None:
                    stop_at = min(cfg.episodes, ep + cfg.early_stop_after_majority)
        if stop_at is not None and ep >= stop_at:
            break


def _assemble(
    runner: SgcrlRunner, checkpoints: list[Checkpoint], manifest_extra: dict | None = None
) -> RunArtifact:
    majority = runner.cfg.loop.eval_runs // 2 + 1
    first_majority = next(
        (ck.episode for ck in checkpoints if ck.eval_success_k >= majority), None
    )
    events = {
        "first_success_episode": runner.first_success_episode,
        "first_success_transitions": runner.first_success_transitions,
        "first_majority_success_episode": first_majority,
        "total_episodes": runner.episode_idx,
        "total_transitions": runner.transitions,
    }
    manifest = {
        "env": runner.env.name,
        "goal_spec": runner.goal_spec.describe(),
        "seed": runner.seed,
        "config": _config_dict(runner.cfg),
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    return RunArtifact(manifest=manifest, checkpoints=checkpoints, events=events)


def _config_dict(cfg: AgentConfig) -> dict:
    from dataclasses import asdict

    return asdict(cfg)


def train(
    env: TabularEnv,
    goal_spec: GoalSpec,
    cfg: AgentConfig,
    seed: int,
    critic: Critic | None = None,
    manifest_extra: dict | None = None,
) -> RunArtifact:
    """Full training run; returns the collected artifact."""
    runner = SgcrlRunner(env, goal_spec, cfg, seed, critic=critic)
    checkpoints = list(_loop(runner, collector=None))
    return _assemble(runner, checkpoints, manifest_extra)


def train_yoked(
    env: TabularEnv,
    collector: Collector,
    goal_spec: GoalSpec,
    cfg: AgentConfig,
    seed: int,
    critic: Critic | None = None,
    manifest_extra: dict | None = None,
) -> RunArtifact:
    """Representation learning on trajectories collected by another policy.

    The learner's buffer and updates are identical to plain training; only the
    data source differs. The learner's own policy is used for evaluation.
    """
    runner = SgcrlRunner(env, goal_spec, cfg, seed, critic=critic)
    checkpoints = list(_loop(runner, collector=collector))
    extra = {"yoked": True}
    if manifest_extra:
        extra.update(manifest_extra)
    return _assemble(runner, checkpoints, extra)


class SgcrlCollector:
    """An independent SGCRL agent used as a data source for yoked training."""

    def __init__(self, env: TabularEnv, goal_spec: GoalSpec, cfg: AgentConfig, seed: int):
        self.runner = SgcrlRunner(env, goal_spec, cfg, seed)

    def collect(self) -> Trajectory:
        traj = self.runner.collect()
        self.runner.absorb(traj)
        return traj
