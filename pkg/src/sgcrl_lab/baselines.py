"""Classical tabular exploration baselines: R-MAX and PSRL.

Both receive the goal-indicator extrinsic reward (they are supervised
comparators), plan with value iteration against an absorbing goal, and emit
the same artifact schema as the contrastive agent, with their per-state value
estimates standing in for the similarity map.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .agent import Trajectory, split_rng
from .artifacts import Checkpoint, RunArtifact
from .envs import EpisodeSpec, TabularEnv


@dataclass
class ValueTable:
    v: np.ndarray
    q: np.ndarray
    policy: np.ndarray  # greedy action per state
    iterations: int


def value_iteration(
    transition_probs: np.ndarray,
    rewards: np.ndarray,
    gamma: float,
    tol: float = 1e-8,
    max_iters: int = 100_000,
    v0: np.ndarray | None = None,
) -> ValueTable:
    """Bellman backups until the sup-norm change drops below ``tol``.

    ``transition_probs`` is (S, A, S) with probability rows; ``rewards`` is
    (S, A). Rewards are collected at the current state-action, so an absorbing
    state with reward 1 is worth 1 / (1 - gamma). ``v0`` warm-starts the sweep.
    """
    probs = np.asarray(transition_probs, dtype=np.float64)
    rewards = np.asarray(rewards, dtype=np.float64)
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must be in [0, 1)")
    row_sums = probs.sum(axis=2)
    if not np.allclose(row_sums, 1.0, atol=1e-9):
        raise ValueError("transition rows must sum to 1")
    num_states = probs.shape[0]
    v = np.zeros(num_states) if v0 is None else np.asarray(v0, dtype=np.float64).copy()
    for it in range(1, max_iters + 1):
        q = rewards + gamma * probs @ v
        v_new = q.max(axis=1)
        delta = np.abs(v_new - v).max()
        v = v_new
        if delta < tol:
            break
    q = rewards + gamma * probs @ v
    return ValueTable(v=v, q=q, policy=q.argmax(axis=1), iterations=it)


def _goal_rewards(env: TabularEnv) -> np.ndarray:
    r = np.zeros((env.num_states, env.num_actions))
    r[env.goal, :] = 1.0
    return r


def _deterministic_probs(env: TabularEnv, absorbing_goal: bool = True) -> np.ndarray:
    probs = np.zeros((env.num_states, env.num_actions, env.num_states))
    for s in range(env.num_states):
        for a in range(env.num_actions):
            probs[s, a, env.transition[s, a]] = 1.0
    if absorbing_goal:
        probs[env.goal] = 0.0
        probs[env.goal, :, env.goal] = 1.0
    return probs


def _greedy_episode(
    env: TabularEnv,
    q: np.ndarray,
    spec: EpisodeSpec,
    rng: np.random.Generator,
) -> Trajectory:
    """Greedy rollout in the real environment; ties broken uniformly."""
    states = [env.start]
    actions = []
    s = env.start
    success = s == env.goal
    if not (success and spec.terminate_on_goal):
        for _ in range(spec.max_steps):
            row = q[s]
            best = np.flatnonzero(row >= row.max() - 1e-12)
            a = int(best[rng.integers(len(best))])
            s = int(env.transition[s, a])
            actions.append(a)
            states.append(s)
            if s == env.goal:
                success = True
                if spec.terminate_on_goal:
                    break
    return Trajectory(
        states=np.asarray(states, dtype=np.int64),
        actions=np.asarray(actions, dtype=np.int64),
        success=success,
    )


@dataclass
class RmaxState:
    visit_counts: np.ndarray  # (S, A)
    observed_next: np.ndarray  # (S, A), -1 while unknown
    known_threshold: int = 1
    r_max: float = 1.0


class RmaxAgent:
    """Optimism in the face of uncertainty: unknown pairs are self-loops worth
    r_max forever; known pairs use the observed deterministic transition."""

    def __init__(
        self,
        env: TabularEnv,
        gamma: float = 0.99,
        m: int = 1,
        r_max: float = 1.0,
        episode_spec: EpisodeSpec | None = None,
        seed: int = 0,
    ):
        self.env = env
        self.gamma = gamma
        self.spec = episode_spec or EpisodeSpec()
        self.state = RmaxState(
            visit_counts=np.zeros((env.num_states, env.num_actions), dtype=np.int64),
            observed_next=np.full((env.num_states, env.num_actions), -1, dtype=np.int64),
            known_threshold=m,
            r_max=r_max,
        )
        self.rng = np.random.default_rng(seed)
        self._plan: ValueTable | None = None
        self._stale = True

    def optimistic_model(self) -> tuple[np.ndarray, np.ndarray]:
        env, st = self.env, self.state
        probs = np.zeros((env.num_states, env.num_actions, env.num_states))
        rewards = _goal_rewards(env)
        known = st.visit_counts >= st.known_threshold
        for s in range(env.num_states):
            for a in range(env.num_actions):
                if known[s, a]:
                    probs[s, a, st.observed_next[s, a]] = 1.0
                else:
                    probs[s, a, s] = 1.0
                    rewards[s, a] = st.r_max
        # the goal is absorbing once any of its pairs is known
        if known[env.goal].any():
            probs[env.goal] = 0.0
            probs[env.goal, :, env.goal] = 1.0
            rewards[env.goal] = 1.0
        return probs, rewards

    def plan(self) -> ValueTable:
        if self._plan is None or self._stale:
            probs, rewards = self.optimistic_model()
            v0 = self._plan.v if self._plan is not None else None
            self._plan = value_iteration(probs, rewards, self.gamma, tol=1e-8, v0=v0)
            self._stale = False
        return self._plan

    def collect(self) -> Trajectory:
        """One optimistically planned greedy episode; counts updated on the fly."""
        plan = self.plan()
        traj = _greedy_episode(self.env, plan.q, self.spec, self.rng)
        known = self.state.visit_counts >= self.state.known_threshold
        for s, a in zip(traj.states[:-1], traj.actions):
            self.state.visit_counts[s, a] += 1
            if not known[s, a]:
                self._stale = True  # new knowledge invalidates the optimistic plan
            self.state.observed_next[s, a] = self.env.transition[s, a]
        return traj

    def value_map(self) -> np.ndarray:
        plan = self._plan or self.plan()
        return plan.v.copy()

    def eval_q(self) -> np.ndarray:
        return (self._plan or self.plan()).q


@dataclass
class PsrlState:
    transition_counts: np.ndarray  # (S, A, S) observation counts
    prior: float = 1.0


class PsrlAgent:
    """Posterior sampling: draw one transition model per episode from the
    Dirichlet posterior, plan on it, act greedily."""

    def __init__(
        self,
        env: TabularEnv,
        gamma: float = 0.99,
        prior: float | None = None,
        episode_spec: EpisodeSpec | None = None,
        seed: int = 0,
    ):
        # default concentration 1/S keeps one unit of prior pseudo-count per
        # (s, a) row, so a single observation of a deterministic transition
        # already dominates the posterior
        self.env = env
        self.gamma = gamma
        self.spec = episode_spec or EpisodeSpec()
        self.state = PsrlState(
            transition_counts=np.zeros(
                (env.num_states, env.num_actions, env.num_states), dtype=np.float64
            ),
            prior=1.0 / env.num_states if prior is None else prior,
        )
        self.rng = np.random.default_rng(seed)
        self._plan: ValueTable | None = None
        self._mean_v: np.ndarray | None = None

    def sample_model(self) -> np.ndarray:
        alpha = self.state.transition_counts + self.state.prior
        gammas = self.rng.gamma(shape=alpha)
        probs = gammas / gammas.sum(axis=2, keepdims=True)
        probs[self.env.goal] = 0.0
        probs[self.env.goal, :, self.env.goal] = 1.0  # known goal: absorbing
        return probs

    def posterior_mean_model(self) -> np.ndarray:
        alpha = self.state.transition_counts + self.state.prior
        probs = alpha / alpha.sum(axis=2, keepdims=True)
        probs[self.env.goal] = 0.0
        probs[self.env.goal, :, self.env.goal] = 1.0
        return probs

    def collect(self) -> Trajectory:
        probs = self.sample_model()
        v0 = self._plan.v if self._plan is not None else None
        self._plan = value_iteration(probs, _goal_rewards(self.env), self.gamma, tol=1e-6, v0=v0)
        traj = _greedy_episode(self.env, self._plan.q, self.spec, self.rng)
        for s, a in zip(traj.states[:-1], traj.actions):
            self.state.transition_counts[s, a, self.env.transition[s, a]] += 1.0
        return traj

    def _mean_plan(self) -> ValueTable:
        plan = value_iteration(
            self.posterior_mean_model(), _goal_rewards(self.env), self.gamma,
            tol=1e-6, v0=self._mean_v,
        )
        self._mean_v = plan.v
        return plan

    def value_map(self) -> np.ndarray:
        return self._mean_plan().v.copy()

    def eval_q(self) -> np.ndarray:
        return self._mean_plan().q


def run_baseline(
    agent,
    episodes: int,
    eval_every: int = 25,
    eval_runs: int = 5,
    seed: int = 0,
    manifest_extra: dict | None = None,
) -> RunArtifact:
    """Episode loop for R-MAX / PSRL emitting the shared artifact schema.

    The similarity slot carries the agent's per-state value estimate, so the
    correlation and rendering pipelines apply unchanged.
    """
    env: TabularEnv = agent.env
    _, _, eval_rng = split_rng(seed)
    visitation = np.zeros(env.num_states, dtype=np.int64)
    checkpoints: list[Checkpoint] = []
    first_success = None
    first_success_transitions = None
    transitions = 0
    for ep in range(1, episodes + 1):
        traj = agent.collect()
        transitions += traj.num_transitions
        np.add.at(visitation, traj.states, 1)
        if traj.success and first_success is None:
            hits = np.flatnonzero(traj.states == env.goal)
            steps_to_goal = int(hits[0]) if len(hits) else traj.num_transitions
            first_success = ep
            first_success_transitions = transitions - traj.num_transitions + steps_to_goal
        if ep % eval_every == 0 or ep == episodes or ep == 1:
            q = agent.eval_q()
            successes = sum(
                _greedy_episode(env, q, agent.spec, eval_rng).success for _ in range(eval_runs)
            )
            checkpoints.append(
                Checkpoint(
                    episode=ep,
                    psi_sim=agent.value_map(),
                    visitation=visitation.copy(),
                    eval_success_k=int(successes),
                    eval_success_n=eval_runs,
                )
            )
    majority = eval_runs // 2 + 1
    first_majority = next(
        (ck.episode for ck in checkpoints if ck.eval_success_k >= majority), None
    )
    manifest = {
        "env": env.name,
        "goal_spec": {"kind": "real", "state": int(env.goal)},
        "seed": seed,
        "config": {
            "algorithm": type(agent).__name__,
            "gamma": agent.gamma,
            "episodes": episodes,
            "eval_every": eval_every,
            "eval_runs": eval_runs,
        },
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    events = {
        "first_success_episode": first_success,
        "first_success_transitions": first_success_transitions,
        "first_majority_success_episode": first_majority,
        "total_episodes": episodes,
        "total_transitions": transitions,
    }
    return RunArtifact(manifest=manifest, checkpoints=checkpoints, events=events)
