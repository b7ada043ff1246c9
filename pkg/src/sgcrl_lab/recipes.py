"""Named experiment recipes: one command per study, seeds swept externally.

Each recipe builds its environment, initialization, and interventions from a
flat config dict (recipe defaults, overridden by config-file keys and CLI
``--set`` pairs) plus a seed, and returns either a RunArtifact or a dynamics
result (series + equilibrium report).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dynamics as dyn
from .agent import (
    AgentConfig,
    GoalSpec,
    ScalarCritic,
    SgcrlCollector,
    SgcrlRunner,
    TrainLoopConfig,
    VectorCritic,
    train,
    train_yoked,
)
from .artifacts import RunArtifact
from .baselines import PsrlAgent, RmaxAgent, run_baseline
from .embeddings import (
    UpdateConfig,
    init_table,
    pin_region,
    scalar_table_from_embeddings,
)
from .envs import (
    EpisodeSpec,
    TabularEnv,
    builtin_layout,
    make_fourrooms,
    make_hanoi,
    rooms,
    with_absorbing_goal,
)

RECIPES = (
    "sgcrl",
    "sgcrl_imaginary_goal",
    "sgcrl_random_goal",
    "sgcrl_multi_goal",
    "sgcrl_pinned_patch",
    "sgcrl_safety",
    "ablation_scalar",
    "rmax",
    "psrl",
    "yoked",
    "theorem3",
    "lemma1",
)


@dataclass
class DynamicsResult:
    series: list[dyn.DynamicsStats]
    report: dyn.EquilibriumReport
    params: dict


def setup_rng(seed: int) -> np.random.Generator:
    """Setup-time draws (imaginary goals, patch choices), disjoint from the
    role streams the training loop spawns from the same seed."""
    return np.random.default_rng(np.random.SeedSequence(seed).spawn(4)[3])


def build_env(cfg: dict) -> TabularEnv:
    name = cfg.get("env", "fourrooms")
    if name == "fourrooms":
        env = make_fourrooms(int(cfg.get("grid_side", 11)))
    elif name == "hanoi":
        env = make_hanoi(int(cfg.get("disks", 3)))
    elif name in ("lwall", "spiral"):
        env = builtin_layout(name)
    else:
        raise ValueError(f"unknown env {name!r}")
    if bool(cfg.get("absorbing_goal", False)):
        env = with_absorbing_goal(env)
    return env


def _merge_defaults(cfg: dict, defaults: dict) -> dict:
    out = dict(defaults)
    out.update(cfg)
    return out


def _phase_defaults(cfg: dict) -> dict:
    """Defaults for the exploration-phase study: absorbing goal, fixed-length
    episodes, retrospective success."""
    hanoi = str(cfg.get("env", "fourrooms")) == "hanoi"
    return _merge_defaults(
        cfg,
        {
            "absorbing_goal": True,
            "terminate_on_goal": False,
            "max_steps": 40 if hanoi else 60,
            "updates_per_episode": 5,
            "episodes": 5000,
            "early_stop_after_majority": 400,
        },
    )


def _episode_spec(env: TabularEnv, cfg: dict, terminate: bool = True) -> EpisodeSpec:
    default_steps = 200 if env.name.startswith("hanoi") else 100
    return EpisodeSpec(
        max_steps=int(cfg.get("max_steps", default_steps)),
        terminate_on_goal=bool(cfg.get("terminate_on_goal", terminate)),
    )


def _agent_config(env: TabularEnv, cfg: dict, terminate: bool = True) -> AgentConfig:
    default_episodes = 4000 if env.name.startswith("hanoi") else 2000
    loop = TrainLoopConfig(
        gamma=float(cfg.get("gamma", 0.99)),
        episodes=int(cfg.get("episodes", default_episodes)),
        updates_per_episode=int(cfg.get("updates_per_episode", 10)),
        eval_every=int(cfg.get("eval_every", 10)),
        eval_runs=int(cfg.get("eval_runs", 5)),
        early_stop_after_majority=cfg.get("early_stop_after_majority", 400),
        record_snapshots=bool(cfg.get("record_snapshots", True)),
    )
    if loop.early_stop_after_majority is not None:
        loop.early_stop_after_majority = int(loop.early_stop_after_majority)
    update = UpdateConfig(
        learning_rate=float(cfg.get("learning_rate", 1e-2)),
        batch_size=int(cfg.get("batch_size", 128)),
        forward=bool(cfg.get("forward", False)),
        anchor_stop_gradient=bool(cfg.get("anchor_stop_gradient", False)),
    )
    return AgentConfig(
        update=update,
        loop=loop,
        episode=_episode_spec(env, cfg, terminate),
        temperature=float(cfg.get("temperature", 0.1)),
        buffer_capacity=int(cfg.get("buffer_capacity", 1000)),
        dim=int(cfg.get("dim", 16)),
        common_scale=float(cfg.get("common_scale", 1.0)),
        noise_scale=float(cfg.get("noise_scale", 0.1)),
        collection=str(cfg.get("collection", "single")),
        triplet_truncation=str(cfg.get("triplet_truncation", "resample")),
    )


def _patch_cells(env: TabularEnv, room: str, size: int = 2) -> list[int]:
    """A size x size block of cells near the middle of a room, goal excluded."""
    cells = rooms(env)[room]
    coords = env.layout_meta.coords
    block = [s for s in cells if s != env.goal]
    rs = sorted({coords[s][0] for s in block})
    cs = sorted({coords[s][1] for s in block})
    mid_r = rs[len(rs) // 2 - 1 : len(rs) // 2 - 1 + size]
    mid_c = cs[len(cs) // 2 - 1 : len(cs) // 2 - 1 + size]
    chosen = [s for s in block if coords[s][0] in mid_r and coords[s][1] in mid_c]
    return chosen


def _room_diagonal_pair(env: TabularEnv, room: str) -> tuple[int, int]:
    """Two cells one step inside the opposite corners of a room's diagonal."""
    cells = rooms(env)[room]
    coords = env.layout_meta.coords
    rs = sorted({coords[s][0] for s in cells})
    cs = sorted({coords[s][1] for s in cells})
    lookup = {tuple(coords[s]): s for s in cells}
    return lookup[(rs[1], cs[1])], lookup[(rs[-2], cs[-2])]


def _imaginary_setup(env: TabularEnv, cfg: dict, seed: int):
    """Shared-component init around an imaginary goal vector z; optional
    patches initialized orthogonal to z."""
    rng = setup_rng(seed)
    dim = int(cfg.get("dim", 16))
    z = rng.standard_normal(dim)
    z /= np.linalg.norm(z)
    noise = float(cfg.get("noise_scale", 0.1))
    eps = rng.normal(0.0, noise / np.sqrt(dim), size=(env.num_states, dim))
    vectors = z + eps
    if bool(cfg.get("orthogonal_patches", False)):
        patch = _patch_cells(env, "top_left") + _patch_cells(env, "bottom_right")
        raw = rng.standard_normal((len(patch), dim))
        raw -= np.outer(raw @ z, z)
        vectors[patch] = raw
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    from .embeddings import EmbeddingTable

    return EmbeddingTable(vectors), z


def run_recipe(name: str, seed: int, cfg: dict | None = None):
    cfg = dict(cfg or {})
    if name not in RECIPES:
        raise ValueError(f"unknown recipe {name!r}; known: {', '.join(RECIPES)}")
    extra = {"recipe": name}

    if name == "theorem3":
        state = dyn.init_theorem_dynamics(
            N=int(cfg.get("N", 128)),
            d=int(cfg.get("d", 128)),
            c=float(cfg.get("c0", 0.6)),
            seed=seed,
        )
        series = dyn.run_dynamics(
            state,
            eta=float(cfg.get("eta", 0.01)),
            steps=int(cfg.get("steps", 2500)),
            loss_direction=str(cfg.get("loss_direction", "backward")),
        )
        report = dyn.equilibrium_report(series, bundled=False)
        return DynamicsResult(series, report, {**cfg, "recipe": name, "seed": seed})

    if name == "lemma1":
        k = int(cfg.get("K", 1))
        state = dyn.init_lemma1(
            N=int(cfg.get("N", 128)),
            d=int(cfg.get("d", 128)),
            positives_per_anchor=k,
            seed=seed,
        )
        series = dyn.run_dynamics(
            state,
            eta=float(cfg.get("eta", 0.01)),
            steps=int(cfg.get("steps", 2500)),
            loss_direction=str(cfg.get("loss_direction", "backward")),
        )
        report = dyn.equilibrium_report(series, bundled=k > 1)
        return DynamicsResult(series, report, {**cfg, "recipe": name, "seed": seed})

    if name == "sgcrl":
        cfg = _phase_defaults(cfg)
    elif name == "ablation_scalar":
        # identical budget to the vector reference; no early stop, so the
        # terminal window reflects what the ablation achieves within it
        cfg = _phase_defaults(
            _merge_defaults(cfg, {"episodes": 1500, "early_stop_after_majority": None})
        )
    elif name in ("sgcrl_imaginary_goal", "sgcrl_random_goal"):
        cfg = _merge_defaults(cfg, {"terminate_on_goal": False, "episodes": 1500,
                                    "early_stop_after_majority": None})
    elif name == "sgcrl_multi_goal":
        cfg = _merge_defaults(cfg, {"terminate_on_goal": False, "updates_per_episode": 2,
                                    "episodes": 2000, "eval_every": 25, "eval_runs": 10,
                                    "early_stop_after_majority": None})
    elif name == "sgcrl_pinned_patch":
        cfg = _merge_defaults(cfg, {"updates_per_episode": 1, "episodes": 1000,
                                    "eval_every": 25, "early_stop_after_majority": None})
    elif name == "sgcrl_safety":
        cfg = _merge_defaults(cfg, {"updates_per_episode": 1, "episodes": 2500,
                                    "eval_every": 25, "early_stop_after_majority": 400})
    elif name == "yoked":
        if str(cfg.get("collector", "rmax")) == "psrl":
            cfg = _merge_defaults(cfg, {"updates_per_episode": 10, "episodes": 500,
                                        "eval_every": 25, "eval_runs": 10,
                                        "early_stop_after_majority": None})
        else:
            cfg = _merge_defaults(cfg, {"updates_per_episode": 1, "episodes": 1000,
                                        "eval_every": 25, "early_stop_after_majority": None})
    env = build_env(cfg)

    if name == "rmax":
        agent = RmaxAgent(
            env,
            gamma=float(cfg.get("gamma", 0.99)),
            m=int(cfg.get("m", 1)),
            r_max=float(cfg.get("r_max", 1.0)),
            episode_spec=_episode_spec(env, cfg),
            seed=seed,
        )
        return run_baseline(
            agent,
            episodes=int(cfg.get("episodes", 800)),
            eval_every=int(cfg.get("eval_every", 10)),
            eval_runs=int(cfg.get("eval_runs", 5)),
            seed=seed,
            manifest_extra=extra,
        )
    if name == "psrl":
        agent = PsrlAgent(
            env,
            gamma=float(cfg.get("gamma", 0.99)),
            prior=cfg.get("prior"),
            episode_spec=_episode_spec(env, cfg),
            seed=seed,
        )
        return run_baseline(
            agent,
            episodes=int(cfg.get("episodes", 800)),
            eval_every=int(cfg.get("eval_every", 10)),
            eval_runs=int(cfg.get("eval_runs", 5)),
            seed=seed,
            manifest_extra=extra,
        )

    if name == "sgcrl":
        return train(env, GoalSpec.real(env.goal), _agent_config(env, cfg), seed, manifest_extra=extra)

    if name == "ablation_scalar":
        acfg = _agent_config(env, cfg)
        base = init_table(
            env.num_states, acfg.dim, acfg.common_scale, acfg.noise_scale,
            seed=setup_rng(seed),
        )
        critic = ScalarCritic(scalar_table_from_embeddings(base), acfg.update, env.goal)
        return train(env, GoalSpec.real(env.goal), acfg, seed, critic=critic, manifest_extra=extra)

    if name in ("sgcrl_imaginary_goal", "sgcrl_random_goal"):
        acfg = _agent_config(env, cfg, terminate=False)
        if name == "sgcrl_random_goal":
            acfg.collection = "random"
        table, z = _imaginary_setup(env, cfg, seed)
        critic = VectorCritic(table, acfg.update)
        return train(
            env, GoalSpec.imaginary(z), acfg, seed, critic=critic, manifest_extra=extra
        )

    if name == "sgcrl_multi_goal":
        acfg = _agent_config(env, cfg, terminate=False)
        d1, d2 = _room_diagonal_pair(env, str(cfg.get("goal_room", "top_right")))
        g1 = int(cfg.get("goal1", d1))
        g2 = int(cfg.get("goal2", d2))
        w1 = float(cfg.get("weight1", 0.5))
        w2 = float(cfg.get("weight2", 0.5))
        spec = GoalSpec.multi([(g1, w1), (g2, w2)])
        return train(env, spec, acfg, seed, manifest_extra={**extra, "goals": [g1, g2]})

    if name in ("sgcrl_pinned_patch", "sgcrl_safety"):
        acfg = _agent_config(env, cfg)
        table = init_table(
            env.num_states, acfg.dim, acfg.common_scale, acfg.noise_scale,
            seed=setup_rng(seed),
        )
        if name == "sgcrl_pinned_patch":
            cells = _patch_cells(env, str(cfg.get("patch_room", "top_right")))
            sign = 1.0
            extra_room = {"pinned_states": cells, "pinned_to": "goal"}
        else:
            room_name = str(cfg.get("safety_room", "bottom_right"))
            cells = [s for s in rooms(env)[room_name] if s not in (env.start, env.goal)]
            sign = -1.0
            extra_room = {"pinned_states": cells, "pinned_to": "negative_goal"}
        mirrors = [(int(s), int(env.goal), sign) for s in cells]
        critic = VectorCritic(table, acfg.update, goal_mirrors=mirrors)
        return train(
            env, GoalSpec.real(env.goal), acfg, seed, critic=critic,
            manifest_extra={**extra, **extra_room},
        )

    if name == "yoked":
        collector_name = str(cfg.get("collector", "rmax"))
        acfg = _agent_config(env, cfg)
        spec = _episode_spec(env, cfg)
        if collector_name == "rmax":
            collector = RmaxAgent(env, gamma=acfg.loop.gamma, episode_spec=spec, seed=seed)
        elif collector_name == "psrl":
            collector = PsrlAgent(env, gamma=acfg.loop.gamma, episode_spec=spec, seed=seed)
        elif collector_name == "sgcrl":
            collector_seed = int(cfg.get("collector_seed", seed + 1000))
            collector = SgcrlCollector(env, GoalSpec.real(env.goal), acfg, collector_seed)
        else:
            raise ValueError(f"unknown collector {collector_name!r}")
        return train_yoked(
            env, collector, GoalSpec.real(env.goal), acfg, seed,
            manifest_extra={**extra, "collector": collector_name},
        )

    raise AssertionError(f"unhandled recipe {name}")
