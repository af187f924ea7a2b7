"""Training loops wiring the optimizers to the consensus environment,
plus model (de)serialization and learning-curve output."""

from __future__ import annotations

import csv
import io
import json

import numpy as np

from ..agents import stream_seed
from ..config import AppConfig
from .dqn import DqnAgent
from .env import ConsensusEnv, Transition, decode_action
from .net import Mlp
from .ppo import PpoAgent
from .qlearning import (
    ApproxQ,
    TabularQ,
    epsilon_for,
    run_episode_approx,
    run_episode_tabular,
)

ALGOS = ("q", "q-tabular", "dqn", "ppo")


def env_factory(config: AppConfig, seed: int, roles=None):
    """Episode i plays the (i mod pool) case of a seed-fixed case pool."""
    from ..sim import _env_for_case  # local import avoids a cycle

    pool = config.rl.train_case_pool
    envs: dict[int, ConsensusEnv] = {}

    def make(episode: int) -> ConsensusEnv:
        idx = episode % pool
        env = envs.get(idx)
        if env is None:
            env = _env_for_case(idx, seed, config, roles)
            envs[idx] = env
        return env

    return make


class CurveWriter:
    """Accumulates (episode, reward, w, rounds) learning-curve rows."""

    def __init__(self):
        self.rows: list[tuple] = []

    def add(self, episode: int, reward: float, stats: dict) -> None:
        self.rows.append((episode, reward, stats["w"], stats["rounds"]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["episode", "reward", "mean_w", "rounds"])
        for ep, r, w, rounds in self.rows:
            writer.writerow([ep, f"{r:.9f}", f"{w:.9f}", rounds])
        return buf.getvalue()


def _net_sizes(state_dim: int, hidden: tuple[int, ...], out: int) -> list[int]:
    return [state_dim, *hidden, out]


def train(algo: str, episodes: int, seed: int, config: AppConfig,
          roles=None, make_env=None) -> tuple[dict, CurveWriter]:
    """Train one algorithm for `episodes` episodes; returns the model
    document (JSON-ready) and the learning curve."""
    if algo not in ALGOS:
        raise ValueError(f"unknown algo {algo!r}; expected one of {ALGOS}")
    rl = config.rl
    if make_env is None:
        make_env = env_factory(config, seed, roles)
    probe = make_env(0)
    state_dim = probe.state_dim
    n_actions = probe.n_actions
    rng = np.random.default_rng(stream_seed(seed, "train", algo))
    curve = CurveWriter()

    if algo == "q-tabular":
        learner = TabularQ(n_actions, alpha=rl.q_alpha, gamma=rl.discount)
        for ep in range(episodes):
            env = make_env(ep)
            eps = epsilon_for(rl, ep)
            total, _ = run_episode_tabular(env, learner, eps, rng)
            curve.add(ep, total, env.episode_stats())
        model = {"algo": algo, "state_dim": state_dim, **learner.to_dict()}
        return model, curve

    if algo == "q":
        net = Mlp(_net_sizes(state_dim, rl.q_hidden, n_actions),
                  head="linear", rng=rng)
        learner = ApproxQ(net, lr=rl.q_lr, gamma=rl.discount,
                          grad_clip=rl.grad_clip)
        for ep in range(episodes):
            env = make_env(ep)
            eps = epsilon_for(rl, ep)
            total, _ = run_episode_approx(env, learner, eps, rng)
            curve.add(ep, total, env.episode_stats())
        return {"algo": algo, "net": net.to_dict()}, curve

    if algo == "dqn":
        net = Mlp(_net_sizes(state_dim, rl.dqn_hidden, n_actions),
                  head="dueling", skip=rl.dqn_skip, rng=rng)
        agent = DqnAgent(net, lr=rl.dqn_lr, gamma=rl.discount,
                         buffer_capacity=rl.buffer_capacity,
                         batch_size=rl.batch_size,
                         target_sync_interval=rl.target_sync_interval,
                         grad_clip=rl.grad_clip,
                         rng=np.random.default_rng(
                             stream_seed(seed, "replay", algo)))
        for ep in range(episodes):
            env = make_env(ep)
            state = env.reset()
            total = 0.0
            while not env.done:
                eps = epsilon_for(rl, ep)
                action = agent.act(state, eps, rng)
                next_state, r, done = env.step(action)
                agent.observe(Transition(
                    state=state,
                    action=decode_action(action, len(env.treatments))
                    if hasattr(env, "treatments") else _IdAction(action),
                    reward=r, next_state=next_state, done=done))
                state = next_state
                total += r
            curve.add(ep, total, env.episode_stats())
        return {"algo": algo, "net": net.to_dict()}, curve

    # ppo
    policy = Mlp(_net_sizes(state_dim, rl.ppo_hidden, n_actions),
                 head="softmax", rng=rng)
    value = Mlp(_net_sizes(state_dim, rl.ppo_hidden, 1),
                head="linear", rng=rng)
    agent = PpoAgent(policy, value, lr=rl.ppo_lr, gamma=rl.discount,
                     lam=rl.gae_lambda, clip=rl.ppo_clip,
                     kl_beta=rl.kl_beta, grad_clip=rl.grad_clip,
                     normalize_advantages=rl.ppo_normalize_advantages)
    for ep in range(episodes):
        env = make_env(ep)
        state = env.reset()
        states, actions, rewards, logps = [], [], [], []
        total = 0.0
        while not env.done:
            action, logp = agent.act(state, rng)
            next_state, r, done = env.step(action)
            states.append(state)
            actions.append(action)
            rewards.append(r)
            logps.append(logp)
            state = next_state
            total += r
        if states:
            agent.store_episode(states, actions, rewards, logps)
        if agent.ready(rl.ppo_rollout_episodes):
            rollout = agent.build_rollout()
            agent.update(rollout, epochs=rl.ppo_update_epochs)
        curve.add(ep, total, env.episode_stats())
    return {"algo": algo, "policy": policy.to_dict(),
            "value": value.to_dict()}, curve


class _IdAction:
    """Minimal stand-in when the env's actions are bare integers."""

    def __init__(self, action_id: int):
        self.action_id = action_id

    def encode(self) -> int:
        return self.action_id


class NetPolicy:
    """Greedy policy over a value or probability head."""

    def __init__(self, net: Mlp):
        self.net = net
        self.in_dim = net.in_dim

    def __call__(self, state: np.ndarray, env) -> int:
        out, _ = self.net.forward(state)
        return int(np.argmax(out))


class TabularPolicy:
    def __init__(self, table: dict, n_actions: int):
        self.table = table
        self.n_actions = n_actions
        self.in_dim = None

    def __call__(self, state: np.ndarray, env) -> int:
        row = self.table.get(repr(env.discrete_key()))
        return int(np.argmax(row)) if row is not None else 0


def save_model(model: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(model, fh, indent=1)
        fh.write("\n")


def load_policy(path: str):
    """Greedy policy from a saved model document of any algorithm."""
    with open(path, "r", encoding="utf-8") as fh:
        model = json.load(fh)
    algo = model["algo"]
    if algo in ("q", "dqn"):
        return NetPolicy(Mlp.from_dict(model["net"]))
    if algo == "ppo":
        return NetPolicy(Mlp.from_dict(model["policy"]))
    if algo == "q-tabular":
        table = {k: np.asarray(v, dtype=float) for k, v in model["table"].items()}
        return TabularPolicy(table, model["n_actions"])
    raise ValueError(f"unknown model algo {algo!r}")
