"""Q-learning in two forms: a tabular learner over coarse discrete states
(used as a verification oracle) and the network-backed variant matching
the published architecture."""

from __future__ import annotations

from collections import defaultdict

import numpy as np

from ..config import RlSettings
from .net import Adam, Mlp, clip_gradients


def epsilon_schedule(episode: int, total: int = 10_000,
                     start: float = 1.0, end: float = 0.05) -> float:
    """Linear decay from start to end, clamped beyond the horizon."""
    if episode < 0:
        raise ValueError("episode must be >= 0")
    frac = min(episode / total, 1.0) if total > 0 else 1.0
    return start + (end - start) * frac


def epsilon_for(settings: RlSettings, episode: int) -> float:
    if settings.epsilon_mode == "fixed":
        return settings.epsilon_fixed
    return epsilon_schedule(episode, settings.epsilon_decay_episodes,
                            settings.epsilon_start, settings.epsilon_end)


def q_update(q_value: float, reward: float, max_next_q: float,
             alpha: float = 0.1, gamma: float = 0.95) -> float:
    """One temporal-difference backup."""
    return q_value + alpha * (reward + gamma * max_next_q - q_value)


class TabularQ:
    """Dict-backed Q table over hashable state keys."""

    def __init__(self, n_actions: int, alpha: float = 0.1, gamma: float = 0.95):
        self.n_actions = n_actions
        self.alpha = alpha
        self.gamma = gamma
        self.table: dict = defaultdict(lambda: np.zeros(n_actions))

    def act(self, key, epsilon: float, rng: np.random.Generator) -> int:
        if rng.random() < epsilon:
            return int(rng.integers(self.n_actions))
        return int(np.argmax(self.table[key]))

    def greedy(self, key) -> int:
        return int(np.argmax(self.table[key]))

    def update(self, key, action: int, reward: float, next_key, done: bool) -> None:
        max_next = 0.0 if done else float(self.table[next_key].max())
        row = self.table[key]
        row[action] = q_update(row[action], reward, max_next,
                               self.alpha, self.gamma)

    def to_dict(self) -> dict:
        return {
            "format": 1,
            "kind": "tabular_q",
            "n_actions": self.n_actions,
            "alpha": self.alpha,
            "gamma": self.gamma,
            "table": {repr(k): [float(x) for x in v]
                      for k, v in sorted(self.table.items(), key=lambda kv: repr(kv[0]))},
        }


class ApproxQ:
    """MLP-backed Q-learning with online one-step TD targets."""

    def __init__(self, net: Mlp, lr: float = 1e-3, gamma: float = 0.95,
                 grad_clip: float = 0.5):
        self.net = net
        self.gamma = gamma
        self.grad_clip = grad_clip
        self.opt = Adam(net, lr=lr)

    def act(self, state: np.ndarray, epsilon: float,
            rng: np.random.Generator) -> int:
        if rng.random() < epsilon:
            return int(rng.integers(self.net.out_dim))
        q, _ = self.net.forward(state)
        return int(np.argmax(q))

    def update(self, state, action: int, reward: float, next_state,
               done: bool) -> float:
        if done:
            target = reward
        else:
            q_next, _ = self.net.forward(next_state)
            target = reward + self.gamma * float(np.max(q_next))
        q, cache = self.net.forward(state)
        td = float(q[action]) - target
        dout = np.zeros(self.net.out_dim)
        dout[action] = 2.0 * td
        grads = self.net.backward(cache, dout)
        clip_gradients(grads, self.grad_clip)
        self.opt.step(grads)
        return td * td


def run_episode_tabular(env, learner: TabularQ, epsilon: float,
                        rng: np.random.Generator, learn: bool = True,
                        ) -> tuple[float, int]:
    env.reset()
    total = 0.0
    steps = 0
    key = env.discrete_key()
    while not env.done:
        action = learner.act(key, epsilon, rng) if learn else learner.greedy(key)
        _, r, done = env.step(action)
        next_key = env.discrete_key()
        if learn:
            learner.update(key, action, r, next_key, done)
        key = next_key
        total += r
        steps += 1
    return total, steps


def run_episode_approx(env, learner: ApproxQ, epsilon: float,
                       rng: np.random.Generator, learn: bool = True,
                       ) -> tuple[float, int]:
    state = env.reset()
    total = 0.0
    steps = 0
    while not env.done:
        action = learner.act(state, epsilon, rng) if learn else int(
            np.argmax(learner.net.forward(state)[0]))
        next_state, r, done = env.step(action)
        if learn:
            learner.update(state, action, r, next_state, done)
        state = next_state
        total += r
        steps += 1
    return total, steps
