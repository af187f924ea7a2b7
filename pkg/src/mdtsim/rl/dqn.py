"""Double DQN with dueling streams, a skip connection, and experience
replay, trained by minibatch regression against a periodically synced
target network."""

from __future__ import annotations

import numpy as np

from ..errors import InsufficientSamples
from .env import Transition
from .net import Adam, Mlp, clip_gradients
from .replay import ReplayBuffer


def dqn_train_step(online: Mlp, target: Mlp, opt: Adam,
                   batch: list[Transition], gamma: float = 0.95,
                   grad_clip: float = 0.5) -> float:
    """One regression step on double-DQN targets; returns the MSE loss.

    y = r for terminal transitions, otherwise
    y = r + gamma * Q_target(s', argmax_a Q_online(s', a)).
    """
    if not batch:
        raise InsufficientSamples("empty batch")
    states = np.vstack([t.state for t in batch])
    actions = np.array([t.action.encode() for t in batch])
    rewards = np.array([t.reward for t in batch])
    next_states = np.vstack([t.next_state for t in batch])
    non_terminal = ~np.array([t.done for t in batch])

    q_next_online, _ = online.forward(next_states)
    best_next = np.argmax(q_next_online, axis=1)
    q_next_target, _ = target.forward(next_states)
    bootstrap = q_next_target[np.arange(len(batch)), best_next]
    targets = rewards + gamma * bootstrap * non_terminal

    q, cache = online.forward(states)
    chosen = q[np.arange(len(batch)), actions]
    err = chosen - targets
    loss = float(np.mean(err ** 2))

    dout = np.zeros_like(q)
    dout[np.arange(len(batch)), actions] = 2.0 * err / len(batch)
    grads = online.backward(cache, dout)
    clip_gradients(grads, grad_clip)
    opt.step(grads)
    return loss


class DqnAgent:
    """Online/target net pair plus replay buffer and sync bookkeeping."""

    def __init__(self, online: Mlp, lr: float = 1e-3, gamma: float = 0.95,
                 buffer_capacity: int = 10_000, batch_size: int = 32,
                 target_sync_interval: int = 100, grad_clip: float = 0.5,
                 rng: np.random.Generator | None = None):
        self.online = online
        self.target = online.clone()
        self.opt = Adam(online, lr=lr)
        self.gamma = gamma
        self.batch_size = batch_size
        self.target_sync_interval = target_sync_interval
        self.grad_clip = grad_clip
        self.buffer = ReplayBuffer(buffer_capacity, rng=rng)
        self.train_steps = 0

    def act(self, state: np.ndarray, epsilon: float,
            rng: np.random.Generator) -> int:
        if rng.random() < epsilon:
            return int(rng.integers(self.online.out_dim))
        q, _ = self.online.forward(state)
        return int(np.argmax(q))

    def observe(self, transition: Transition) -> float | None:
        self.buffer.push(transition)
        if len(self.buffer) < self.batch_size:
            return None
        batch = self.buffer.sample(self.batch_size)
        loss = dqn_train_step(self.online, self.target, self.opt, batch,
                              self.gamma, self.grad_clip)
        self.train_steps += 1
        if self.train_steps % self.target_sync_interval == 0:
            self.target.copy_from(self.online)
        return loss
