"""Tiny deterministic chain MDP used to verify the three optimizers.

Four states in a row, two actions (left, right). Right moves toward the
terminal state 3 and earns the goal reward; every step costs a little,
so the discounted optimum is to head right from every state. The optimal
policy is recoverable exactly by value iteration, giving an independent
target for the learners.
"""

from __future__ import annotations

import numpy as np


class ToyChainMdp:
    """States 0..3; 3 is terminal. Action 0 = left, 1 = right."""

    N_STATES = 4
    N_ACTIONS = 2
    STEP_REWARD = -0.05
    GOAL_REWARD = 1.0

    def __init__(self, max_steps: int = 20):
        self.max_steps = max_steps
        self.n_actions = self.N_ACTIONS
        self.state = 0
        self.steps = 0
        self.done = True

    @property
    def state_dim(self) -> int:
        return self.N_STATES

    def _obs(self) -> np.ndarray:
        v = np.zeros(self.N_STATES)
        v[self.state] = 1.0
        return v

    def reset(self) -> np.ndarray:
        self.state = 0
        self.steps = 0
        self.done = False
        return self._obs()

    def discrete_key(self) -> int:
        return self.state

    def transition(self, state: int, action: int) -> tuple[int, float, bool]:
        """Pure dynamics, shared with the value-iteration reference."""
        nxt = min(state + 1, self.N_STATES - 1) if action == 1 else max(state - 1, 0)
        if nxt == self.N_STATES - 1:
            return nxt, self.GOAL_REWARD, True
        return nxt, self.STEP_REWARD, False

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        self.state, r, terminal = self.transition(self.state, action)
        self.steps += 1
        self.done = terminal or self.steps >= self.max_steps
        return self._obs(), r, self.done

    def episode_stats(self) -> dict:
        return {"w": 0.0, "rounds": self.steps, "consensus": False}


def value_iteration(env: ToyChainMdp, gamma: float = 0.95,
                    tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Optimal state values and greedy policy for the chain dynamics."""
    v = np.zeros(env.N_STATES)
    while True:
        q = np.zeros((env.N_STATES, env.N_ACTIONS))
        for s in range(env.N_STATES - 1):  # state 3 is terminal
            for a in range(env.N_ACTIONS):
                nxt, r, terminal = env.transition(s, a)
                q[s, a] = r + (0.0 if terminal else gamma * v[nxt])
        new_v = q.max(axis=1)
        new_v[env.N_STATES - 1] = 0.0
        if np.abs(new_v - v).max() < tol:
            return new_v, q.argmax(axis=1)
        v = new_v
