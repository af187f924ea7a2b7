"""Clipped-surrogate policy optimization with generalized advantage
estimation and a KL penalty against the rollout policy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch
from .net import Adam, Mlp, clip_gradients

_P_FLOOR = 1e-12  # softmax outputs are positive; this guards logs anyway


def gae(rewards, values, gamma: float = 0.95, lam: float = 0.95,
        ) -> tuple[np.ndarray, np.ndarray]:
    """Backward accumulation of exponentially weighted TD residuals.

    `values` must carry one bootstrap entry beyond `rewards` (zero for a
    terminal final state). Returns (advantages, returns).
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    n = len(rewards)
    if len(values) != n + 1:
        raise ShapeMismatch(
            f"values needs {n + 1} entries for {n} rewards, got {len(values)}")
    adv = np.zeros(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        delta = rewards[t] + gamma * values[t + 1] - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
    return adv, adv + values[:-1]


@dataclass
class Rollout:
    """On-policy batch with the statistics PPO needs frozen at collect time."""

    states: np.ndarray      # B x state_dim
    actions: np.ndarray     # B ints
    old_log_probs: np.ndarray
    old_probs: np.ndarray   # B x A, for the KL penalty
    advantages: np.ndarray
    returns: np.ndarray


def ppo_update(policy: Mlp, value: Mlp, policy_opt: Adam, value_opt: Adam,
               rollout: Rollout, clip: float = 0.2, kl_beta: float = 0.01,
               grad_clip: float = 0.5) -> tuple[float, float, float]:
    """One clipped-surrogate step; returns (policy loss, value loss, KL)."""
    b = len(rollout.actions)
    idx = np.arange(b)

    probs, cache = policy.forward(rollout.states)
    probs = np.maximum(probs, _P_FLOOR)
    p_act = probs[idx, rollout.actions]
    old_p_act = np.exp(rollout.old_log_probs)
    ratio = p_act / old_p_act

    adv = rollout.advantages
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    surrogate = float(np.mean(np.minimum(unclipped, clipped)))

    kl_terms = rollout.old_probs * (
        np.log(np.maximum(rollout.old_probs, _P_FLOOR)) - np.log(probs))
    kl = float(np.mean(kl_terms.sum(axis=1)))
    policy_loss = -surrogate + kl_beta * kl

    # Gradient of the surrogate flows only where the min() picks the
    # unclipped branch; the clipped branch is flat in the ratio.
    active = np.where(adv >= 0, ratio <= 1.0 + clip, ratio >= 1.0 - clip)
    dprobs = np.zeros_like(probs)
    dprobs[idx, rollout.actions] -= active * adv / old_p_act / b
    dprobs += kl_beta * (-rollout.old_probs / probs) / b
    grads = policy.backward(cache, dprobs)
    clip_gradients(grads, grad_clip)
    policy_opt.step(grads)

    v, vcache = value.forward(rollout.states)
    v = v.reshape(-1)
    verr = v - rollout.returns
    value_loss = float(np.mean(verr ** 2))
    dv = (2.0 * verr / b).reshape(-1, 1)
    vgrads = value.backward(vcache, dv)
    clip_gradients(vgrads, grad_clip)
    value_opt.step(vgrads)

    return policy_loss, value_loss, kl


class PpoAgent:
    """Policy/value pair plus rollout assembly across whole episodes."""

    def __init__(self, policy: Mlp, value: Mlp, lr: float = 3e-4,
                 gamma: float = 0.95, lam: float = 0.95, clip: float = 0.2,
                 kl_beta: float = 0.01, grad_clip: float = 0.5,
                 normalize_advantages: bool = True):
        self.policy = policy
        self.value = value
        self.policy_opt = Adam(policy, lr=lr)
        self.value_opt = Adam(value, lr=lr)
        self.gamma = gamma
        self.lam = lam
        self.clip = clip
        self.kl_beta = kl_beta
        self.grad_clip = grad_clip
        self.normalize_advantages = normalize_advantages
        self._episodes: list[dict] = []

    def act(self, state: np.ndarray, rng: np.random.Generator) -> tuple[int, float]:
        probs, _ = self.policy.forward(state)
        probs = np.maximum(probs, _P_FLOOR)
        probs = probs / probs.sum()
        action = int(rng.choice(len(probs), p=probs))
        return action, float(np.log(probs[action]))

    def greedy(self, state: np.ndarray) -> int:
        probs, _ = self.policy.forward(state)
        return int(np.argmax(probs))

    def store_episode(self, states, actions, rewards, log_probs) -> None:
        self._episodes.append({
            "states": np.vstack(states),
            "actions": np.asarray(actions, dtype=int),
            "rewards": np.asarray(rewards, dtype=float),
            "log_probs": np.asarray(log_probs, dtype=float),
        })

    def ready(self, rollout_episodes: int) -> bool:
        return len(self._episodes) >= rollout_episodes

    def build_rollout(self) -> Rollout:
        all_states, all_actions, all_logp = [], [], []
        all_adv, all_ret = [], []
        for ep in self._episodes:
            v, _ = self.value.forward(ep["states"])
            values = np.append(v.reshape(-1), 0.0)  # terminal bootstrap
            adv, ret = gae(ep["rewards"], values, self.gamma, self.lam)
            all_states.append(ep["states"])
            all_actions.append(ep["actions"])
            all_logp.append(ep["log_probs"])
            all_adv.append(adv)
            all_ret.append(ret)
        self._episodes = []
        states = np.vstack(all_states)
        adv = np.concatenate(all_adv)
        if self.normalize_advantages and len(adv) > 1 and adv.std() > 0:
            adv = (adv - adv.mean()) / adv.std()
        old_probs, _ = self.policy.forward(states)
        return Rollout(
            states=states,
            actions=np.concatenate(all_actions),
            old_log_probs=np.concatenate(all_logp),
            old_probs=np.maximum(old_probs, _P_FLOOR),
            advantages=adv,
            returns=np.concatenate(all_ret),
        )

    def update(self, rollout: Rollout, epochs: int = 4) -> tuple[float, float, float]:
        stats = (0.0, 0.0, 0.0)
        for _ in range(epochs):
            stats = ppo_update(self.policy, self.value, self.policy_opt,
                               self.value_opt, rollout, self.clip,
                               self.kl_beta, self.grad_clip)
        return stats
