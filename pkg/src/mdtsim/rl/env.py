"""MDP view of the consensus process.

One episode is one consultation: reset plays the opening round, each
step picks a (treatment, interaction-mode) action for the flagged
agents, and the episode ends when agreement crosses the threshold or the
round budget runs out. Transition stochasticity follows the
accept-probability table keyed on whether the chosen mode can improve,
maintain, or reduce agreement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..agents import INTERACTION_MODES, MODE_MULTIPLIERS, PolicyAgent
from ..config import AppConfig
from ..consensus import build_matrix, discordance, make_feedback
from ..domain import AuditLog, PatientCase, TreatmentOption, flatten_state
from ..errors import EpisodeDone

ACCEPT_PROBS = {"improve": 0.8, "maintain": 0.6, "reduce": 0.3}


@dataclass(frozen=True)
class RlAction:
    """One candidate treatment paired with an interaction mode."""

    treatment: int
    mode: str

    def encode(self) -> int:
        return self.treatment * len(INTERACTION_MODES) + INTERACTION_MODES.index(self.mode)


def decode_action(action_id: int, n_treatments: int) -> RlAction:
    n_modes = len(INTERACTION_MODES)
    if not 0 <= action_id < n_treatments * n_modes:
        raise ValueError(f"action id {action_id} outside [0,{n_treatments * n_modes})")
    return RlAction(treatment=action_id // n_modes,
                    mode=INTERACTION_MODES[action_id % n_modes])


def action_space(n_treatments: int) -> list[RlAction]:
    return [decode_action(i, n_treatments)
            for i in range(n_treatments * len(INTERACTION_MODES))]


@dataclass
class Transition:
    state: np.ndarray
    action: RlAction
    reward: float
    next_state: np.ndarray
    done: bool


def reward(delta_w: float, stability: float, disagreement: float,
           quality: float | None,
           weights: tuple[float, float, float, float] = (1.0, 0.5, 0.5, 1.0),
           ) -> float:
    """R = w1*dW + w2*S - w3*D + w4*Q; the quality term drops out when
    no ground-truth label exists (quality=None)."""
    w1, w2, w3, w4 = weights
    r = w1 * delta_w + w2 * stability - w3 * disagreement
    if quality is not None:
        r += w4 * quality
    return float(r)


def classify_effect(mode: str, n_flagged: int, w: float, threshold: float) -> str:
    """Expected effect of a mode on agreement, per the transition table."""
    if mode == "maintain_position":
        return "reduce" if w < threshold else "maintain"
    if mode == "request_clarification":
        return "maintain"
    # encourage_consensus / provide_feedback move opinions only when
    # someone is flagged to receive them.
    return "improve" if n_flagged > 0 else "maintain"


class ConsensusEnv:
    """Episode wrapper around one case and one agent team."""

    def __init__(self, case: PatientCase, agents: list[PolicyAgent],
                 treatments: list[TreatmentOption], config: AppConfig,
                 rng: np.random.Generator,
                 evidence_store=None, audit: AuditLog | None = None):
        self.case = case
        self.agents = agents
        self.treatments = treatments
        self.config = config
        self.rng = rng
        self.evidence_store = evidence_store
        self.audit = audit
        self.n_actions = len(treatments) * len(INTERACTION_MODES)
        self.done = True
        self.round = 0
        self.opinions = []
        self.matrix = None
        self.w_history: list[float] = []

    @property
    def state_dim(self) -> int:
        n = len(self.agents)
        k = len(self.treatments)
        return len(self.case.features) + n * k + 1 + n + 1

    def _state(self) -> np.ndarray:
        return flatten_state(self.case, self.matrix, self.round,
                             self.matrix.per_agent_confidence,
                             self.matrix.kendall_w)

    def _flagged(self) -> tuple[np.ndarray, list[int]]:
        return discordance(self.matrix.entries)

    def reset(self) -> np.ndarray:
        cs = self.config.consensus
        self.opinions = [
            agent.generate_opinion(self.case, self.evidence_store, None, 1)
            for agent in self.agents
        ]
        self.round = 1
        self.matrix = build_matrix(self.opinions, 1, cs)
        self.w_history = [self.matrix.kendall_w]
        self.done = (self.matrix.kendall_w > cs.w_threshold
                     or self.round >= cs.max_rounds)
        return self._state()

    def discrete_key(self) -> tuple[int, int, int]:
        """Coarse state for tabular learners: (W bucket, round, #flagged)."""
        buckets = self.config.rl.w_buckets
        w = self.matrix.kendall_w
        bucket = min(int(w * buckets), buckets - 1)
        _, flagged = self._flagged()
        return (bucket, self.round, len(flagged))

    def step(self, action_id: int) -> tuple[np.ndarray, float, bool]:
        if self.done:
            raise EpisodeDone("episode already finished; call reset()")
        cs = self.config.consensus
        action = decode_action(action_id, len(self.treatments))

        d_scores, flagged = self._flagged()
        effect = classify_effect(action.mode, len(flagged),
                                 self.matrix.kendall_w, cs.w_threshold)
        accepted = bool(self.rng.random() < ACCEPT_PROBS[effect])

        prev_w = self.matrix.kendall_w
        prev_prefs = np.vstack([op.raw_preferences for op in self.opinions])
        next_round = self.round + 1

        lam = MODE_MULTIPLIERS[action.mode] * self.config.agents.base_revision_rate
        if accepted and lam > 0.0 and flagged:
            new_ops = []
            for i, agent in enumerate(self.agents):
                if i in flagged:
                    fb = make_feedback(self.matrix, self.opinions, i, d_scores)
                    op = agent.revise_opinion(
                        self.opinions[i], fb, action.mode, next_round,
                        case=self.case, evidence_store=self.evidence_store)
                else:
                    op = agent.carry_opinion(self.opinions[i], next_round,
                                             self.case, self.evidence_store)
                new_ops.append(op)
            self.opinions = new_ops
        else:
            # Rejected draw or an inert mode: a self-loop in opinion space.
            self.opinions = [
                agent.carry_opinion(op, next_round, self.case, self.evidence_store)
                for agent, op in zip(self.agents, self.opinions)
            ]

        self.round = next_round
        self.matrix = build_matrix(self.opinions, self.round, cs)
        self.w_history.append(self.matrix.kendall_w)

        new_prefs = np.vstack([op.raw_preferences for op in self.opinions])
        movement = np.abs(new_prefs - prev_prefs).mean(axis=1)
        stability = float(np.clip(1.0 - movement.mean(), 0.0, 1.0))
        delta_w = self.matrix.kendall_w - prev_w
        disagreement = 1.0 - self.matrix.kendall_w

        self.done = (self.matrix.kendall_w > cs.w_threshold
                     or self.round >= cs.max_rounds)
        # The action's treatment counts as a recommendation only on the
        # concluding step; paying it every step would reward stalling.
        quality = None
        if self.done and self.case.hidden_label is not None:
            quality = float(action.treatment == self.case.hidden_label)
        r = reward(delta_w, stability, disagreement, quality,
                   self.config.rl.reward_weights)
        if self.audit is not None:
            self.audit.emit("rl_step", self.round, "controller", {
                "action": {"treatment": action.treatment, "mode": action.mode},
                "effect": effect,
                "accepted": accepted,
                "reward": round(r, 9),
                "kendall_w": round(self.matrix.kendall_w, 12),
            })
        return self._state(), r, self.done

    def episode_stats(self) -> dict:
        return {
            "w": float(self.matrix.kendall_w),
            "rounds": int(self.round),
            "consensus": bool(
                self.matrix.kendall_w > self.config.consensus.w_threshold),
        }
