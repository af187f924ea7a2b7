from .dqn import DqnAgent, dqn_train_step
from .env import (
    ACCEPT_PROBS,
    ConsensusEnv,
    RlAction,
    Transition,
    action_space,
    classify_effect,
    decode_action,
    reward,
)
from .net import Adam, Mlp, clip_gradients, global_grad_norm
from .ppo import PpoAgent, Rollout, gae, ppo_update
from .qlearning import (
    ApproxQ,
    TabularQ,
    epsilon_for,
    epsilon_schedule,
    q_update,
    run_episode_approx,
    run_episode_tabular,
)
from .replay import ReplayBuffer
from .toy import ToyChainMdp, value_iteration

__all__ = [
    "ACCEPT_PROBS", "ConsensusEnv", "RlAction", "Transition", "action_space",
    "classify_effect", "decode_action", "reward",
    "Adam", "Mlp", "clip_gradients", "global_grad_norm",
    "PpoAgent", "Rollout", "gae", "ppo_update",
    "ApproxQ", "TabularQ", "epsilon_for", "epsilon_schedule", "q_update",
    "run_episode_approx", "run_episode_tabular",
    "ReplayBuffer", "DqnAgent", "dqn_train_step",
    "ToyChainMdp", "value_iteration",
]
