"""Application configuration: one nested structure, JSON-loadable.

Every default that has a published operating value uses it (consensus
threshold 0.7, convergence tolerance 0.05, three rounds, Q-learning rate
0.1, discount 0.95, PPO clip 0.2, replay capacity and decay horizon
10000, target sync 100, batch 32, gradient clip 0.5, literature min year
2018, top-k 3 guidelines / 5 literature). Unknown keys are rejected so a
typo cannot silently fall back to a default.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .domain import DEFAULT_FEATURE_BLOCKS, DEFAULT_FEATURE_DIM
from .errors import ConfigError


@dataclass
class ConsensusSettings:
    w_threshold: float = 0.7
    max_rounds: int = 3
    convergence_tol: float = 0.05
    norm_epsilon: float = 1e-6
    alpha: float = 0.4  # group-consensus weight in the composite objective
    beta: float = 0.4   # clinical-fit weight
    gamma: float = 0.2  # evidence-quality weight
    tie_correction: bool = False
    feedback_mode: str = "provide_feedback"  # applied to flagged agents

    def check(self) -> None:
        if not 0.0 < self.w_threshold < 1.0:
            raise ConfigError(f"w_threshold must be in (0,1): {self.w_threshold}")
        if self.max_rounds < 1:
            raise ConfigError(f"max_rounds must be >= 1: {self.max_rounds}")
        if abs(self.alpha + self.beta + self.gamma - 1.0) > 1e-9:
            raise ConfigError("objective weights alpha+beta+gamma must sum to 1")


@dataclass
class AgentSettings:
    base_revision_rate: float = 0.3
    inverse_mode: str = "bounded"  # bounded -> 1-x; literal -> clamped reciprocal
    confidence_penalty_per_concern: float = 0.05
    cost_scale: float = 100_000.0  # normalizes treatment cost into [0,1]
    roles: tuple[str, ...] = (
        "oncologist", "radiologist", "nurse", "psychologist",
        "patient_advocate", "nutritionist", "rehab_therapist",
    )


@dataclass
class EvidenceSettings:
    top_k_guidelines: int = 3
    top_k_literature: int = 5
    min_year: int = 2018
    relevance_threshold: float = 0.7
    recency_bonus: float = 0.05
    recency_window_years: int = 2
    now_year: int = 2024
    activation_threshold: float = 0.5  # case block tags join the query above this
    corpus_path: str | None = None     # None -> packaged synthetic corpus


@dataclass
class CaseSettings:
    feature_dim: int = DEFAULT_FEATURE_DIM
    blocks: dict = field(default_factory=lambda: dict(DEFAULT_FEATURE_BLOCKS))
    difficulty: float = 0.5  # label-noise scale for synthetic generation

    def block_ranges(self) -> dict[str, tuple[int, int]]:
        return {k: (int(v[0]), int(v[1])) for k, v in self.blocks.items()}


@dataclass
class RlSettings:
    discount: float = 0.95
    q_alpha: float = 0.1
    epsilon_mode: str = "decay"  # decay | fixed
    epsilon_fixed: float = 0.1
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_episodes: int = 10_000
    buffer_capacity: int = 10_000
    batch_size: int = 32
    target_sync_interval: int = 100
    grad_clip: float = 0.5
    q_lr: float = 1e-3
    dqn_lr: float = 1e-3
    ppo_lr: float = 3e-4
    ppo_clip: float = 0.2
    gae_lambda: float = 0.95
    kl_beta: float = 0.01
    ppo_rollout_episodes: int = 8
    ppo_update_epochs: int = 4
    ppo_normalize_advantages: bool = True
    reward_weights: tuple[float, float, float, float] = (1.0, 0.5, 0.5, 1.0)
    q_hidden: tuple[int, ...] = (512, 256)
    dqn_hidden: tuple[int, ...] = (512, 256, 128)
    dqn_skip: tuple[int, int] = (2, 3)
    ppo_hidden: tuple[int, ...] = (256, 128)
    w_buckets: int = 10  # tabular state discretization of the concordance value
    train_case_pool: int = 200
    train_with_evidence: bool = False  # retrieval does not affect dynamics


@dataclass
class SimSettings:
    workers: int = 1


@dataclass
class AppConfig:
    consensus: ConsensusSettings = field(default_factory=ConsensusSettings)
    agents: AgentSettings = field(default_factory=AgentSettings)
    evidence: EvidenceSettings = field(default_factory=EvidenceSettings)
    case: CaseSettings = field(default_factory=CaseSettings)
    rl: RlSettings = field(default_factory=RlSettings)
    sim: SimSettings = field(default_factory=SimSettings)
    master_seed: int = 12345
    out_dir: str = "out"
    trace: bool = False
    fixed_clock: bool = True

    def check(self) -> None:
        self.consensus.check()

    def to_dict(self) -> dict:
        return _as_plain(dataclasses.asdict(self))


def _as_plain(obj):
    if isinstance(obj, dict):
        return {k: _as_plain(v) for k, v in obj.items()}
    if isinstance(obj, tuple):
        return [_as_plain(v) for v in obj]
    if isinstance(obj, list):
        return [_as_plain(v) for v in obj]
    return obj


_SECTIONS = {
    "consensus": ConsensusSettings,
    "agents": AgentSettings,
    "evidence": EvidenceSettings,
    "case": CaseSettings,
    "rl": RlSettings,
    "sim": SimSettings,
}

_TUPLE_FIELDS = {"roles", "reward_weights", "q_hidden", "dqn_hidden",
                 "dqn_skip", "ppo_hidden"}


def _build_section(cls, data: dict, path: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys under {path}: {sorted(unknown)}")
    kwargs = {}
    for k, v in data.items():
        kwargs[k] = tuple(v) if k in _TUPLE_FIELDS and isinstance(v, list) else v
    return cls(**kwargs)


def config_from_dict(data: dict) -> AppConfig:
    known = {f.name for f in dataclasses.fields(AppConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            section = data[name]
            if not isinstance(section, dict):
                raise ConfigError(f"config section {name} must be an object")
            kwargs[name] = _build_section(cls, section, name)
    for name in ("master_seed", "out_dir", "trace", "fixed_clock"):
        if name in data:
            kwargs[name] = data[name]
    cfg = AppConfig(**kwargs)
    cfg.check()
    return cfg


def load_config(path: str | None) -> AppConfig:
    if path is None:
        return AppConfig()
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def default_config_json() -> str:
    return json.dumps(AppConfig().to_dict(), indent=2) + "\n"
