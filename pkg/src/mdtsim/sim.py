"""Synthetic cohorts: case generation with hidden ground-truth labels,
bulk consultation execution, metric aggregation, and trained-policy
versus fixed-policy comparison.

Per-case randomness comes from substreams keyed on (cohort seed, case
index), so results are independent of execution order and of the worker
count.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .agents import make_team, stream_seed
from .builtin_corpus import builtin_store
from .config import AppConfig
from .consensus import aggregate_baselines, clinical_fit, run_consultation
from .domain import (
    AuditLog,
    FixedClock,
    PatientCase,
    SystemClock,
    TreatmentOption,
    default_treatments,
    validate_case,
)
from .errors import AgentFailure, LayoutMismatch
from .evidence import CorpusStore, EvidenceService
from .rl.env import ConsensusEnv, RlAction

_BLOCK_DISTRIBUTIONS = {
    "demographics": lambda rng, n: rng.uniform(0.0, 1.0, n),
    "vitals": lambda rng, n: rng.beta(5.0, 5.0, n),
    "labs": lambda rng, n: rng.beta(2.0, 2.0, n),
    "comorbidities": lambda rng, n: rng.beta(2.0, 3.0, n),
}

_LABEL_NOISE_SCALE = 0.15


def generate_case(seed: int, difficulty: float = 0.5,
                  blocks: dict[str, tuple[int, int]] | None = None,
                  treatments: list[TreatmentOption] | None = None,
                  case_id: str | None = None) -> PatientCase:
    """Seeded synthetic case; the hidden label is the attribute-fit argmax
    perturbed by difficulty-scaled noise (difficulty 0 is noiseless)."""
    from .domain import DEFAULT_FEATURE_BLOCKS
    blocks = dict(blocks) if blocks is not None else dict(DEFAULT_FEATURE_BLOCKS)
    treatments = treatments if treatments is not None else default_treatments()
    rng = np.random.default_rng(np.random.SeedSequence(seed))

    dim = max(hi for _, hi in blocks.values())
    features = np.zeros(dim)
    for name, (lo, hi) in blocks.items():
        sampler = _BLOCK_DISTRIBUTIONS.get(name,
                                           _BLOCK_DISTRIBUTIONS["demographics"])
        features[lo:hi] = sampler(rng, hi - lo)

    fits = np.array([clinical_fit(t) for t in treatments])
    noise = rng.normal(0.0, _LABEL_NOISE_SCALE, len(treatments))
    label = int(np.argmax(fits + difficulty * noise))

    return PatientCase(
        id=case_id if case_id is not None else f"case-{seed:012d}",
        features=features,
        feature_blocks=blocks,
        hidden_label=label,
        metadata={"generator": "synthetic-v1", "difficulty": f"{difficulty:g}"},
    )


def case_seed_for(cohort_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([cohort_seed, index]).generate_state(1)[0])


@dataclass
class CohortMetrics:
    n_cases: int
    consensus_rate: float
    mean_w: float
    mean_rounds: float
    accuracy: float
    per_method_accuracy: dict[str, float]
    failure_breakdown: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "n_cases": self.n_cases,
            "consensus_rate": self.consensus_rate,
            "mean_w": self.mean_w,
            "mean_rounds": self.mean_rounds,
            "accuracy": self.accuracy,
            "per_method_accuracy": dict(self.per_method_accuracy),
            "failure_breakdown": dict(self.failure_breakdown),
        }


_STORE_CACHE: dict[tuple, CorpusStore] = {}


def evidence_service_for(config: AppConfig) -> EvidenceService:
    ev = config.evidence
    key = (ev.corpus_path, ev.now_year)
    store = _STORE_CACHE.get(key)
    if store is None:
        store = (CorpusStore.from_jsonl(ev.corpus_path, ev.now_year)
                 if ev.corpus_path else builtin_store(ev.now_year))
        _STORE_CACHE[key] = store
    return EvidenceService(store, ev)


def consult_case(case: PatientCase, config: AppConfig, seed: int,
                 roles: tuple[str, ...] | None = None,
                 with_evidence: bool = True, trace: bool = False):
    """One consultation with a fresh team and audit log; returns
    (result, audit)."""
    treatments = default_treatments()
    team = make_team(treatments, config.agents, seed, case.id, roles=roles)
    clock = FixedClock() if config.fixed_clock else SystemClock()
    audit = AuditLog(case.id, clock)
    service = evidence_service_for(config) if with_evidence else None
    result = run_consultation(case, team, service, config.consensus,
                              treatments, audit=audit, trace=trace)
    return result, audit


def _run_one_case(args) -> dict:
    index, seed, config, roles, with_evidence = args
    case = generate_case(case_seed_for(seed, index),
                         difficulty=config.case.difficulty,
                         blocks=config.case.block_ranges(),
                         case_id=f"case-{index:05d}")
    checked = validate_case(case, config.case.feature_dim)
    if checked is not case:
        raise ValueError(f"generated case invalid: {checked}")
    try:
        result, audit = consult_case(case, config, seed, roles=roles,
                                     with_evidence=with_evidence,
                                     trace=config.trace)
    except AgentFailure as exc:
        return {"index": index, "case_id": case.id, "failed": True,
                "error": str(exc), "hidden_label": case.hidden_label}
    final_ops = result.per_round_opinions[-1]
    baselines = aggregate_baselines(final_ops)
    return {
        "index": index,
        "case_id": case.id,
        "failed": False,
        "hidden_label": case.hidden_label,
        "w": result.final_matrix.kendall_w,
        "rounds": result.rounds_used,
        "consensus": result.consensus_achieved,
        "reason": result.termination_reason,
        "recommendation": result.recommendation,
        "baselines": baselines,
        "result": result.to_dict(),
        "audit": audit.to_jsonl(),
    }


def _aggregate(rows: list[dict]) -> CohortMetrics:
    n = len(rows)
    ok = [r for r in rows if not r["failed"]]
    failures: dict[str, int] = {}
    for r in rows:
        key = "agent_failure" if r["failed"] else r["reason"]
        failures[key] = failures.get(key, 0) + 1

    def rate(pred) -> float:
        return sum(1 for r in ok if pred(r)) / n if n else 0.0

    hits = {m: 0 for m in ("consensus", "majority", "weighted", "borda")}
    labeled = 0
    for r in ok:
        label = r["hidden_label"]
        if label is None:
            continue
        labeled += 1
        hits["consensus"] += int(r["recommendation"] == label)
        for m in ("majority", "weighted", "borda"):
            hits[m] += int(r["baselines"][m] == label)
    per_method = {m: (hits[m] / labeled if labeled else 0.0) for m in hits}

    return CohortMetrics(
        n_cases=n,
        consensus_rate=rate(lambda r: r["consensus"]),
        mean_w=float(np.mean([r["w"] for r in ok])) if ok else 0.0,
        mean_rounds=float(np.mean([r["rounds"] for r in ok])) if ok else 0.0,
        accuracy=per_method["consensus"],
        per_method_accuracy=per_method,
        failure_breakdown=failures,
    )


def _metrics_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["case_id", "w", "rounds", "consensus", "reason",
                     "recommendation", "hidden_label",
                     "majority", "weighted", "borda"])
    for r in rows:
        if r["failed"]:
            writer.writerow([r["case_id"], "", "", "", "agent_failure",
                             "", r["hidden_label"], "", "", ""])
        else:
            writer.writerow([
                r["case_id"], f"{r['w']:.12f}", r["rounds"],
                int(r["consensus"]), r["reason"], r["recommendation"],
                r["hidden_label"], r["baselines"]["majority"],
                r["baselines"]["weighted"], r["baselines"]["borda"],
            ])
    return buf.getvalue()


def run_cohort(n: int, seed: int, config: AppConfig,
               out_dir: str | None = None, workers: int = 1,
               roles: tuple[str, ...] | None = None,
               with_evidence: bool = True) -> CohortMetrics:
    """Run n independent consultations and aggregate their metrics.

    Workers > 1 fans cases out to processes; files are written by the
    parent in case order, so outputs are identical for any worker count.
    """
    if n < 1:
        raise ValueError("cohort size must be >= 1")
    tasks = [(i, seed, config, roles, with_evidence) for i in range(n)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_one_case, tasks, chunksize=16))
    else:
        rows = [_run_one_case(t) for t in tasks]
    rows.sort(key=lambda r: r["index"])

    metrics = _aggregate(rows)
    if out_dir is not None:
        per_case = os.path.join(out_dir, "per_case")
        os.makedirs(per_case, exist_ok=True)
        for r in rows:
            if r["failed"]:
                continue
            base = os.path.join(per_case, r["case_id"])
            with open(base + ".json", "w", encoding="utf-8", newline="\n") as fh:
                json.dump(r["result"], fh, indent=2)
                fh.write("\n")
            with open(base + ".audit.jsonl", "w", encoding="utf-8",
                      newline="\n") as fh:
                fh.write(r["audit"])
        with open(os.path.join(out_dir, "cohort_summary.json"), "w",
                  encoding="utf-8", newline="\n") as fh:
            json.dump(metrics.to_dict(), fh, indent=2)
            fh.write("\n")
        with open(os.path.join(out_dir, "metrics.csv"), "w",
                  encoding="utf-8", newline="\n") as fh:
            fh.write(_metrics_csv(rows))
    return metrics


def maintain_policy(state: np.ndarray, env: ConsensusEnv) -> int:
    """Fixed baseline: never push the discussion, never revise."""
    return RlAction(0, "maintain_position").encode()


def _env_for_case(index: int, seed: int, config: AppConfig,
                  roles: tuple[str, ...] | None) -> ConsensusEnv:
    treatments = default_treatments()
    case = generate_case(case_seed_for(seed, index),
                         difficulty=config.case.difficulty,
                         blocks=config.case.block_ranges(),
                         case_id=f"case-{index:05d}")
    team = make_team(treatments, config.agents, seed, case.id, roles=roles)
    env_rng = np.random.default_rng(stream_seed(seed, case.id, "environment"))
    return ConsensusEnv(case, team, treatments, config, env_rng)


def _run_policy_episode(env: ConsensusEnv, policy) -> dict:
    state = env.reset()
    while not env.done:
        state, _, _ = env.step(policy(state, env))
    return env.episode_stats()


def evaluate_policy(policy, cohort_seed: int, n: int, config: AppConfig,
                    roles: tuple[str, ...] | None = None,
                    baseline=maintain_policy) -> dict:
    """Paired comparison of a policy against the maintain baseline on a
    seed-fixed cohort; both see identical cases and agent streams."""
    stats = {"baseline": [], "policy": []}
    for name, pol in (("baseline", baseline), ("policy", policy)):
        for i in range(n):
            env = _env_for_case(i, cohort_seed, config, roles)
            if getattr(pol, "in_dim", None) is not None and pol.in_dim != env.state_dim:
                raise LayoutMismatch(
                    f"policy expects state dim {pol.in_dim}, env has {env.state_dim}")
            stats[name].append(_run_policy_episode(env, pol))

    def summary(rows: list[dict]) -> dict:
        return {
            "mean_rounds": float(np.mean([r["rounds"] for r in rows])),
            "consensus_rate": float(np.mean([r["consensus"] for r in rows])),
            "mean_w": float(np.mean([r["w"] for r in rows])),
        }

    round_diffs = [b["rounds"] - p["rounds"]
                   for b, p in zip(stats["baseline"], stats["policy"])]
    return {
        "n_cases": n,
        "baseline": summary(stats["baseline"]),
        "policy": summary(stats["policy"]),
        "paired_mean_round_reduction": float(np.mean(round_diffs)),
        "paired_round_diffs_positive": int(sum(d > 0 for d in round_diffs)),
    }
