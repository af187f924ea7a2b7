"""Consensus-matrix engine.

Builds the N x K matrix of normalized, confidence-weighted treatment
preferences, measures group agreement with Kendall's coefficient of
concordance, detects discordant agents, scores the composite objective,
and runs the full multi-round consultation protocol. Baseline aggregators
(majority, weighted, Borda) are included for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ConsensusSettings
from .domain import (
    AuditLog,
    ConsensusMatrix,
    Opinion,
    PatientCase,
    TreatmentOption,
    opinion_violations,
)
from .errors import AgentFailure, DegenerateShape, NonFiniteInput


def normalize_preferences(raw_row: np.ndarray, epsilon: float = 1e-6) -> np.ndarray:
    """Min-max normalize one agent's raw preference row into [0,1].

    An all-equal row carries no ranking information and maps to the
    uniform 0.5 row (indifference, not opposition).
    """
    row = np.asarray(raw_row, dtype=float)
    if row.size == 0:
        raise NonFiniteInput("empty preference row")
    if not np.all(np.isfinite(row)):
        raise NonFiniteInput(f"non-finite preference row: {row}")
    lo = row.min()
    hi = row.max()
    if hi == lo:
        return np.full_like(row, 0.5)
    return (row - lo) / (hi - lo + epsilon)


def weight_entry(p_hat: float, confidence: float, concern_count: int) -> float:
    """Confidence weighting with a logarithmic unaddressed-concern damper."""
    return p_hat * confidence / (1.0 + np.log1p(concern_count))


def rank_row(row: np.ndarray) -> np.ndarray:
    """Ascending ranks 1..K (largest value gets rank K); ties get mid-ranks."""
    row = np.asarray(row, dtype=float)
    k = row.size
    order = np.argsort(row, kind="stable")
    ranks = np.empty(k, dtype=float)
    vals = row[order]
    i = 0
    while i < k:
        j = i
        while j + 1 < k and vals[j + 1] == vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def kendall_w(matrix: np.ndarray, tie_correction: bool = False) -> float:
    """Kendall's coefficient of concordance over the rows of an N x K matrix.

    W = 12 * sum_k (R_k - Rbar)^2 / (N^2 (K^3 - K)), with R_k the rank sum
    of column k and Rbar = N(K+1)/2. With `tie_correction`, the standard
    per-agent tie term N * sum_i T_i is subtracted from the denominator,
    T_i = sum over tie groups of (t^3 - t). Result clamped to [0,1].
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] < 2 or m.shape[1] < 2:
        raise DegenerateShape(f"need N>=2 agents and K>=2 treatments, got {m.shape}")
    n, k = m.shape
    ranks = np.vstack([rank_row(row) for row in m])
    col_sums = ranks.sum(axis=0)
    mean_rank = n * (k + 1) / 2.0
    s = float(((col_sums - mean_rank) ** 2).sum())
    denom = n * n * (k ** 3 - k)
    if tie_correction:
        t_total = 0.0
        for row in m:
            _, counts = np.unique(row, return_counts=True)
            t_total += float((counts.astype(float) ** 3 - counts).sum())
        denom -= n * t_total
    if denom <= 0:
        return 0.0
    return float(np.clip(12.0 * s / denom, 0.0, 1.0))


def discordance(matrix: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Per-agent total deviation from column means and the flagged set.

    Agent i is flagged when D_i > mean(D) + std(D) (population std). A
    zero spread flags nobody: the inequality is strict.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] < 2:
        raise DegenerateShape(f"need N>=2 agents, got {m.shape}")
    col_means = m.mean(axis=0)
    d = np.abs(m - col_means).sum(axis=1)
    threshold = d.mean() + d.std()
    flagged = [int(i) for i in np.flatnonzero(d > threshold)]
    return d, flagged


def objective_j(consensus_t: float, clinical_fit_t: float,
                evidence_quality_t: float,
                weights: tuple[float, float, float] = (0.4, 0.4, 0.2)) -> float:
    """Composite objective: weighted sum of the three bounded components."""
    a, b, g = weights
    return a * consensus_t + b * clinical_fit_t + g * evidence_quality_t


def clinical_fit(treatment: TreatmentOption) -> float:
    """Bounded appropriateness score from the treatment attribute vector."""
    return (0.5 * treatment.efficacy
            + 0.3 * (1.0 - treatment.toxicity)
            + 0.2 * (treatment.qol_impact + 1.0) / 2.0)


def _max_normalize(v: np.ndarray) -> np.ndarray:
    top = v.max()
    return v / top if top > 0 else np.zeros_like(v)


def objective_scores(matrix: ConsensusMatrix,
                     treatments: list[TreatmentOption],
                     opinions: list[Opinion],
                     weights: tuple[float, float, float] = (0.4, 0.4, 0.2),
                     ) -> tuple[np.ndarray, dict[str, list[float]]]:
    """Per-treatment objective vector plus its component decomposition.

    Each component vector is normalized by its maximum (argmax-preserving)
    before weighting, so common positive rescaling of the raw components
    cannot move the argmax.
    """
    k = matrix.n_treatments
    support = _max_normalize(matrix.entries.mean(axis=0))
    fit = _max_normalize(np.array([clinical_fit(t) for t in treatments]))
    quality_raw = np.zeros(k)
    for t in range(k):
        grades = [op.evidence.grade_score for op in opinions if op.top_treatment() == t]
        quality_raw[t] = float(np.mean(grades)) if grades else 0.0
    quality = _max_normalize(quality_raw)
    scores = np.array([
        objective_j(support[t], fit[t], quality[t], weights) for t in range(k)
    ])
    components = {
        "consensus": [float(x) for x in support],
        "clinical_fit": [float(x) for x in fit],
        "evidence_quality": [float(x) for x in quality],
    }
    return scores, components


def aggregate_baselines(opinions: list[Opinion]) -> dict[str, int]:
    """Majority, confidence-weighted, and Borda winners (lowest-index ties)."""
    if not opinions:
        raise ValueError("need at least one opinion")
    k = len(opinions[0].raw_preferences)

    votes = np.zeros(k)
    for op in opinions:
        votes[op.top_treatment()] += 1

    weighted = np.zeros(k)
    for op in opinions:
        weighted += op.confidence * np.asarray(op.raw_preferences)

    # Borda points: descending-rank convention, best option earns K-1.
    borda = np.zeros(k)
    for op in opinions:
        borda += rank_row(op.raw_preferences) - 1.0

    return {
        "majority": int(np.argmax(votes)),
        "weighted": int(np.argmax(weighted)),
        "borda": int(np.argmax(borda)),
    }


def build_matrix(opinions: list[Opinion], round_index: int,
                 settings: ConsensusSettings) -> ConsensusMatrix:
    """Normalize and confidence-weight all opinion rows, then measure W."""
    rows = []
    for op in opinions:
        p_hat = normalize_preferences(op.raw_preferences, settings.norm_epsilon)
        damper = 1.0 / (1.0 + np.log1p(len(op.concerns)))
        rows.append(p_hat * op.confidence * damper)
    entries = np.vstack(rows)
    w = kendall_w(entries, settings.tie_correction)
    return ConsensusMatrix(
        entries=entries,
        round=round_index,
        kendall_w=w,
        per_agent_confidence=np.array([op.confidence for op in opinions]),
    )


@dataclass
class Feedback:
    """What a flagged agent is told between rounds."""

    column_means: np.ndarray       # of the weighted matrix, for contention points
    raw_group_mean: np.ndarray     # mean raw preference row, revision target
    agent_deviation: np.ndarray    # |M_i - column means| per treatment
    discordance_score: float


def make_feedback(matrix: ConsensusMatrix, opinions: list[Opinion],
                  agent_index: int, d_scores: np.ndarray) -> Feedback:
    col_means = matrix.entries.mean(axis=0)
    raw = np.vstack([op.raw_preferences for op in opinions])
    return Feedback(
        column_means=col_means,
        raw_group_mean=raw.mean(axis=0),
        agent_deviation=np.abs(matrix.entries[agent_index] - col_means),
        discordance_score=float(d_scores[agent_index]),
    )


@dataclass
class ConsultationResult:
    """Everything a finished consultation produced."""

    final_matrix: ConsensusMatrix
    recommendation: int
    rounds_used: int
    consensus_achieved: bool
    w_history: list[float]
    per_round_opinions: list[list[Opinion]]
    j_scores: np.ndarray
    j_components: dict[str, list[float]]
    termination_reason: str  # threshold | stalled | max_rounds
    case_id: str = ""
    treatments: list[TreatmentOption] = field(default_factory=list)
    trace_matrices: list | None = None

    def to_dict(self) -> dict:
        name = (self.treatments[self.recommendation].name
                if self.treatments else str(self.recommendation))
        doc = {
            "case_id": self.case_id,
            "recommendation": int(self.recommendation),
            "recommendation_name": name,
            "consensus_achieved": bool(self.consensus_achieved),
            "rounds_used": int(self.rounds_used),
            "termination_reason": self.termination_reason,
            "w_history": [float(w) for w in self.w_history],
            "j_scores": [float(x) for x in self.j_scores],
            "j_components": self.j_components,
            "final_matrix": self.final_matrix.to_dict(),
            "per_round_opinions": [
                [op.to_dict() for op in round_ops]
                for round_ops in self.per_round_opinions
            ],
        }
        if self.trace_matrices is not None:
            doc["trace_matrices"] = self.trace_matrices
        return doc


def _checked(opinion: Opinion, k: int) -> Opinion:
    bad = opinion_violations(opinion, k)
    if bad:
        raise AgentFailure(
            "invalid_opinion",
            f"agent {opinion.agent_id} round {opinion.round}: " + "; ".join(bad))
    return opinion


def run_consultation(
    case: PatientCase,
    agents: list,
    evidence_store,
    settings: ConsensusSettings,
    treatments: list[TreatmentOption],
    audit: AuditLog | None = None,
    trace: bool = False,
) -> ConsultationResult:
    """Multi-round consensus formation over one case.

    Per round every agent contributes an opinion, the matrix is rebuilt
    and W measured; while W stays at or below the threshold and rounds
    remain, discordant agents receive feedback and revise. Terminates on
    W above the threshold, on exhausting max_rounds, or early when
    successive W values move less than the convergence tolerance
    (reason "stalled"). The recommendation is the column-sum argmax with
    lowest-index tie-break.
    """
    if len(agents) < 2:
        raise DegenerateShape("a consultation needs at least two agents")
    k = len(treatments)

    def log(event, rnd, agent_id, payload):
        if audit is not None:
            audit.emit(event, rnd, agent_id, payload)

    opinions = []
    for agent in agents:
        op = _checked(agent.generate_opinion(case, evidence_store, None, 1), k)
        opinions.append(op)
        log("opinion", 1, op.agent_id, {
            "top_treatment": op.top_treatment(),
            "confidence": round(float(op.confidence), 6),
            "concerns": list(op.concerns),
        })

    matrix = build_matrix(opinions, 1, settings)
    log("matrix_update", 1, "system", {"kendall_w": round(matrix.kendall_w, 12)})

    w_history = [matrix.kendall_w]
    per_round = [list(opinions)]
    matrices = [matrix]
    reason = None
    rounds_used = 1

    while True:
        w = w_history[-1]
        if w > settings.w_threshold:
            reason = "threshold"
            break
        if rounds_used >= settings.max_rounds:
            reason = "max_rounds"
            break
        if rounds_used >= 2 and abs(w_history[-1] - w_history[-2]) < settings.convergence_tol:
            reason = "stalled"
            break

        d_scores, flagged = discordance(matrix.entries)
        next_round = rounds_used + 1
        revised = []
        for i, agent in enumerate(agents):
            if i in flagged:
                fb = make_feedback(matrix, opinions, i, d_scores)
                log("feedback", rounds_used, opinions[i].agent_id, {
                    "discordance": round(fb.discordance_score, 6),
                    "mode": settings.feedback_mode,
                })
                op = agent.revise_opinion(
                    opinions[i], fb, settings.feedback_mode, next_round,
                    case=case, evidence_store=evidence_store)
            else:
                op = agent.carry_opinion(
                    opinions[i], next_round, case=case,
                    evidence_store=evidence_store)
            revised.append(_checked(op, k))
            log("opinion", next_round, op.agent_id, {
                "top_treatment": op.top_treatment(),
                "confidence": round(float(op.confidence), 6),
                "revised": i in flagged,
            })

        opinions = revised
        rounds_used = next_round
        matrix = build_matrix(opinions, rounds_used, settings)
        matrices.append(matrix)
        log("matrix_update", rounds_used, "system",
            {"kendall_w": round(matrix.kendall_w, 12)})
        w_history.append(matrix.kendall_w)
        per_round.append(list(opinions))

    recommendation = int(np.argmax(matrix.entries.sum(axis=0)))
    j_scores, j_components = objective_scores(
        matrix, treatments, opinions,
        (settings.alpha, settings.beta, settings.gamma))

    log("consensus", rounds_used, "system", {
        "recommendation": recommendation,
        "kendall_w": round(matrix.kendall_w, 12),
    })
    log("termination", rounds_used, "system",
        {"reason": reason, "rounds_used": rounds_used})

    result = ConsultationResult(
        final_matrix=matrix,
        recommendation=recommendation,
        rounds_used=rounds_used,
        consensus_achieved=matrix.kendall_w > settings.w_threshold,
        w_history=w_history,
        per_round_opinions=per_round,
        j_scores=j_scores,
        j_components=j_components,
        termination_reason=reason,
        case_id=case.id,
        treatments=list(treatments),
        trace_matrices=[m.to_dict() for m in matrices] if trace else None,
    )
    return result
