"""Role-specialized policy agents.

Each of the seven board roles carries a published preference formula
(weighted factor scores, some entering through an inverse term), a
typical confidence range, a decision-factor weighting, and threshold
rules that raise concern codes. Factor scores are derived from case and
treatment data through an explicit table so the mapping stays
inspectable and overridable rather than buried in code.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from .config import AgentSettings
from .domain import (
    EvidenceChain,
    Opinion,
    PatientCase,
    TreatmentOption,
    empty_chain,
)
from .errors import AgentFailure

ROLE_IDS = (
    "oncologist", "radiologist", "nurse", "psychologist",
    "patient_advocate", "nutritionist", "rehab_therapist",
)

ROLE_DISPLAY = {
    "oncologist": "Oncologist",
    "radiologist": "Radiologist",
    "nurse": "Nurse",
    "psychologist": "Psychologist",
    "patient_advocate": "Patient Advocate",
    "nutritionist": "Nutritionist",
    "rehab_therapist": "Rehabilitation Therapist",
}

INTERACTION_MODES = (
    "encourage_consensus",
    "request_clarification",
    "provide_feedback",
    "maintain_position",
)

# Revision-rate multiplier per interaction mode.
MODE_MULTIPLIERS = {
    "encourage_consensus": 1.5,
    "request_clarification": 1.0,
    "provide_feedback": 1.25,
    "maintain_position": 0.0,
}


@dataclass
class FormulaTerm:
    """One weighted term of a role preference formula.

    kind: "direct" uses the score as-is, "complement" uses 1-x (written
    into the formula itself), "inverse" is the mode-switchable reciprocal
    term.
    """

    factor: str
    weight: float
    kind: str = "direct"


@dataclass
class FactorSpec:
    """How one factor score is derived: a convex blend of a treatment
    attribute term and a case-block signal.

    value = attr_weight * attr(treatment) + (1 - attr_weight) * signal.
    The signal is the role's decision-factor-weighted aggregate of the
    treatment-aligned panel of the named feature block (complemented when
    invert_case is set), so the same case reads differently per option.
    The "fit" attribute term is the composite appropriateness score
    0.5*eta + 0.3*(1-tau) + 0.2*qol01, shared across roles.
    """

    attr: str          # eta | tau | one_minus_tau | qol01 | cost_norm | one_minus_cost | fit
    attr_weight: float
    block: str
    invert_case: bool = False


@dataclass
class ConcernRule:
    """Threshold predicate over treatment attributes and one feature block."""

    code: str
    min_toxicity: float | None = None
    max_efficacy: float | None = None
    min_cost: float | None = None
    block: str | None = None
    block_min: float | None = None
    block_max: float | None = None

    def fires(self, case: PatientCase, treatment: TreatmentOption) -> bool:
        if self.min_toxicity is not None and treatment.toxicity < self.min_toxicity:
            return False
        if self.max_efficacy is not None and treatment.efficacy > self.max_efficacy:
            return False
        if self.min_cost is not None and treatment.cost < self.min_cost:
            return False
        if self.block is not None:
            mean = case.block_mean(self.block)
            if self.block_min is not None and mean < self.block_min:
                return False
            if self.block_max is not None and mean > self.block_max:
                return False
        return True


@dataclass
class RoleProfile:
    role: str
    formula: tuple[FormulaTerm, ...]
    confidence_range: tuple[float, float]
    decision_factor_weights: dict[str, float]
    factor_table: dict[str, FactorSpec]
    concern_rules: tuple[ConcernRule, ...] = ()

    def check(self) -> None:
        total = sum(t.weight for t in self.formula)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"{self.role}: formula weights sum to {total}, not 1")
        lo, hi = self.confidence_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError(f"{self.role}: bad confidence range {self.confidence_range}")


def _profiles() -> dict[str, RoleProfile]:
    p = {}
    p["oncologist"] = RoleProfile(
        role="oncologist",
        formula=(FormulaTerm("e", 0.6), FormulaTerm("s", 0.3),
                 FormulaTerm("t", 0.1, "inverse")),
        confidence_range=(0.80, 0.95),
        decision_factor_weights={
            "tumour_stage": 0.35, "histology": 0.25, "molecular_markers": 0.20,
            "performance_status": 0.15, "treatment_history": 0.05,
        },
        factor_table={
            "e": FactorSpec("eta", 0.7, "labs"),
            "s": FactorSpec("fit", 0.75, "labs"),
            "t": FactorSpec("tau", 1.0, "labs"),
        },
        concern_rules=(
            ConcernRule("low_expected_efficacy", max_efficacy=0.3,
                        block="labs", block_min=0.6),
            ConcernRule("organ_function_risk", min_toxicity=0.6,
                        block="labs", block_min=0.65),
        ),
    )
    p["radiologist"] = RoleProfile(
        role="radiologist",
        formula=(FormulaTerm("i", 0.5), FormulaTerm("a", 0.3),
                 FormulaTerm("m", 0.2)),
        confidence_range=(0.75, 0.90),
        decision_factor_weights={
            "imaging_findings": 0.45, "tumour_response": 0.30,
            "anatomical_constraints": 0.15, "procedural_feasibility": 0.10,
        },
        factor_table={
            "i": FactorSpec("fit", 0.8, "vitals"),
            "a": FactorSpec("one_minus_tau", 0.75, "vitals"),
            "m": FactorSpec("eta", 0.5, "vitals"),
        },
        concern_rules=(
            ConcernRule("anatomy_limits_delivery", min_toxicity=0.55,
                        block="vitals", block_max=0.35),
            ConcernRule("monitoring_burden", block="vitals", block_min=0.7),
        ),
    )
    p["nurse"] = RoleProfile(
        role="nurse",
        formula=(FormulaTerm("b", 0.4, "complement"), FormulaTerm("t", 0.3),
                 FormulaTerm("f", 0.3)),
        confidence_range=(0.70, 0.85),
        decision_factor_weights={
            "patient_tolerance": 0.40, "care_complexity": 0.25,
            "resource_requirements": 0.20, "family_support": 0.15,
        },
        factor_table={
            "b": FactorSpec("tau", 0.75, "comorbidities"),
            "t": FactorSpec("one_minus_tau", 0.75, "comorbidities"),
            "f": FactorSpec("qol01", 0.6, "comorbidities"),
        },
        concern_rules=(
            ConcernRule("high_toxicity_frail_patient", min_toxicity=0.7,
                        block="comorbidities", block_min=0.6),
            ConcernRule("complex_home_care", min_toxicity=0.5,
                        block="demographics", block_max=0.35),
        ),
    )
    p["psychologist"] = RoleProfile(
        role="psychologist",
        formula=(FormulaTerm("d", 0.4, "inverse"), FormulaTerm("c", 0.3),
                 FormulaTerm("a", 0.3)),
        confidence_range=(0.65, 0.80),
        decision_factor_weights={
            "mental_health": 0.45, "coping_capacity": 0.25,
            "social_support": 0.20, "treatment_anxiety": 0.10,
        },
        factor_table={
            "d": FactorSpec("tau", 0.75, "comorbidities"),
            "c": FactorSpec("qol01", 0.65, "comorbidities"),
            "a": FactorSpec("one_minus_tau", 0.75, "comorbidities"),
        },
        concern_rules=(
            ConcernRule("treatment_anxiety_risk", min_toxicity=0.6,
                        block="comorbidities", block_min=0.55),
            ConcernRule("low_coping_reserve", block="demographics", block_max=0.3),
        ),
    )
    p["patient_advocate"] = RoleProfile(
        role="patient_advocate",
        formula=(FormulaTerm("v", 0.5), FormulaTerm("e", 0.25),
                 FormulaTerm("x", 0.25)),
        confidence_range=(0.75, 0.90),
        decision_factor_weights={
            "patient_preferences": 0.50, "ethical_considerations": 0.25,
            "informed_consent": 0.15, "accessibility": 0.10,
        },
        factor_table={
            "v": FactorSpec("qol01", 0.75, "comorbidities"),
            "e": FactorSpec("fit", 0.6, "comorbidities"),
            "x": FactorSpec("one_minus_cost", 0.7, "comorbidities"),
        },
        concern_rules=(
            ConcernRule("cost_access_barrier", min_cost=60_000.0,
                        block="demographics", block_max=0.4),
            ConcernRule("goals_of_care_mismatch", max_efficacy=0.25,
                        block="comorbidities", block_min=0.6),
        ),
    )
    p["nutritionist"] = RoleProfile(
        role="nutritionist",
        formula=(FormulaTerm("n", 0.4), FormulaTerm("r", 0.3, "complement"),
                 FormulaTerm("m", 0.3)),
        confidence_range=(0.60, 0.75),
        decision_factor_weights={
            "nutritional_status": 0.40, "treatment_nutrition_interactions": 0.30,
            "metabolic_impact": 0.20, "dietary_capacity": 0.10,
        },
        factor_table={
            "n": FactorSpec("one_minus_tau", 0.75, "comorbidities"),
            "r": FactorSpec("tau", 0.75, "comorbidities"),
            "m": FactorSpec("fit", 0.6, "comorbidities"),
        },
        concern_rules=(
            ConcernRule("nutritional_depletion_risk", min_toxicity=0.6,
                        block="labs", block_min=0.6),
            ConcernRule("dietary_intake_compromised", block="labs", block_min=0.75),
        ),
    )
    p["rehab_therapist"] = RoleProfile(
        role="rehab_therapist",
        formula=(FormulaTerm("f", 0.35), FormulaTerm("r", 0.3),
                 FormulaTerm("l", 0.35, "inverse")),
        confidence_range=(0.65, 0.80),
        decision_factor_weights={
            "functional_capacity": 0.35, "rehabilitation_potential": 0.30,
            "mobility_impact": 0.20, "independence_preservation": 0.15,
        },
        factor_table={
            "f": FactorSpec("one_minus_tau", 0.75, "comorbidities"),
            "r": FactorSpec("fit", 0.6, "comorbidities"),
            "l": FactorSpec("tau", 0.75, "comorbidities"),
        },
        concern_rules=(
            ConcernRule("mobility_decline_risk", min_toxicity=0.65,
                        block="comorbidities", block_min=0.55),
            ConcernRule("prolonged_recovery", min_toxicity=0.75,
                        block="vitals", block_max=0.4),
        ),
    )
    for prof in p.values():
        prof.check()
    return p


ROLE_PROFILES = _profiles()


@dataclass
class FactorScores:
    role: str
    values: dict[str, float]


def _attr_value(name: str, treatment: TreatmentOption, cost_scale: float) -> float:
    if name == "eta":
        return treatment.efficacy
    if name == "tau":
        return treatment.toxicity
    if name == "one_minus_tau":
        return 1.0 - treatment.toxicity
    if name == "qol01":
        return (treatment.qol_impact + 1.0) / 2.0
    if name == "cost_norm":
        return min(treatment.cost / cost_scale, 1.0)
    if name == "one_minus_cost":
        return 1.0 - min(treatment.cost / cost_scale, 1.0)
    if name == "fit":
        return (0.5 * treatment.efficacy
                + 0.3 * (1.0 - treatment.toxicity)
                + 0.2 * (treatment.qol_impact + 1.0) / 2.0)
    raise ValueError(f"unknown attribute term {name!r}")


def role_case_signal(profile: RoleProfile, case: PatientCase, block: str,
                     treatment_index: int, n_treatments: int) -> float:
    """Decision-factor-weighted aggregate of the treatment-aligned panel
    of one feature block, in [0,1]."""
    weights = np.array(list(profile.decision_factor_weights.values()))
    panels = case.block_panel_means(block, n_treatments, len(weights))
    return float(weights @ panels[treatment_index])


def derive_factor_scores(role: str, case: PatientCase,
                         treatment: TreatmentOption,
                         settings: AgentSettings | None = None,
                         n_treatments: int = 7) -> FactorScores:
    """Evaluate the role's factor table for one (case, treatment) pair."""
    profile = ROLE_PROFILES.get(role)
    if profile is None:
        raise AgentFailure("invalid_opinion", f"unknown role {role!r}")
    cost_scale = settings.cost_scale if settings else 100_000.0
    values = {}
    for name, spec in profile.factor_table.items():
        attr = _attr_value(spec.attr, treatment, cost_scale)
        signal = role_case_signal(profile, case, spec.block,
                                  treatment.index, n_treatments)
        if spec.invert_case:
            signal = 1.0 - signal
        values[name] = spec.attr_weight * attr + (1.0 - spec.attr_weight) * signal
    return FactorScores(role=role, values=values)


def bounded_inverse(x: float) -> float:
    return 1.0 - x


def literal_inverse(x: float) -> float:
    """Clamped reciprocal rescaled into [0,1]; keeps x near 0 from exploding."""
    return min(1.0 / max(x, 0.1), 10.0) / 10.0


def role_preference(role: str, scores: FactorScores,
                    inverse_mode: str = "bounded") -> float:
    """Evaluate the role's preference formula, clipped into [0,1]."""
    profile = ROLE_PROFILES[role]
    inv = bounded_inverse if inverse_mode == "bounded" else literal_inverse
    total = 0.0
    for term in profile.formula:
        x = scores.values[term.factor]
        if term.kind == "direct":
            v = x
        elif term.kind == "complement":
            v = 1.0 - x
        elif term.kind == "inverse":
            v = inv(x)
        else:
            raise ValueError(f"unknown term kind {term.kind!r}")
        total += term.weight * v
    return float(np.clip(total, 0.0, 1.0))


def generate_concerns(role: str, case: PatientCase,
                      treatment: TreatmentOption) -> tuple[str, ...]:
    profile = ROLE_PROFILES[role]
    return tuple(sorted(
        r.code for r in profile.concern_rules if r.fires(case, treatment)))


def stream_seed(master_seed: int, case_id: str, agent_id: str) -> np.random.SeedSequence:
    """Stable per-(seed, case, agent) stream; hashing keeps it platform-fixed."""
    digest = hashlib.sha256(f"{case_id}/{agent_id}".encode()).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in (0, 4, 8, 12)]
    return np.random.SeedSequence([master_seed & 0xFFFFFFFF, *words])


class PolicyAgent:
    """Deterministic rule-based stand-in for one board member.

    Confidence is sampled once per consultation from the role's range via
    the agent's own seeded stream, then reduced per concern with a floor
    at the range bottom. Preferences come from the role formula over all
    treatments; revision blends toward the group's raw mean.
    """

    def __init__(self, role: str, agent_id: str,
                 treatments: list[TreatmentOption],
                 settings: AgentSettings,
                 rng: np.random.Generator):
        if role not in ROLE_PROFILES:
            raise AgentFailure("invalid_opinion", f"unknown role {role!r}")
        self.role = role
        self.agent_id = agent_id
        self.profile = ROLE_PROFILES[role]
        self.treatments = treatments
        self.settings = settings
        self.rng = rng
        self._base_confidence: float | None = None

    def initial_preferences(self, case: PatientCase) -> np.ndarray:
        k = len(self.treatments)
        scores01 = np.array([
            role_preference(
                self.role,
                derive_factor_scores(self.role, case, t, self.settings, k),
                self.settings.inverse_mode)
            for t in self.treatments
        ])
        return 2.0 * scores01 - 1.0  # map [0,1] onto the raw [-1,1] scale

    def _confidence(self, n_concerns: int) -> float:
        lo, hi = self.profile.confidence_range
        if self._base_confidence is None:
            self._base_confidence = float(self.rng.uniform(lo, hi))
        penalty = self.settings.confidence_penalty_per_concern * n_concerns
        return max(lo, self._base_confidence - penalty)

    def _reasoning(self, case: PatientCase, prefs: np.ndarray,
                   concerns: tuple[str, ...], chain: EvidenceChain) -> str:
        top = int(np.argmax(prefs))
        treatment = self.treatments[top]
        scores = derive_factor_scores(self.role, case, treatment,
                                      self.settings, len(self.treatments))
        factors = ", ".join(f"{k}={v:.2f}" for k, v in scores.values.items())
        parts = [
            f"{ROLE_DISPLAY[self.role]} assessment for case {case.id}:",
            f"leading option {treatment.name} (preference {prefs[top]:+.2f});",
            f"factor scores {factors}; evidence grade {chain.grade}.",
        ]
        if concerns:
            parts.append("Concerns: " + ", ".join(concerns) + ".")
        return " ".join(parts)

    def _assemble(self, case: PatientCase, prefs: np.ndarray,
                  evidence_store, round_index: int) -> Opinion:
        top = int(np.argmax(prefs))
        treatment = self.treatments[top]
        concerns = generate_concerns(self.role, case, treatment)
        chain = (evidence_store.build_chain(case, self.role, treatment)
                 if evidence_store is not None else empty_chain())
        return Opinion(
            agent_id=self.agent_id,
            raw_preferences=prefs,
            reasoning=self._reasoning(case, prefs, concerns, chain),
            confidence=self._confidence(len(concerns)),
            concerns=concerns,
            evidence=chain,
            round=round_index,
        )

    def generate_opinion(self, case: PatientCase, evidence_store,
                         prev_matrix, round_index: int) -> Opinion:
        # First-round opinions ignore the (empty) previous matrix; later
        # rounds only move through revise_opinion.
        prefs = self.initial_preferences(case)
        return self._assemble(case, prefs, evidence_store, round_index)

    def revise_opinion(self, previous: Opinion, feedback, mode: str,
                       round_index: int, case: PatientCase,
                       evidence_store) -> Opinion:
        lam = float(np.clip(
            self.settings.base_revision_rate * MODE_MULTIPLIERS[mode], 0.0, 1.0))
        if lam == 0.0:
            return self.carry_opinion(previous, round_index, case, evidence_store)
        prefs = ((1.0 - lam) * np.asarray(previous.raw_preferences)
                 + lam * np.asarray(feedback.raw_group_mean))
        op = self._assemble(case, prefs, evidence_store, round_index)
        return replace(op, confidence=previous.confidence)

    def carry_opinion(self, previous: Opinion, round_index: int,
                      case: PatientCase, evidence_store) -> Opinion:
        return replace(previous, round=round_index)


def make_team(treatments: list[TreatmentOption], settings: AgentSettings,
              master_seed: int, case_id: str,
              roles: tuple[str, ...] | None = None) -> list[PolicyAgent]:
    """One agent per role, each with an isolated RNG stream."""
    roles = tuple(roles if roles is not None else settings.roles)
    counts: dict[str, int] = {}
    team = []
    for role in roles:
        n = counts.get(role, 0)
        counts[role] = n + 1
        agent_id = role if n == 0 else f"{role}#{n + 1}"
        rng = np.random.default_rng(stream_seed(master_seed, case_id, agent_id))
        team.append(PolicyAgent(role, agent_id, treatments, settings, rng))
    return team


def parse_external_opinion(payload: dict, agent_id: str, n_treatments: int,
                           round_index: int = 1) -> Opinion:
    """Validate a JSON opinion from an external text agent.

    Schema: {preferences: [K floats], confidence: float,
    concerns: [str], reasoning: str}.
    """
    if not isinstance(payload, dict):
        raise AgentFailure("schema_violation", "response body is not an object")
    missing = {"preferences", "confidence", "concerns", "reasoning"} - set(payload)
    if missing:
        raise AgentFailure("schema_violation", f"missing keys {sorted(missing)}")
    prefs = payload["preferences"]
    if (not isinstance(prefs, list)
            or len(prefs) != n_treatments
            or not all(isinstance(x, (int, float)) for x in prefs)):
        raise AgentFailure(
            "schema_violation",
            f"preferences must be a list of {n_treatments} numbers")
    if any(not -1.0 <= float(x) <= 1.0 for x in prefs):
        raise AgentFailure("range_violation", f"preference outside [-1,1]: {prefs}")
    conf = payload["confidence"]
    if not isinstance(conf, (int, float)) or not 0.0 <= float(conf) <= 1.0:
        raise AgentFailure("range_violation", f"confidence outside [0,1]: {conf}")
    concerns = payload["concerns"]
    if not isinstance(concerns, list) or not all(isinstance(c, str) for c in concerns):
        raise AgentFailure("schema_violation", "concerns must be a list of strings")
    if len(set(concerns)) != len(concerns):
        raise AgentFailure("range_violation", "duplicate concern codes")
    reasoning = payload["reasoning"]
    if not isinstance(reasoning, str):
        raise AgentFailure("schema_violation", "reasoning must be a string")
    if len(reasoning.split()) > 512:
        raise AgentFailure("range_violation", "reasoning exceeds 512 tokens")
    return Opinion(
        agent_id=agent_id,
        raw_preferences=np.asarray(prefs, dtype=float),
        reasoning=reasoning,
        confidence=float(conf),
        concerns=tuple(sorted(concerns)),
        evidence=empty_chain(),
        round=round_index,
    )


class ExternalAgentAdapter:
    """Contract for plugging a text-based agent behind the opinion schema.

    `transport` is any callable (request_payload, timeout_s) -> response
    dict; it must raise TimeoutError when no response arrives in time.
    """

    def __init__(self, agent_id: str, transport, timeout_s: float,
                 n_treatments: int):
        self.agent_id = agent_id
        self.transport = transport
        self.timeout_s = timeout_s
        self.n_treatments = n_treatments

    def call(self, case: PatientCase, context: dict) -> Opinion:
        request = {
            "agent_id": self.agent_id,
            "case": case.to_dict(),
            "context": context,
            "response_schema": {
                "preferences": f"[{self.n_treatments} floats in [-1,1]]",
                "confidence": "float in [0,1]",
                "concerns": "[str]",
                "reasoning": "str, max 512 tokens",
            },
        }
        try:
            response = self.transport(request, self.timeout_s)
        except TimeoutError as exc:
            raise AgentFailure(
                "timeout",
                f"{self.agent_id}: no response within {self.timeout_s}s") from exc
        return parse_external_opinion(
            response, self.agent_id, self.n_treatments,
            round_index=int(context.get("round", 1)))
