"""Core data model: cases, treatments, opinions, matrices, evidence, audit.

All types here are value objects: arrays are locked read-only after
construction so instances can be shared freely across threads.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch

DEFAULT_FEATURE_DIM = 247

# Named index ranges [start, end) partitioning the feature vector.
DEFAULT_FEATURE_BLOCKS = {
    "demographics": (0, 16),
    "vitals": (16, 48),
    "labs": (48, 168),
    "comorbidities": (168, 247),
}

TREATMENT_NAMES = (
    "Surgery",
    "Chemotherapy",
    "Radiotherapy",
    "Immunotherapy",
    "Combination Therapy",
    "Palliative Care",
    "Watchful Waiting",
)

GRADE_LEVELS = ("High", "Moderate", "Low", "VeryLow")

AUDIT_EVENTS = (
    "opinion",
    "matrix_update",
    "feedback",
    "consensus",
    "termination",
    "rl_step",
)


def _lock(arr: np.ndarray) -> np.ndarray:
    out = np.asarray(arr, dtype=float)
    out.flags.writeable = False
    return out


def _segment_means(features: np.ndarray, lo: int, hi: int, n: int) -> np.ndarray:
    edges = np.linspace(lo, hi, n + 1).astype(int)
    return np.array([
        features[edges[j]:max(edges[j + 1], edges[j] + 1)].mean()
        for j in range(n)
    ])


@dataclass
class TreatmentOption:
    """One treatment with its clinical attribute vector.

    efficacy and toxicity live in [0,1], qol_impact in [-1,1], cost > 0.
    """

    index: int
    name: str
    efficacy: float
    toxicity: float
    qol_impact: float
    cost: float

    def check(self) -> None:
        if not 0.0 <= self.efficacy <= 1.0:
            raise ValueError(f"efficacy out of [0,1]: {self.efficacy}")
        if not 0.0 <= self.toxicity <= 1.0:
            raise ValueError(f"toxicity out of [0,1]: {self.toxicity}")
        if not -1.0 <= self.qol_impact <= 1.0:
            raise ValueError(f"qol_impact out of [-1,1]: {self.qol_impact}")
        if not self.cost > 0.0:
            raise ValueError(f"cost must be positive: {self.cost}")

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "name": self.name,
            "efficacy": self.efficacy,
            "toxicity": self.toxicity,
            "qol_impact": self.qol_impact,
            "cost": self.cost,
        }


# Synthetic attribute catalog for the default seven options. Values are
# generator inputs, not clinical claims; override via configuration.
_DEFAULT_ATTRS = (
    (0.85, 0.50, 0.20, 50_000.0),
    (0.70, 0.70, -0.30, 30_000.0),
    (0.65, 0.50, -0.10, 25_000.0),
    (0.72, 0.15, 0.50, 80_000.0),
    (0.80, 0.80, -0.40, 90_000.0),
    (0.20, 0.10, 0.60, 10_000.0),
    (0.10, 0.05, 0.40, 2_000.0),
)


def default_treatments() -> list[TreatmentOption]:
    opts = [
        TreatmentOption(i, name, *attrs)
        for i, (name, attrs) in enumerate(zip(TREATMENT_NAMES, _DEFAULT_ATTRS))
    ]
    for t in opts:
        t.check()
    return opts


@dataclass
class PatientCase:
    """A synthetic patient: scaled feature vector plus block map and metadata."""

    id: str
    features: np.ndarray
    feature_blocks: dict[str, tuple[int, int]]
    hidden_label: int | None = None
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.features = _lock(self.features)
        self._segment_cache: dict[tuple[str, int], np.ndarray] = {}

    def block_mean(self, block: str) -> float:
        lo, hi = self.feature_blocks[block]
        return float(self.features[lo:hi].mean())

    def block_segment_means(self, block: str, n: int) -> np.ndarray:
        """Means of `n` contiguous segments of one block (cached)."""
        key = (block, n)
        got = self._segment_cache.get(key)
        if got is None:
            lo, hi = self.feature_blocks[block]
            got = _segment_means(self.features, lo, hi, n)
            self._segment_cache[key] = got
        return got

    def block_panel_means(self, block: str, panels: int, n: int) -> np.ndarray:
        """(panels x n) segment means: the block split into `panels`
        option-aligned panels, each summarized by `n` segment means."""
        key = (block, panels, n)
        got = self._segment_cache.get(key)
        if got is None:
            lo, hi = self.feature_blocks[block]
            edges = np.linspace(lo, hi, panels + 1).astype(int)
            got = np.vstack([
                _segment_means(self.features, edges[p],
                               max(edges[p + 1], edges[p] + 1), n)
                for p in range(panels)
            ])
            self._segment_cache[key] = got
        return got

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "features": [float(x) for x in self.features],
            "blocks": {k: [int(a), int(b)] for k, (a, b) in self.feature_blocks.items()},
        }
        if self.hidden_label is not None:
            d["hidden_label"] = int(self.hidden_label)
        d["metadata"] = dict(self.metadata)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PatientCase":
        return cls(
            id=d["id"],
            features=np.asarray(d["features"], dtype=float),
            feature_blocks={k: (int(v[0]), int(v[1])) for k, v in d["blocks"].items()},
            hidden_label=d.get("hidden_label"),
            metadata=dict(d.get("metadata", {})),
        )


def load_case(path: str) -> PatientCase:
    with open(path, "r", encoding="utf-8") as fh:
        return PatientCase.from_dict(json.load(fh))


def save_case(case: PatientCase, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(case.to_dict(), fh, indent=2)
        fh.write("\n")


@dataclass
class CaseViolation:
    """One failed case invariant; `code` is machine-readable."""

    code: str  # DimensionMismatch | OutOfRange | BlockOverlap | BlockGap
    message: str
    index: int | None = None


def validate_case(case: PatientCase, feature_dim: int = DEFAULT_FEATURE_DIM):
    """Return the case unchanged when valid, else the full violation list."""
    violations: list[CaseViolation] = []
    n = len(case.features)
    if n != feature_dim:
        violations.append(CaseViolation(
            "DimensionMismatch", f"expected {feature_dim} features, got {n}"))
    for i, x in enumerate(case.features):
        if not np.isfinite(x) or not 0.0 <= x <= 1.0:
            violations.append(CaseViolation(
                "OutOfRange", f"feature[{i}] = {x} outside [0,1]", index=i))

    # Blocks must tile [0, feature_dim) exactly.
    covered = np.zeros(feature_dim, dtype=int)
    for name, (lo, hi) in case.feature_blocks.items():
        if lo < 0 or hi > feature_dim or lo >= hi:
            violations.append(CaseViolation(
                "BlockOverlap", f"block {name} range [{lo},{hi}) invalid"))
            continue
        covered[lo:hi] += 1
    if np.any(covered > 1):
        violations.append(CaseViolation(
            "BlockOverlap",
            f"blocks overlap at indices {np.flatnonzero(covered > 1)[:5].tolist()}"))
    if not violations and np.any(covered == 0):
        violations.append(CaseViolation(
            "BlockGap",
            f"blocks leave indices uncovered, first {int(np.flatnonzero(covered == 0)[0])}"))

    return case if not violations else violations


@dataclass
class EvidenceItem:
    """A single guideline or literature entry with retrieval relevance."""

    id: str
    kind: str  # guideline | rct | observational | expert_opinion
    year: int
    bias: str  # low | high | unknown
    text: str
    relevance: float = 0.0
    title: str = ""
    source: str = ""

    def citation(self) -> str:
        src = self.source or self.title or self.kind
        return f"{src}, {self.year}, {self.id}"

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "year": self.year,
            "bias": self.bias,
            "title": self.title,
            "source": self.source,
            "relevance": self.relevance,
            "citation": self.citation(),
        }


@dataclass
class EvidenceChain:
    """Relevance-filtered items plus extracted clinical data and a grade."""

    guidelines: tuple[EvidenceItem, ...] = ()
    literature: tuple[EvidenceItem, ...] = ()
    clinical_data: dict[str, str] = field(default_factory=dict)
    grade: str = "VeryLow"
    grade_score: float = 0.0

    def citations(self) -> list[str]:
        return [it.citation() for it in (*self.guidelines, *self.literature)]

    def to_dict(self) -> dict:
        return {
            "guidelines": [it.to_dict() for it in self.guidelines],
            "literature": [it.to_dict() for it in self.literature],
            "clinical_data": dict(self.clinical_data),
            "grade": self.grade,
            "grade_score": self.grade_score,
        }


def empty_chain() -> EvidenceChain:
    return EvidenceChain()


@dataclass
class Opinion:
    """One agent's structured output for a single round."""

    agent_id: str
    raw_preferences: np.ndarray  # length K, values in [-1, 1]
    reasoning: str
    confidence: float
    concerns: tuple[str, ...]
    evidence: EvidenceChain
    round: int

    def __post_init__(self):
        self.raw_preferences = _lock(self.raw_preferences)

    def top_treatment(self) -> int:
        return int(np.argmax(self.raw_preferences))

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "raw_preferences": [float(x) for x in self.raw_preferences],
            "reasoning": self.reasoning,
            "confidence": float(self.confidence),
            "concerns": list(self.concerns),
            "evidence": self.evidence.to_dict(),
            "round": self.round,
        }


def opinion_violations(op: Opinion, n_treatments: int) -> list[str]:
    """All Opinion invariant breaches, empty when the opinion is valid."""
    bad: list[str] = []
    prefs = np.asarray(op.raw_preferences, dtype=float)
    if prefs.shape != (n_treatments,):
        bad.append(f"preferences length {prefs.shape} != ({n_treatments},)")
    else:
        if not np.all(np.isfinite(prefs)):
            bad.append("preferences contain non-finite values")
        elif np.any(prefs < -1.0) or np.any(prefs > 1.0):
            bad.append("preference outside [-1,1]")
    if not (np.isfinite(op.confidence) and 0.0 <= op.confidence <= 1.0):
        bad.append(f"confidence {op.confidence} outside [0,1]")
    if len(set(op.concerns)) != len(op.concerns):
        bad.append("duplicate concern codes")
    if len(op.reasoning.split()) > 512:
        bad.append("reasoning exceeds 512 whitespace tokens")
    if op.round < 1:
        bad.append(f"round {op.round} < 1")
    return bad


@dataclass
class ConsensusMatrix:
    """Normalized, confidence-weighted preference matrix for one round."""

    entries: np.ndarray  # N x K, all entries >= 0
    round: int
    kendall_w: float
    per_agent_confidence: np.ndarray

    def __post_init__(self):
        self.entries = _lock(self.entries)
        self.per_agent_confidence = _lock(self.per_agent_confidence)

    @property
    def n_agents(self) -> int:
        return self.entries.shape[0]

    @property
    def n_treatments(self) -> int:
        return self.entries.shape[1]

    def to_dict(self) -> dict:
        return {
            "entries": [[float(x) for x in row] for row in self.entries],
            "round": self.round,
            "kendall_w": float(self.kendall_w),
            "per_agent_confidence": [float(x) for x in self.per_agent_confidence],
        }


def state_layout(d: int, n: int, k: int) -> dict[str, slice]:
    """Index layout of the flattened decision state vector."""
    return {
        "features": slice(0, d),
        "matrix": slice(d, d + n * k),
        "round": slice(d + n * k, d + n * k + 1),
        "confidences": slice(d + n * k + 1, d + n * k + 1 + n),
        "w": slice(d + n * k + 1 + n, d + n * k + 1 + n + 1),
    }


def flatten_state(
    case: PatientCase,
    matrix: ConsensusMatrix,
    round_index: int,
    confidences: np.ndarray,
    w: float,
) -> np.ndarray:
    """Concatenate [features | row-major matrix | round | confidences | w].

    Output length is d + N*K + 1 + N + 1; every size derives from the
    inputs, nothing is hard-coded.
    """
    entries = np.asarray(matrix.entries, dtype=float)
    if entries.ndim != 2:
        raise ShapeMismatch(f"matrix must be 2-D, got ndim={entries.ndim}")
    n = entries.shape[0]
    conf = np.asarray(confidences, dtype=float)
    if conf.shape != (n,):
        raise ShapeMismatch(f"confidences shape {conf.shape} != ({n},)")
    return np.concatenate([
        np.asarray(case.features, dtype=float),
        entries.reshape(-1),
        [float(round_index)],
        conf,
        [float(w)],
    ])


class FixedClock:
    """Deterministic clock: starts at `start_ms`, advances `step_ms` per call."""

    def __init__(self, start_ms: int = 1_700_000_000_000, step_ms: int = 1):
        self._t = start_ms
        self._step = step_ms

    def now_ms(self) -> int:
        t = self._t
        self._t += self._step
        return t


class SystemClock:
    def now_ms(self) -> int:
        return int(time.time() * 1000)


@dataclass
class AuditRecord:
    ts_ms: int
    case_id: str
    round: int
    agent_id: str
    event: str
    payload: dict

    def to_json_line(self) -> str:
        # Fixed key order keeps the log byte-stable under fixed clock/seed.
        doc = {
            "ts_ms": self.ts_ms,
            "case_id": self.case_id,
            "round": self.round,
            "agent_id": self.agent_id,
            "event": self.event,
            "payload": self.payload,
        }
        return json.dumps(doc, separators=(",", ":"))


class AuditLog:
    """Collects AuditRecords for one consultation; timestamps via the clock."""

    def __init__(self, case_id: str, clock=None):
        self.case_id = case_id
        self.clock = clock if clock is not None else FixedClock()
        self.records: list[AuditRecord] = []

    def emit(self, event: str, round_index: int, agent_id: str, payload: dict) -> None:
        if event not in AUDIT_EVENTS:
            raise ValueError(f"unknown audit event {event!r}")
        self.records.append(AuditRecord(
            ts_ms=self.clock.now_ms(),
            case_id=self.case_id,
            round=round_index,
            agent_id=agent_id,
            event=event,
            payload=payload,
        ))

    def to_jsonl(self) -> str:
        return "".join(r.to_json_line() + "\n" for r in self.records)

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_jsonl())


__all__ = [
    "DEFAULT_FEATURE_DIM", "DEFAULT_FEATURE_BLOCKS", "TREATMENT_NAMES",
    "GRADE_LEVELS", "AUDIT_EVENTS",
    "TreatmentOption", "default_treatments", "PatientCase",
    "load_case", "save_case", "CaseViolation", "validate_case",
    "EvidenceItem", "EvidenceChain", "empty_chain",
    "Opinion", "opinion_violations", "ConsensusMatrix",
    "state_layout", "flatten_state",
    "FixedClock", "SystemClock", "AuditRecord", "AuditLog",
]
