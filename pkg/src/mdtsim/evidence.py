"""Desk-scale evidence pipeline: query construction, tf-idf retrieval,
relevance filtering, and evidence-quality grading.

The similarity backend is tf-idf cosine over whitespace-ish tokens; the
scoring walks terms in sorted order so results are bit-for-bit
reproducible and can be checked against an exhaustive reference
computation.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, replace

from .config import EvidenceSettings
from .domain import EvidenceChain, EvidenceItem, PatientCase, TreatmentOption

_TOKEN_RE = re.compile(r"[a-z0-9]+")

GRADE_SCORES = {"High": 1.0, "Moderate": 0.66, "Low": 0.33, "VeryLow": 0.1}

ROLE_KEYWORDS = {
    "oncologist": ("oncology", "tumor", "staging", "systemic", "survival"),
    "radiologist": ("imaging", "radiology", "response", "anatomy"),
    "nurse": ("nursing", "tolerance", "side", "effects"),
    "psychologist": ("mental", "coping", "anxiety", "distress"),
    "patient_advocate": ("values", "consent", "access", "preferences"),
    "nutritionist": ("nutrition", "diet", "metabolic", "intake"),
    "rehab_therapist": ("rehabilitation", "function", "mobility", "independence"),
}


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def item_grade(item: EvidenceItem) -> str:
    """Quality level of a single item from its study type and bias."""
    if item.kind == "guideline":
        return "High" if item.bias == "low" else "Moderate"
    if item.kind == "rct":
        return "High" if item.bias == "low" else "Moderate"
    if item.kind == "observational":
        return "Moderate" if item.bias == "low" else "Low"
    if item.kind == "expert_opinion":
        return "VeryLow"
    raise ValueError(f"unknown evidence kind {item.kind!r}")


def assess_grade(items: list[EvidenceItem]) -> tuple[str, float]:
    """Chain grade = best item level; empty chains score 0.0."""
    if not items:
        return "VeryLow", 0.0
    order = ("High", "Moderate", "Low", "VeryLow")
    best = min(items, key=lambda it: order.index(item_grade(it)))
    grade = item_grade(best)
    return grade, GRADE_SCORES[grade]


class CorpusStore:
    """Immutable tokenized corpus with a smoothed idf table.

    idf(t) = ln((1 + n_docs) / (1 + df(t))) + 1; terms never seen in the
    corpus still get the df = 0 value so query norms stay well-defined.
    """

    def __init__(self, items: list[EvidenceItem], now_year: int = 2024):
        ids = [it.id for it in items]
        if len(set(ids)) != len(ids):
            raise ValueError("corpus item ids must be unique")
        self.items = list(items)
        self.now_year = now_year
        self._n = len(items)
        df: Counter = Counter()
        self._item_tf: list[Counter] = []
        for it in items:
            tf = Counter(tokenize(it.text))
            self._item_tf.append(tf)
            df.update(tf.keys())
        self.idf_table = {
            t: math.log((1 + self._n) / (1 + d)) + 1.0 for t, d in df.items()
        }
        self._item_weights: list[dict[str, float]] = []
        self._item_norms: list[float] = []
        for tf in self._item_tf:
            w = {t: c * self.idf_table[t] for t, c in tf.items()}
            self._item_weights.append(w)
            self._item_norms.append(
                math.sqrt(sum(w[t] * w[t] for t in sorted(w))))

    def idf(self, term: str) -> float:
        got = self.idf_table.get(term)
        if got is None:
            return math.log(float(1 + self._n)) + 1.0
        return got

    @classmethod
    def from_jsonl(cls, path: str, now_year: int = 2024) -> "CorpusStore":
        items = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                d = json.loads(line)
                items.append(EvidenceItem(
                    id=d["id"], kind=d["kind"], year=int(d["year"]),
                    bias=d["bias"], text=d["text"],
                    title=d.get("title", ""), source=d.get("source", ""),
                ))
        return cls(items, now_year=now_year)


def construct_query(case: PatientCase, role: str, treatment: TreatmentOption,
                    activation_threshold: float = 0.5) -> Counter:
    """Deterministic term bag: role keywords, treatment name tokens, and
    the names of feature blocks whose mean activation exceeds the
    threshold."""
    bag: Counter = Counter()
    for kw in ROLE_KEYWORDS.get(role, ()):
        bag[kw] = 1
    for tok in tokenize(treatment.name):
        bag[tok] = 1
    for block in case.feature_blocks:
        if case.block_mean(block) > activation_threshold:
            bag[block] = 1
    return bag


def relevance(store: CorpusStore, item_index: int, query: Counter,
              recency_bonus: float = 0.05, recency_window: int = 2) -> float:
    """tf-idf cosine plus a recency bonus for fresh guidelines, in [0,1]."""
    item = store.items[item_index]
    weights = store._item_weights[item_index]
    item_norm = store._item_norms[item_index]
    dot = 0.0
    qsq = 0.0
    for term in sorted(query):
        qw = query[term] * store.idf(term)
        qsq += qw * qw
        iw = weights.get(term)
        if iw is not None:
            dot += qw * iw
    qnorm = math.sqrt(qsq)
    cos = dot / (qnorm * item_norm) if qnorm > 0 and item_norm > 0 else 0.0
    bonus = 0.0
    if item.kind == "guideline" and item.year >= store.now_year - recency_window:
        bonus = recency_bonus
    return min(max(cos + bonus, 0.0), 1.0)


def retrieve(store: CorpusStore, query: Counter,
             top_k_guidelines: int = 3, top_k_literature: int = 5,
             min_year: int = 2018, relevance_threshold: float = 0.7,
             recency_bonus: float = 0.05, recency_window: int = 2,
             ) -> tuple[list[EvidenceItem], list[EvidenceItem]]:
    """Rank, truncate to top-k, then drop items under the relevance bar.

    Guidelines and literature rank separately; literature older than
    min_year is ineligible. Ties break by ascending item id. The top-k
    cut happens before the threshold filter, matching the retrieval
    protocol's line order.
    """
    scored_g = []
    scored_l = []
    for i, item in enumerate(store.items):
        rel = relevance(store, i, query, recency_bonus, recency_window)
        if item.kind == "guideline":
            scored_g.append((rel, item))
        elif item.year >= min_year:
            scored_l.append((rel, item))
    key = lambda pair: (-pair[0], pair[1].id)
    scored_g.sort(key=key)
    scored_l.sort(key=key)
    guidelines = [replace(it, relevance=rel)
                  for rel, it in scored_g[:top_k_guidelines]
                  if rel >= relevance_threshold]
    literature = [replace(it, relevance=rel)
                  for rel, it in scored_l[:top_k_literature]
                  if rel >= relevance_threshold]
    return guidelines, literature


def extract_clinical_data(case: PatientCase, role: str) -> dict[str, str]:
    """Role-relevant snapshot of the case: per-block mean activations."""
    return {
        f"{block}_mean": f"{case.block_mean(block):.4f}"
        for block in case.feature_blocks
    }


@dataclass
class EvidenceService:
    """Bundles a corpus with retrieval settings; build_chain runs the
    whole pipeline for one (case, role, treatment) request."""

    store: CorpusStore
    settings: EvidenceSettings

    def build_chain(self, case: PatientCase, role: str,
                    treatment: TreatmentOption) -> EvidenceChain:
        query = construct_query(case, role, treatment,
                                self.settings.activation_threshold)
        guidelines, literature = retrieve(
            self.store, query,
            top_k_guidelines=self.settings.top_k_guidelines,
            top_k_literature=self.settings.top_k_literature,
            min_year=self.settings.min_year,
            relevance_threshold=self.settings.relevance_threshold,
            recency_bonus=self.settings.recency_bonus,
            recency_window=self.settings.recency_window_years,
        )
        grade, score = assess_grade([*guidelines, *literature])
        return EvidenceChain(
            guidelines=tuple(guidelines),
            literature=tuple(literature),
            clinical_data=extract_clinical_data(case, role),
            grade=grade,
            grade_score=score,
        )


def build_chain(case: PatientCase, role: str, treatment: TreatmentOption,
                store: CorpusStore,
                settings: EvidenceSettings | None = None) -> EvidenceChain:
    return EvidenceService(store, settings or EvidenceSettings()).build_chain(
        case, role, treatment)
