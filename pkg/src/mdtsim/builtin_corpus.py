"""Packaged synthetic document corpus.

Stands in for live guideline and literature databases at desk scale: one
guideline plus a couple of study entries per (role keyword set,
treatment) pairing, with deliberately mixed years and bias labels so the
recency filter, the relevance threshold, and the grading table all have
material to act on. Texts are keyword bags, not prose; titles and
sources are obviously synthetic.
"""

from __future__ import annotations

from .domain import TREATMENT_NAMES, EvidenceItem
from .evidence import ROLE_KEYWORDS, CorpusStore

# (kind, year, bias, source tag) rotation applied across role/treatment cells.
_VARIANTS = (
    ("guideline", 2024, "low", "Consensus Practice Guideline"),
    ("guideline", 2019, "unknown", "Archived Practice Guideline"),
    ("rct", 2022, "low", "Randomized Trial Registry"),
    ("rct", 2020, "high", "Randomized Trial Registry"),
    ("observational", 2021, "low", "Cohort Study Registry"),
    ("observational", 2016, "high", "Cohort Study Registry"),
    ("expert_opinion", 2023, "unknown", "Panel Commentary Series"),
)


def build_items() -> list[EvidenceItem]:
    items: list[EvidenceItem] = []
    counter = 0
    roles = sorted(ROLE_KEYWORDS)
    for r_idx, role in enumerate(roles):
        keywords = ROLE_KEYWORDS[role]
        for t_idx, name in enumerate(TREATMENT_NAMES):
            # Two variants per cell keeps the corpus small but varied.
            for v_off in range(2):
                kind, year, bias, source = _VARIANTS[
                    (r_idx + t_idx + v_off) % len(_VARIANTS)]
                tokens = list(keywords[: 3 + (t_idx % 2)])
                tokens += name.lower().split()
                if v_off:
                    tokens.append("comorbidities" if t_idx % 2 else "labs")
                counter += 1
                items.append(EvidenceItem(
                    id=f"doc-{counter:04d}",
                    kind=kind,
                    year=year,
                    bias=bias,
                    text=" ".join(tokens),
                    title=f"{name} and {role.replace('_', ' ')} practice, entry {counter}",
                    source=source,
                ))
    # A handful of off-topic distractors that should never pass the bar.
    for j, topic in enumerate((
            "orthopedic hardware inventory audit",
            "hospital parking allocation policy",
            "cafeteria menu rotation schedule")):
        counter += 1
        items.append(EvidenceItem(
            id=f"doc-{counter:04d}", kind="expert_opinion", year=2015 + j,
            bias="unknown", text=topic, title=topic.title(),
            source="Administrative Notes"))
    return items


def builtin_store(now_year: int = 2024) -> CorpusStore:
    return CorpusStore(build_items(), now_year=now_year)
