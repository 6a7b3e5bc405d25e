"""Shared fixtures: vocabulary, deterministic case fixtures, and the
brute-force search oracle kept independent of the production filter path."""

from __future__ import annotations

import datetime as dt
import math
import random

import pytest

from lexagent.domain import CaseRecord, CaseStore, QueryVector, default_vocabulary
from lexagent.index_store import TITLE_PROFILE
from lexagent.providers import HashEmbeddingProvider

SECTORS = [
    "C – Manufacturing",
    "G – Wholesale and retail trade; repair of motor vehicles and motorcycles",
    "J – Information and communication",
    "K – Financial and insurance activities",
    "H – Transportation and storage",
]
VIOLATIONS = ["Article 101 TFEU", "Article 102 TFEU", "EU Merger Regulation", "Section 1 GWB"]
COMPANY_POOL = [
    "Acme GmbH",
    "Beta SA",
    "Gamma AG",
    "Delta Corp",
    "Epsilon BV",
    "Zeta SpA",
    "Omega Ltd",
]


@pytest.fixture(scope="session")
def vocab():
    return default_vocabulary()


def make_case(case_id: str, **overrides) -> CaseRecord:
    base = dict(
        case_id=case_id,
        case_title=f"Case about {case_id}",
        jurisdiction="EU",
        violation="Article 101 TFEU",
        sector="K – Financial and insurance activities",
        companies=("Acme GmbH", "Beta SA"),
        pdf_url=f"https://example.org/decisions/{case_id}.pdf",
        language="English",
        decision_date=dt.date(2020, 1, 1),
    )
    base.update(overrides)
    if isinstance(base["companies"], list):
        base["companies"] = tuple(base["companies"])
    return CaseRecord(**base)


def build_fixture_store(n: int = 50, seed: int = 7) -> CaseStore:
    rng = random.Random(seed)
    records = []
    for i in range(n):
        jurisdiction = rng.choice(["EU", "Germany"])
        prefix = "AT" if jurisdiction == "EU" else "B9"
        case_id = f"{prefix}.{10000 + i}" if jurisdiction == "EU" else f"B9-{100 + i}-20"
        companies = tuple(rng.sample(COMPANY_POOL, rng.randint(1, 3)))
        records.append(
            make_case(
                case_id,
                case_title=f"Proceedings {i} concerning {companies[0]}",
                jurisdiction=jurisdiction,
                violation=rng.choice(VIOLATIONS),
                sector=rng.choice(SECTORS),
                companies=companies,
                decision_date=dt.date(2000 + i % 25, 1 + i % 12, 1 + i % 28),
            )
        )
    return CaseStore(records)


def random_query_vector(rng: random.Random, store: CaseStore) -> QueryVector:
    cases = list(store)
    fields = {}
    if rng.random() < 0.3:
        fields["case_id"] = rng.choice(cases).case_id
    if rng.random() < 0.4:
        fields["jurisdiction"] = rng.choice(["EU", "Germany"])
    if rng.random() < 0.4:
        fields["violation"] = rng.choice(VIOLATIONS)
    if rng.random() < 0.4:
        fields["sector"] = rng.choice(SECTORS)
    if rng.random() < 0.3:
        fields["companies"] = tuple(rng.sample(COMPANY_POOL, rng.randint(1, 2)))
    if rng.random() < 0.3:
        fields["case_title"] = rng.choice(cases).case_title if rng.random() < 0.5 else "unrelated topic"
    if not fields:
        fields["jurisdiction"] = "EU"
    return QueryVector(**fields)


# --- brute-force oracle (pure python, independent of lexagent.search) -------


def _oracle_cosine(a, b) -> float:
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    return dot / (na * nb)


def oracle_database_search(
    qv: QueryVector,
    store: CaseStore,
    embed: HashEmbeddingProvider,
    question_text=None,
    threshold: float = 0.85,
    cap: int = 5,
) -> list[str]:
    """Exhaustive per-case evaluation of the five matching rules, then the
    cap ranking; returns case_ids in result order."""

    def title_vec(text):
        return embed.embed([text], TITLE_PROFILE)[0]

    matches = []
    for case in store:
        ok = True
        if qv.case_id is not None and case.case_id != qv.case_id:
            ok = False
        if ok and qv.jurisdiction is not None and case.jurisdiction != qv.jurisdiction:
            ok = False
        if ok and qv.violation is not None and case.violation != qv.violation:
            ok = False
        if ok and qv.sector is not None and case.sector != qv.sector:
            ok = False
        if ok and qv.companies is not None:
            case_set = {c.strip().casefold() for c in case.companies}
            query_set = {c.strip().casefold() for c in qv.companies}
            if not query_set.issubset(case_set):
                ok = False
        if ok and qv.case_title is not None:
            sim = _oracle_cosine(title_vec(qv.case_title), title_vec(case.case_title))
            if not sim > threshold:
                ok = False
        if ok:
            matches.append(case)
    if len(matches) > cap:
        query_text = question_text or qv.case_title or " ".join(
            str(getattr(qv, d)) for d in qv.present_dimensions()
        )
        qvec = title_vec(query_text)
        earliest = dt.date.min

        def key(case):
            sim = _oracle_cosine(qvec, title_vec(case.case_title))
            date = case.decision_date or earliest
            return (-sim, dt.date.max.toordinal() - date.toordinal(), case.case_id)

        matches = sorted(matches, key=key)[:cap]
    return [c.case_id for c in matches]


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines after capture is released."""
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
