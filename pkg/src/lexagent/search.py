"""The two search tools.

Database search filters the case store by every present dimension of the
extracted query vector (exact matches for id/jurisdiction/violation/sector,
company-subset matching, title cosine similarity above 0.85) and caps the
result at the top five by question-to-title similarity. The web fallback
asks a deep-research provider for candidate titles, keeps only titles
verifiable on an official authority domain, and post-filters survivors
against the original query vector.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .domain import (
    CaseRecord,
    CaseStore,
    QueryVector,
    Vocabulary,
    normalize_company,
)
from .index_store import TITLE_PROFILE, cosine_similarity
from .providers import ChatProvider, DeepResearchProvider, EmbeddingProvider, WebSearchProvider

logger = logging.getLogger(__name__)

TITLE_MATCH_THRESHOLD = 0.85
MAX_RESULTS = 5
WEB_VERIFY_DEPTH = 5


class SearchError(Exception):
    pass


class EmptyQueryVector(SearchError):
    pass


class ExtractionUnparseable(SearchError):
    pass


@dataclass
class SearchResult:
    cases: list[CaseRecord]
    origin: str  # "database" or "web"
    dropped_unverified: int = 0

    def __post_init__(self):
        if len(self.cases) > MAX_RESULTS:
            raise ValueError(f"result set exceeds the {MAX_RESULTS}-case cap")


def load_official_domains(path: Optional[Path] = None) -> dict[str, str]:
    """Jurisdiction -> official authority host, one mapping per line."""
    if path is None:
        from .domain import _asset_path

        path = _asset_path("official_domains.txt")
    mapping = {}
    for line in Path(path).read_text("utf-8").splitlines():
        if line.strip():
            jurisdiction, host = line.split("\t")
            mapping[jurisdiction.strip()] = host.strip()
    return mapping


def extract_query_vector(
    question: str,
    chat_history: Sequence[dict],
    chat: ChatProvider,
    vocab: Vocabulary,
    prompt_template: Optional[str] = None,
) -> QueryVector:
    """Prompt the chat provider to extract the six filter dimensions.

    Schema-constrained dimensions holding an out-of-vocabulary value are
    dropped (and logged), never fatal; output with no recoverable JSON
    structure raises ExtractionUnparseable.
    """
    if not question.strip():
        raise ValueError("question must be non-empty")
    if prompt_template is None:
        from .domain import _asset_path

        prompt_template = _asset_path("query_vector_prompt.txt").read_text("utf-8")
    history_text = "\n".join(f"{m['role']}: {m['content']}" for m in chat_history) or "(none)"
    prompt = prompt_template.format(
        violations="; ".join(sorted(vocab.violations.canonical_values)),
        sectors="; ".join(sorted(vocab.sectors)),
        history=history_text,
        question=question,
    )
    response = chat.complete([{"role": "user", "content": prompt}], temperature=0.0)
    match = re.search(r"\{.*\}", response, re.DOTALL)
    if not match:
        raise ExtractionUnparseable(f"no JSON object in extraction output: {response[:200]!r}")
    try:
        raw = json.loads(match.group(0))
    except json.JSONDecodeError as exc:
        raise ExtractionUnparseable(str(exc)) from exc
    if not isinstance(raw, dict):
        raise ExtractionUnparseable("extraction output is not a JSON object")
    vector, dropped = vocab.validate_query_vector(raw)
    for dim in dropped:
        logger.warning("dropped out-of-vocabulary %s=%r from query vector", dim, raw.get(dim))
    return vector


# --- database search -------------------------------------------------------


def case_matches(
    qv: QueryVector,
    case: CaseRecord,
    embed: EmbeddingProvider,
    _title_cache: Optional[dict] = None,
) -> bool:
    """True iff the case satisfies every present dimension of the vector."""
    if qv.case_id is not None and case.case_id != qv.case_id:
        return False
    if qv.jurisdiction is not None and case.jurisdiction != qv.jurisdiction:
        return False
    if qv.violation is not None and case.violation != qv.violation:
        return False
    if qv.sector is not None and case.sector != qv.sector:
        return False
    if qv.companies is not None:
        case_companies = {normalize_company(c) for c in case.companies}
        if not {normalize_company(c) for c in qv.companies} <= case_companies:
            return False
    if qv.case_title is not None:
        sim = _title_similarity(qv.case_title, case.case_title, embed, _title_cache)
        if not sim > TITLE_MATCH_THRESHOLD:
            return False
    return True


def _embed_title(text: str, embed: EmbeddingProvider, cache: Optional[dict]):
    from .domain import Embedding

    if cache is not None and text in cache:
        return cache[text]
    [vector] = embed.embed([text], TITLE_PROFILE)
    embedding = Embedding(values=tuple(vector), profile=TITLE_PROFILE)
    if cache is not None:
        cache[text] = embedding
    return embedding


def _title_similarity(a: str, b: str, embed: EmbeddingProvider, cache: Optional[dict]) -> float:
    return cosine_similarity(_embed_title(a, embed, cache), _embed_title(b, embed, cache))


def database_search(
    qv: QueryVector,
    store: CaseStore,
    embed: EmbeddingProvider,
    question_text: Optional[str] = None,
) -> SearchResult:
    """Filter the case store by the query vector; cap at the top five.

    When more than five cases satisfy the filter, candidates are ranked by
    cosine similarity between the embedded question text and each case's
    title embedding; ties break by descending decision date, then case_id.
    """
    if qv.is_empty():
        raise EmptyQueryVector("query vector has no dimensions")
    title_cache: dict = {}
    candidates = [case for case in store if case_matches(qv, case, embed, title_cache)]
    if len(candidates) > MAX_RESULTS:
        query_text = question_text or qv.case_title or " ".join(
            str(getattr(qv, d)) for d in qv.present_dimensions()
        )
        query_embedding = _embed_title(query_text, embed, title_cache)
        import datetime as _dt

        def sort_key(case: CaseRecord):
            sim = cosine_similarity(
                query_embedding, _embed_title(case.case_title, embed, title_cache)
            )
            date = case.decision_date or _dt.date.min
            return (-sim, _dt.date.max.toordinal() - date.toordinal(), case.case_id)

        candidates = sorted(candidates, key=sort_key)[:MAX_RESULTS]
    return SearchResult(cases=candidates, origin="database")


# --- web fallback ----------------------------------------------------------


@dataclass
class WebSearchConfig:
    official_domains: dict[str, str] = field(default_factory=load_official_domains)
    max_candidates: int = MAX_RESULTS
    verify_depth: int = WEB_VERIFY_DEPTH


def _host(url: str) -> str:
    return re.sub(r"^[a-z]+://", "", url).split("/")[0].lower()


def web_search_fallback(
    question: str,
    qv: QueryVector,
    research: DeepResearchProvider,
    web: WebSearchProvider,
    chat: ChatProvider,
    vocab: Vocabulary,
    config: Optional[WebSearchConfig] = None,
) -> SearchResult:
    """Four-stage verified web search, invoked only after a database miss.

    1. The research provider proposes up to five candidate case titles.
    2. Each title is searched restricted to the official domain for the
       query's jurisdiction (both authorities when jurisdiction is absent);
       titles with no official result are dropped as hallucinated.
    3. Each survivor's official-result description is converted into a
       candidate query vector.
    4. A survivor is removed when any dimension present in both the user's
       vector and the candidate's vector disagrees.
    """
    config = config or WebSearchConfig()
    result = research.research(question)
    titles = list(result.get("candidate_cases") or [])[: config.max_candidates]
    if not titles:
        return SearchResult(cases=[], origin="web")

    if qv.jurisdiction is not None:
        domains = [(qv.jurisdiction, config.official_domains[qv.jurisdiction])]
    else:
        domains = sorted(config.official_domains.items())

    verified: list[tuple[str, str, str, str]] = []  # (title, url, description, jurisdiction)
    dropped_unverified = 0
    for title in titles:
        hit = None
        for jurisdiction, domain in domains:
            results = web.search(title, site_filter=domain)
            for r in results[: config.verify_depth]:
                if _host(r.get("url", "")).endswith(domain.lower()):
                    hit = (title, r["url"], r.get("description", ""), jurisdiction)
                    break
            if hit:
                break
        if hit:
            verified.append(hit)
        else:
            dropped_unverified += 1

    survivors: list[CaseRecord] = []
    for title, url, description, jurisdiction in verified:
        try:
            candidate_qv = extract_query_vector(description or title, [], chat, vocab)
        except ExtractionUnparseable:
            candidate_qv = QueryVector()
        if _vectors_conflict(qv, candidate_qv):
            continue
        survivors.append(_partial_record(title, url, jurisdiction, candidate_qv))
    return SearchResult(
        cases=survivors[: config.max_candidates],
        origin="web",
        dropped_unverified=dropped_unverified,
    )


def _vectors_conflict(a: QueryVector, b: QueryVector) -> bool:
    """True when any dimension present in both vectors disagrees."""
    for dim in QueryVector.DIMENSIONS:
        if dim == "case_title":
            continue  # titles are matched by stage-2 verification, not equality
        va, vb = getattr(a, dim), getattr(b, dim)
        if va is None or vb is None:
            continue
        if dim == "companies":
            if {normalize_company(c) for c in va} != {normalize_company(c) for c in vb} and not (
                {normalize_company(c) for c in va} <= {normalize_company(c) for c in vb}
            ):
                return True
        elif va != vb:
            return True
    return False


def _partial_record(
    title: str, url: str, jurisdiction: str, extracted: QueryVector
) -> CaseRecord:
    """Web-origin partial record: known fields filled, the rest left absent."""
    return CaseRecord(
        case_id=extracted.case_id or f"web:{title}",
        case_title=title,
        jurisdiction=extracted.jurisdiction or jurisdiction,
        violation=extracted.violation or "",
        sector=extracted.sector or "",
        companies=tuple(extracted.companies or ()),
        pdf_url=url,
        language="",
        decision_date=None,
    )
