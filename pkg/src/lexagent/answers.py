"""Grounded answer generation.

Case answers run the RAG pipeline over one case's chunks and carry inline
[n] citation markers resolving to (source link, page) pairs of the retrieved
chunks. Theoretical answers come from domain-restricted deep research and
append follow-up questions. Clarification questions close the loop with the
user when a turn is ambiguous.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .domain import Embedding
from .index_store import (
    CHUNK_COLLECTION,
    CHUNK_PROFILE,
    DocumentChunk,
    VectorStore,
    query_chunks,
)
from .providers import ChatProvider, DeepResearchProvider, EmbeddingProvider

TOP_K_CHUNKS = 8
MAX_FOLLOWUPS = 3

_MARKER_RE = re.compile(r"\[(\d+)\]")


class AnswerError(Exception):
    pass


class CaseNotIndexed(AnswerError):
    def __init__(self, case_id: str):
        super().__init__(f"case {case_id!r} has no indexed chunks")
        self.case_id = case_id


class UngroundedAnswer(AnswerError):
    pass


@dataclass(frozen=True)
class Citation:
    marker: int
    source_url: str
    page: Optional[int] = None


@dataclass
class CitedAnswer:
    text: str
    citations: list[Citation] = field(default_factory=list)
    followups: list[str] = field(default_factory=list)
    violations: int = 0  # out-of-range markers stripped from the text

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "citations": [
                {"marker": c.marker, "source_url": c.source_url, "page": c.page}
                for c in self.citations
            ],
            "followups": list(self.followups),
        }


def resolve_citations(
    answer_text: str, retrieved_chunks: Sequence[DocumentChunk]
) -> CitedAnswer:
    """Map [n] markers onto the retrieved chunks (1-based prompt order).

    Markers pointing outside the chunk list are stripped from the text and
    counted as violations rather than raised.
    """
    violations = 0
    seen: dict[int, Citation] = {}

    def replace(match: re.Match) -> str:
        nonlocal violations
        n = int(match.group(1))
        if 1 <= n <= len(retrieved_chunks):
            chunk = retrieved_chunks[n - 1]
            seen.setdefault(n, Citation(marker=n, source_url=chunk.source_url, page=chunk.page))
            return match.group(0)
        violations += 1
        return ""

    text = _MARKER_RE.sub(replace, answer_text)
    text = re.sub(r" {2,}", " ", text).strip()
    citations = [seen[n] for n in sorted(seen)]
    return CitedAnswer(text=text, citations=citations, violations=violations)


def _render_history(chat_history: Sequence[dict]) -> str:
    return "\n".join(f"{m['role']}: {m['content']}" for m in chat_history) or "(none)"


def build_qa_prompt(
    question: str,
    chunks: Sequence[DocumentChunk],
    chat_history: Sequence[dict],
    template: Optional[str] = None,
) -> str:
    if template is None:
        from .domain import _asset_path

        template = _asset_path("qa_prompt.txt").read_text("utf-8")
    context = "\n\n".join(
        f"[{i}] (page {c.page}, {c.source_url})\n{c.text}"
        for i, c in enumerate(chunks, start=1)
    )
    return template.format(
        context=context, history=_render_history(chat_history), question=question
    )


def answer_case(
    question: str,
    case_id: str,
    session,
    store: VectorStore,
    embed: EmbeddingProvider,
    chat: ChatProvider,
    top_k: int = TOP_K_CHUNKS,
) -> CitedAnswer:
    """Answer a question about one case from its own chunks only.

    Loads the case's chunks as the session's active case, ranks them by
    similarity to the embedded question, prompts over the top `top_k`, and
    resolves the inline markers against exactly that retrieved set.
    """
    if store.count(CHUNK_COLLECTION, {"case_id": case_id}) == 0:
        raise CaseNotIndexed(case_id)
    [vector] = embed.embed([question], CHUNK_PROFILE)
    question_embedding = Embedding(values=tuple(vector), profile=CHUNK_PROFILE)
    chunks = query_chunks(store, question_embedding, case_id, top_k)
    if session is not None:
        session.active_case = {"case_id": case_id, "chunks": chunks}
    history = session.chat_history if session is not None else []
    prompt = build_qa_prompt(question, chunks, history)
    raw_answer = chat.complete([{"role": "user", "content": prompt}])
    return resolve_citations(raw_answer, chunks)


def answer_theoretical(
    question: str,
    chat_history: Sequence[dict],
    research: DeepResearchProvider,
    allowed_domains: Sequence[str],
    template: Optional[str] = None,
) -> CitedAnswer:
    """Answer a general competition-law question via domain-restricted research.

    Every cited source must live on an allowed domain; a response citing
    none is rejected as ungrounded. Up to three follow-up questions are
    appended for further research.
    """
    if not allowed_domains:
        raise ValueError("allowed_domains must be non-empty")
    if template is None:
        from .domain import _asset_path

        template = _asset_path("theoretical_prompt.txt").read_text("utf-8")
    prompt = template.format(history=_render_history(chat_history), question=question)
    result = research.research(prompt, allowed_domains=list(allowed_domains))
    allowed = [d.lower() for d in allowed_domains]
    sources = [
        url
        for url in result.get("source_urls", [])
        if any(_host(url).endswith(domain) for domain in allowed)
    ]
    if not sources:
        raise UngroundedAnswer(
            f"no sources on allowed domains in {result.get('source_urls', [])!r}"
        )
    citations = [
        Citation(marker=i, source_url=url, page=None) for i, url in enumerate(sources, start=1)
    ]
    followups = list(result.get("followups") or _default_followups(question, chat_history))
    return CitedAnswer(
        text=result["answer_text"], citations=citations, followups=followups[:MAX_FOLLOWUPS]
    )


def _default_followups(question: str, chat_history: Sequence[dict]) -> list[str]:
    topic = question.rstrip("?").strip()
    followups = [
        f"Which landmark cases illustrate: {topic}?",
        f"How does enforcement practice differ between the EU and Germany for: {topic}?",
    ]
    if chat_history:
        last_user = next(
            (m["content"] for m in reversed(chat_history) if m["role"] == "user"), None
        )
        if last_user and last_user != question:
            followups.append(f"How does this relate to your earlier question: {last_user}")
    return followups


def _host(url: str) -> str:
    return re.sub(r"^[a-z]+://", "", url).split("/")[0].lower()


def ask_clarification(
    question: str,
    scratchpad: Sequence,
    chat_history: Sequence[dict],
    chat: ChatProvider,
    template: Optional[str] = None,
) -> str:
    """Produce one specific question the user can answer to resolve ambiguity."""
    if template is None:
        from .domain import _asset_path

        template = _asset_path("clarification_prompt.txt").read_text("utf-8")
    scratchpad_text = "\n".join(str(step) for step in scratchpad) or "(empty)"
    prompt = template.format(
        scratchpad=scratchpad_text,
        history=_render_history(chat_history),
        question=question,
    )
    reply = chat.complete([{"role": "user", "content": prompt}]).strip()
    return reply
