"""End-to-end offline demo: build a tiny corpus, index it, and run two agent
turns with scripted providers (no network, fully deterministic).

Usage: python scripts/demo_session.py
"""

import json

from lexagent.agent import SessionState, Toolbox, run_turn
from lexagent.domain import CaseRecord, CaseStore, default_vocabulary
from lexagent.index_store import DocumentChunk, InProcessVectorStore, index_case
from lexagent.providers import (
    HashEmbeddingProvider,
    ScriptedChatProvider,
    ScriptedResearchProvider,
    ScriptedWebSearchProvider,
)


def build_corpus():
    cases = [
        CaseRecord.create(
            case_id="AT.39398",
            case_title="Visa MIF",
            jurisdiction="EU",
            violation="Article 101 TFEU",
            sector="K – Financial and insurance activities",
            companies=("Visa Inc.", "Visa Europe"),
            pdf_url="https://example.org/AT.39398.pdf",
            language="English",
            decision_date="2019-04-29",
        ),
        CaseRecord.create(
            case_id="B4-71-20",
            case_title="Facebook data combination",
            jurisdiction="Germany",
            violation="Section 19 GWB",
            sector="J – Information and communication",
            companies=("Meta Platforms",),
            pdf_url="https://example.org/B4-71-20.pdf",
            language="English",
            decision_date="2020-01-01",
        ),
    ]
    return CaseStore(cases)


def index_corpus(case_store, vector_store, embedder):
    for case in case_store:
        chunks = [
            DocumentChunk(
                chunk_id=f"{case.case_id}:{i}",
                case_id=case.case_id,
                text=f"Decision text of {case.case_title}, part {i}.",
                page=i + 1,
                source_url=case.pdf_url,
            )
            for i in range(6)
        ]
        index_case(case, chunks, vector_store, embedder)


def action(thought, tool, **arguments):
    return json.dumps({"thought": thought, "tool": tool, "arguments": arguments})


def main():
    case_store = build_corpus()
    vector_store = InProcessVectorStore()
    embedder = HashEmbeddingProvider()
    index_corpus(case_store, vector_store, embedder)

    toolbox = Toolbox(
        case_store=case_store,
        vector_store=vector_store,
        embed=embedder,
        chat=ScriptedChatProvider(
            [
                '{"case_id": "AT.39398"}',
                "Visa's multilateral interchange fees restricted competition "
                "[1]. Commitments were made binding [3].",
                "The decision became binding on acceptance of commitments [2].",
            ]
        ),
        research=ScriptedResearchProvider([{}]),
        web=ScriptedWebSearchProvider([[]]),
        vocab=default_vocabulary(),
    )
    agent_chat = ScriptedChatProvider(
        [
            action("Look the case up first.", "database_search",
                   question="What was the Visa MIF case about?"),
            action("One hit; answer from its decision text.", "answer_case",
                   question="What was the Visa MIF case about?",
                   case_id="AT.39398"),
            action("'That case' resolves in session memory; no search needed.",
                   "answer_case",
                   question="When did that decision become binding?",
                   case_id="AT.39398"),
        ]
    )

    session = SessionState(session_id="demo")
    questions = [
        "What was the Visa MIF case about?",
        "When did that decision become binding?",
    ]
    for question in questions:
        print(f"\nuser> {question}")
        outcome = run_turn(
            session, question, toolbox, agent_chat,
            on_event=lambda e: print(f"  event: {e['event']}"
                                     + (f" ({e['tool']})" if "tool" in e else "")),
        )
        for step in outcome.steps:
            print(f"  step: {step.action.get('tool')}")
        answer = outcome.answer
        print(f"agent> {answer.text}")
        for citation in answer.citations:
            print(f"  [{citation.marker}] {citation.source_url} page {citation.page}")
    print(f"\nsession cases: {[c.case_id for c in session.session_cases]}")


if __name__ == "__main__":
    main()
