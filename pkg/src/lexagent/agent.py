"""The ReAct loop.

A turn alternates thought, tool action, and observation until a terminal
tool (answer_case, answer_theoretical, ask_clarification) fires or the step
budget runs out. The chat provider proposes actions; a validator enforces
the routing rules mechanically, so an illegal proposal gets one corrective
re-prompt and is then overridden with a forced legal action. Session memory
holds the scratchpad, the chat history, and the append-only list of cases
retrieved so far.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .answers import (
    AnswerError,
    CitedAnswer,
    answer_case,
    answer_theoretical,
    ask_clarification,
)
from .domain import CaseRecord, CaseStore, Vocabulary
from .index_store import DocumentChunk, VectorStore, tokenize
from .providers import (
    ChatProvider,
    DeepResearchProvider,
    EmbeddingProvider,
    ProviderUnavailable,
    WebSearchProvider,
)
from .search import (
    EmptyQueryVector,
    SearchError,
    SearchResult,
    WebSearchConfig,
    database_search,
    extract_query_vector,
    web_search_fallback,
)

MAX_STEPS = 8
TOOLS = ("database_search", "web_search", "answer_case", "answer_theoretical", "ask_clarification")

IDLE = "idle"
RUNNING = "running"
AWAITING_CLARIFICATION = "awaiting_clarification"

_ORDINALS = {
    "first": 0,
    "second": 1,
    "third": 2,
    "fourth": 3,
    "fifth": 4,
    "last": -1,
}
_CASE_ID_RE = re.compile(r"\b(AT\.\d+|M\.\d+|COMP/[A-Z]*\.?\d+|B\d+-\d+(?:-\d+)*)\b")


@dataclass
class ReactStep:
    thought: str
    action: dict  # {"tool": str, "arguments": dict}
    observation: str = ""

    def __str__(self) -> str:
        return (
            f"Thought: {self.thought}\n"
            f"Action: {self.action.get('tool')}({json.dumps(self.action.get('arguments', {}))})\n"
            f"Observation: {self.observation}"
        )

    def to_dict(self) -> dict:
        return {"thought": self.thought, "action": self.action, "observation": self.observation}


@dataclass
class SessionState:
    session_id: str
    chat_history: list[dict] = field(default_factory=list)
    scratchpad: list[ReactStep] = field(default_factory=list)
    session_cases: list[CaseRecord] = field(default_factory=list)
    active_case: Optional[dict] = None
    status: str = IDLE

    def remember_cases(self, cases: Sequence[CaseRecord]) -> None:
        """Append newly retrieved cases; append-only, unique by case_id."""
        known = {c.case_id for c in self.session_cases}
        for case in cases:
            if case.case_id not in known:
                self.session_cases.append(case)
                known.add(case.case_id)

    def has_case(self, case_id: str) -> bool:
        return any(c.case_id == case_id for c in self.session_cases)


@dataclass
class TurnOutcome:
    kind: str  # "final" or "clarification"
    answer: Optional[CitedAnswer] = None
    clarification: Optional[str] = None
    tool_sequence: list[str] = field(default_factory=list)
    steps: list[ReactStep] = field(default_factory=list)


# --- case reference resolution ---------------------------------------------


@dataclass(frozen=True)
class CaseReference:
    kind: str  # "case", "ambiguous", "none"
    case_id: Optional[str] = None


def resolve_case_reference(
    question: str,
    session_cases: Sequence[CaseRecord],
    chat: Optional[ChatProvider] = None,
) -> CaseReference:
    """Resolve which case a question refers to.

    An explicit case id wins; ordinals ("the first case") index the session
    list; a bare "the case" resolves only when exactly one session case
    exists, is ambiguous with several, and is no reference with none.
    """
    explicit = _CASE_ID_RE.search(question)
    if explicit:
        return CaseReference(kind="case", case_id=explicit.group(1))
    lowered = question.lower()
    for word, index in _ORDINALS.items():
        if re.search(rf"\b{word}\b.{{0,12}}\bcase\b|\bcase\b.{{0,12}}\b{word}\b", lowered):
            if not session_cases:
                return CaseReference(kind="none")
            try:
                return CaseReference(kind="case", case_id=session_cases[index].case_id)
            except IndexError:
                return CaseReference(kind="none")
    if re.search(r"\b(the|this|that)\s+case\b", lowered):
        if len(session_cases) == 1:
            return CaseReference(kind="case", case_id=session_cases[0].case_id)
        if len(session_cases) >= 2:
            return CaseReference(kind="ambiguous")
        return CaseReference(kind="none")
    return CaseReference(kind="none")


# --- toolbox ----------------------------------------------------------------


@dataclass
class Toolbox:
    """Everything the five tools need; the tool chat provider is separate
    from the agent's action-selection provider so each can be scripted
    independently."""

    case_store: CaseStore
    vector_store: VectorStore
    embed: EmbeddingProvider
    chat: ChatProvider
    research: DeepResearchProvider
    web: WebSearchProvider
    vocab: Vocabulary
    allowed_domains: list[str] = field(default_factory=list)
    web_config: Optional[WebSearchConfig] = None

    def __post_init__(self):
        if not self.allowed_domains:
            from .domain import _asset_path

            self.allowed_domains = [
                line.strip()
                for line in _asset_path("allowed_domains.txt").read_text("utf-8").splitlines()
                if line.strip()
            ]


def build_agent_prompt(
    session: SessionState,
    tools_description: str = "",
    token_budget: int = 4000,
    template: Optional[str] = None,
) -> list[dict]:
    """System prompt + scratchpad + history, within the token budget.

    Oldest scratchpad entries are summarized first when over budget; the
    newest entries stay verbatim.
    """
    if template is None:
        from .domain import _asset_path

        template = _asset_path("agent_system_prompt.txt").read_text("utf-8")
    cases_summary = (
        "\n".join(f"{i + 1}. {c.case_id}: {c.case_title}" for i, c in enumerate(session.session_cases))
        or "(none yet)"
    )
    # the template holds literal JSON braces, so no str.format here
    system = template.replace("{session_cases}", cases_summary)
    if tools_description:
        system += "\n" + tools_description

    def serialize(steps: list[str]) -> str:
        return "\n\n".join(steps)

    rendered = [str(step) for step in session.scratchpad]
    history_text = "\n".join(f"{m['role']}: {m['content']}" for m in session.chat_history)

    def total_tokens() -> int:
        return len(tokenize(system)) + len(tokenize(history_text)) + len(
            tokenize(serialize(rendered))
        )

    for i, step in enumerate(session.scratchpad):
        if total_tokens() <= token_budget:
            break
        observation = " ".join(tokenize(step.observation)[:15])
        rendered[i] = (
            f"(summarized) {step.action.get('tool')}: {observation}"
        )

    messages = [{"role": "system", "content": system}]
    messages.extend(session.chat_history)
    if rendered:
        messages.append(
            {"role": "assistant", "content": "Scratchpad so far:\n" + serialize(rendered)}
        )
    return messages


def _parse_action(response: str) -> Optional[dict]:
    match = re.search(r"\{.*\}", response, re.DOTALL)
    if not match:
        return None
    try:
        data = json.loads(match.group(0))
    except json.JSONDecodeError:
        return None
    if not isinstance(data, dict) or data.get("tool") not in TOOLS:
        return None
    data.setdefault("thought", "")
    data.setdefault("arguments", {})
    return data


class _TurnState:
    """Per-turn routing flags driving the validator."""

    def __init__(self):
        self.db_miss_pending = False  # last db search found nothing; web is forced next
        self.web_missed = False
        self.last_query_vector = None
        self.searched = False


def _action_is_legal(action: dict, turn: _TurnState, session: SessionState) -> bool:
    tool = action["tool"]
    if turn.db_miss_pending:
        return tool == "web_search"
    if tool == "web_search":
        return False  # only legal as the fallback after a database miss
    if tool == "answer_case":
        case_id = action["arguments"].get("case_id")
        return bool(case_id) and session.has_case(case_id)
    return True


def _forced_action(action: Optional[dict], turn: _TurnState, user_message: str) -> dict:
    if turn.db_miss_pending:
        return {
            "thought": "The database had no match; falling back to the web.",
            "tool": "web_search",
            "arguments": {"question": user_message},
        }
    if action and action["tool"] in ("answer_case", "web_search"):
        # R1/R4: search the database before answering or going to the web
        return {
            "thought": "A database search must come first.",
            "tool": "database_search",
            "arguments": {"question": user_message},
        }
    return {
        "thought": "The request is unclear; asking the user to clarify.",
        "tool": "ask_clarification",
        "arguments": {"question": user_message},
    }


def run_turn(
    session: SessionState,
    user_message: str,
    tools: Toolbox,
    chat: ChatProvider,
    max_steps: int = MAX_STEPS,
    on_event: Optional[Callable[[dict], None]] = None,
) -> TurnOutcome:
    """Run one user turn through the thought-action-observation loop."""
    if session.status not in (IDLE, AWAITING_CLARIFICATION):
        raise RuntimeError(f"cannot start a turn in status {session.status!r}")
    session.status = RUNNING
    session.chat_history.append({"role": "user", "content": user_message})
    emit = on_event or (lambda event: None)
    emit({"event": "thinking", "detail": "The assistant is thinking..."})

    turn = _TurnState()
    outcome = TurnOutcome(kind="clarification")
    try:
        for _ in range(max_steps):
            action = _propose_action(session, user_message, chat, turn)
            step = ReactStep(thought=action.get("thought", ""), action=action)
            tool = action["tool"]
            emit({"event": "tool_started", "tool": tool, "detail": action["thought"]})
            terminal = _execute(step, session, tools, turn, user_message, outcome)
            session.scratchpad.append(step)
            outcome.steps.append(step)
            outcome.tool_sequence.append(tool)
            emit({"event": "tool_finished", "tool": tool, "detail": step.observation})
            if terminal:
                break
            if turn.web_missed:
                # Both the database and the web came up empty: conclude no
                # such case exists and answer with the searches performed.
                outcome.kind = "final"
                outcome.answer = CitedAnswer(
                    text=(
                        "No such case could be found. The case database and the "
                        "official web sources were both searched for: "
                        f"{user_message!r}. The case likely does not exist under "
                        "that reference."
                    )
                )
                break
        else:
            attempted = ", ".join(outcome.tool_sequence) or "no tools"
            outcome.kind = "clarification"
            outcome.clarification = (
                f"I could not finish answering within my step budget (tried: {attempted}). "
                "Could you narrow the question down, e.g. by naming a specific case?"
            )
    except ProviderUnavailable:
        session.status = IDLE
        raise

    if outcome.kind == "final":
        assert outcome.answer is not None
        session.chat_history.append({"role": "assistant", "content": outcome.answer.text})
        session.status = IDLE
    else:
        if outcome.clarification is None:
            outcome.clarification = "Could you clarify what you are asking about?"
        session.chat_history.append({"role": "assistant", "content": outcome.clarification})
        session.status = AWAITING_CLARIFICATION
    return outcome


def resume_with_clarification(
    session: SessionState,
    user_reply: str,
    tools: Toolbox,
    chat: ChatProvider,
    max_steps: int = MAX_STEPS,
    on_event: Optional[Callable[[dict], None]] = None,
) -> TurnOutcome:
    """Continue after a clarification question; the reply is re-evaluated as
    a turn of its own, so a fresh question simply starts a fresh intent."""
    if session.status != AWAITING_CLARIFICATION:
        raise RuntimeError("resume_with_clarification requires awaiting_clarification status")
    return run_turn(session, user_reply, tools, chat, max_steps=max_steps, on_event=on_event)


def _propose_action(
    session: SessionState, user_message: str, chat: ChatProvider, turn: _TurnState
) -> dict:
    messages = build_agent_prompt(session)
    response = chat.complete(messages, temperature=0.0)
    action = _parse_action(response)
    if action is None or not _action_is_legal(action, turn, session):
        # One corrective re-prompt, then force a legal action.
        correction = {
            "role": "user",
            "content": (
                "That tool choice violates the routing rules. Reply with a JSON "
                "action choosing a legal tool. Remember: web_search only after a "
                "database miss; answer_case only for cases already in session memory."
            ),
        }
        response = chat.complete(messages + [correction], temperature=0.0)
        retry = _parse_action(response)
        if retry is not None and _action_is_legal(retry, turn, session):
            return retry
        return _forced_action(action, turn, user_message)
    return action


def _execute(
    step: ReactStep,
    session: SessionState,
    tools: Toolbox,
    turn: _TurnState,
    user_message: str,
    outcome: TurnOutcome,
) -> bool:
    """Run one tool; returns True when the turn is over."""
    tool = step.action["tool"]
    args = step.action.get("arguments", {})
    question = args.get("question") or user_message
    try:
        if tool == "database_search":
            qv = extract_query_vector(question, session.chat_history[:-1], tools.chat, tools.vocab)
            turn.last_query_vector = qv
            result = database_search(qv, tools.case_store, tools.embed, question_text=question)
            turn.searched = True
            if result.cases:
                session.remember_cases(result.cases)
                turn.db_miss_pending = False
                step.observation = _describe_hits(result)
            else:
                turn.db_miss_pending = True
                step.observation = "No matching cases in the database."
            return False

        if tool == "web_search":
            turn.db_miss_pending = False
            from .domain import QueryVector

            qv = turn.last_query_vector or QueryVector()
            result = web_search_fallback(
                question, qv, tools.research, tools.web, tools.chat, tools.vocab,
                config=tools.web_config,
            )
            if result.cases:
                session.remember_cases(result.cases)
                step.observation = _describe_hits(result)
            else:
                turn.web_missed = True
                step.observation = (
                    f"No verified official cases found on the web "
                    f"({result.dropped_unverified} unverified candidates dropped)."
                )
            return False

        if tool == "answer_case":
            case_id = args.get("case_id", "")
            answer = answer_case(
                question, case_id, session, tools.vector_store, tools.embed, tools.chat
            )
            step.observation = f"Answered from case {case_id} with {len(answer.citations)} citations."
            outcome.kind = "final"
            outcome.answer = answer
            return True

        if tool == "answer_theoretical":
            answer = answer_theoretical(
                question, session.chat_history[:-1], tools.research, tools.allowed_domains
            )
            step.observation = f"Answered from {len(answer.citations)} official sources."
            outcome.kind = "final"
            outcome.answer = answer
            return True

        if tool == "ask_clarification":
            clarification = ask_clarification(
                question, session.scratchpad, session.chat_history[:-1], tools.chat
            )
            step.observation = f"Asked the user: {clarification}"
            outcome.kind = "clarification"
            outcome.clarification = clarification
            return True

        raise ValueError(f"unknown tool {tool!r}")
    except ProviderUnavailable:
        raise
    except (SearchError, AnswerError, EmptyQueryVector) as exc:
        step.observation = f"Tool error: {exc}"
        return False


def _describe_hits(result: SearchResult) -> str:
    ids = ", ".join(c.case_id for c in result.cases)
    return f"Found {len(result.cases)} case(s) via {result.origin}: {ids}"
