import type { AnswerPayload, ProgressEvent } from "../src/types.js";

export const twoCitationAnswer: AnswerPayload = {
  text: "The fees restricted competition [1]. Commitments were accepted [2].",
  citations: [
    { marker: 1, source_url: "https://example.org/AT.39398.pdf", page: 3 },
    { marker: 2, source_url: "https://example.org/AT.39398.pdf", page: 17 },
  ],
  followups: ["What remedies were imposed?", "Were fines reduced on appeal?"],
};

/** Recorded stream: database search then a cited answer. */
export const answerTurnEvents: ProgressEvent[] = [
  { event: "thinking", detail: "The assistant is thinking..." },
  {
    event: "tool_started",
    tool: "database_search",
    detail: "Look the case up first.",
  },
  {
    event: "tool_finished",
    tool: "database_search",
    detail: "Found 1 case: AT.39398.",
  },
  {
    event: "tool_started",
    tool: "answer_case",
    detail: "Answer from the decision text.",
  },
  { event: "tool_finished", tool: "answer_case", detail: "Answer prepared." },
  { event: "answer_ready", detail: JSON.stringify(twoCitationAnswer) },
];

/** Recorded stream: ambiguous question, turn suspends for clarification. */
export const clarificationTurnEvents: ProgressEvent[] = [
  { event: "thinking", detail: "The assistant is thinking..." },
  {
    event: "tool_started",
    tool: "ask_clarification",
    detail: "Two session cases could match.",
  },
  {
    event: "tool_finished",
    tool: "ask_clarification",
    detail: "Clarification prepared.",
  },
  {
    event: "clarification_needed",
    detail: "Which case do you mean: AT.39398 or B4-71-20?",
  },
];

export function sseBody(events: ProgressEvent[], firstId = 0): string {
  return events
    .map(
      (event, i) =>
        `id: ${firstId + i}\nevent: ${event.event}\ndata: ${JSON.stringify(event)}\n\n`,
    )
    .join("");
}
