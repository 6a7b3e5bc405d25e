// Wire types for the five service endpoints. The server is the source of
// truth; the console never re-derives routing or citation decisions.

export interface Citation {
  marker: number;
  source_url: string;
  page: number;
}

export interface AnswerPayload {
  text: string;
  citations: Citation[];
  followups: string[];
}

export interface TraceStep {
  thought: string;
  action: { tool: string; arguments: Record<string, unknown> };
  observation: string;
}

export type ProgressEventName =
  | "thinking"
  | "tool_started"
  | "tool_finished"
  | "answer_ready"
  | "clarification_needed"
  | "error";

export interface ProgressEvent {
  event: ProgressEventName;
  detail: string;
  tool?: string;
}

export interface HistoryMessage {
  role: "user" | "assistant";
  turn: number;
  text: string;
  type?: "answer" | "clarification";
  citations?: Citation[];
  followups?: string[];
  trace?: TraceStep[];
}

export interface HistoryPayload {
  session_id: string;
  status: string;
  messages: HistoryMessage[];
}

export interface SessionInfo {
  session_id: string;
  status: string;
  turns: number;
}

export interface CaseSummary {
  case_id: string;
  case_title: string;
  jurisdiction: string;
  violation: string;
  sector: string;
  companies: string[];
  pdf_url: string;
  decision_date: string;
  [key: string]: unknown;
}
