import type {
  AnswerPayload,
  HistoryMessage,
  HistoryPayload,
  ProgressEvent,
} from "./types.js";

export type ViewStatus =
  | { kind: "idle" }
  | { kind: "thinking"; tool?: string }
  | { kind: "awaiting_clarification" };

export interface TraceRow {
  tool: string;
  thought: string;
  observation: string;
}

/**
 * View-model behind the chat pane. Mirrors the history endpoint after any
 * refresh; between refreshes it advances one progress event at a time and
 * honors the event grammar: input is locked while thinking, a clarification
 * unlocks it, and answer_ready appends exactly one assistant message.
 */
export class ConversationView {
  messages: HistoryMessage[] = [];
  status: ViewStatus = { kind: "idle" };
  errorBanner: string | null = null;
  private turn = 0;
  private liveTrace: TraceRow[] = [];
  private pendingTool: TraceRow | null = null;

  get inputDisabled(): boolean {
    return this.status.kind === "thinking";
  }

  /** Human-readable progress line for the indicator area. */
  get statusLine(): string {
    if (this.status.kind !== "thinking") return "";
    return this.status.tool
      ? `Running ${this.status.tool}...`
      : "The assistant is thinking...";
  }

  /** Optimistic user bubble; the turn's events drive everything after. */
  submit(text: string): void {
    if (this.inputDisabled) {
      throw new Error("cannot submit while a turn is running");
    }
    this.turn += 1;
    this.errorBanner = null;
    this.liveTrace = [];
    this.pendingTool = null;
    this.messages.push({ role: "user", turn: this.turn, text });
    this.status = { kind: "thinking" };
  }

  applyEvent(event: ProgressEvent): void {
    switch (event.event) {
      case "thinking":
        this.status = { kind: "thinking" };
        break;
      case "tool_started":
        this.status = { kind: "thinking", tool: event.tool };
        this.pendingTool = {
          tool: event.tool ?? "",
          thought: event.detail,
          observation: "",
        };
        break;
      case "tool_finished":
        if (this.pendingTool) {
          this.pendingTool.observation = event.detail;
          this.liveTrace.push(this.pendingTool);
          this.pendingTool = null;
        }
        this.status = { kind: "thinking" };
        break;
      case "answer_ready": {
        const payload = JSON.parse(event.detail) as AnswerPayload;
        this.messages.push({
          role: "assistant",
          type: "answer",
          turn: this.turn,
          text: payload.text,
          citations: payload.citations,
          followups: payload.followups,
          trace: this.takeTrace(),
        });
        this.status = { kind: "idle" };
        break;
      }
      case "clarification_needed":
        this.messages.push({
          role: "assistant",
          type: "clarification",
          turn: this.turn,
          text: event.detail,
          citations: [],
          followups: [],
          trace: this.takeTrace(),
        });
        this.status = { kind: "awaiting_clarification" };
        break;
      case "error":
        this.errorBanner = event.detail;
        this.status = { kind: "idle" };
        break;
    }
  }

  /** Replace local state with the server's transcript (reload path). */
  loadHistory(payload: HistoryPayload): void {
    this.messages = payload.messages.slice();
    this.turn = payload.messages.reduce((max, m) => Math.max(max, m.turn), 0);
    this.status =
      payload.status === "awaiting_clarification"
        ? { kind: "awaiting_clarification" }
        : { kind: "idle" };
    this.liveTrace = [];
    this.pendingTool = null;
  }

  private takeTrace() {
    const rows = this.liveTrace.map((row) => ({
      thought: row.thought,
      action: { tool: row.tool, arguments: {} },
      observation: row.observation,
    }));
    this.liveTrace = [];
    return rows;
  }
}
