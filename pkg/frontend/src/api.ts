import { subscribe } from "./sse.js";
import type {
  CaseSummary,
  HistoryPayload,
  ProgressEvent,
  SessionInfo,
} from "./types.js";

const TERMINAL = new Set(["answer_ready", "clarification_needed", "error"]);

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
  }
}

/** Thin client for the five service endpoints; no business logic. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (!response.ok) {
      const body = await response.json().catch(() => ({}));
      throw new ApiError(response.status, String(body.detail ?? response.status));
    }
    return (await response.json()) as T;
  }

  createSession(): Promise<SessionInfo> {
    return this.request("/sessions", { method: "POST" });
  }

  postMessage(sessionId: string, text: string): Promise<{ turn: number }> {
    return this.request(`/sessions/${sessionId}/messages`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    });
  }

  /** Stream one turn's progress events, with Last-Event-ID reconnection. */
  streamEvents(
    sessionId: string,
    turn: number,
    onEvent: (event: ProgressEvent) => void,
  ): Promise<void> {
    const url = `${this.baseUrl}/sessions/${sessionId}/events?turn=${turn}`;
    return subscribe(url, {
      fetchImpl: this.fetchImpl,
      onFrame: (frame) => onEvent(JSON.parse(frame.data) as ProgressEvent),
      isTerminal: (frame) => TERMINAL.has(frame.event),
    });
  }

  getHistory(sessionId: string): Promise<HistoryPayload> {
    return this.request(`/sessions/${sessionId}/history`);
  }

  searchCases(params: Record<string, string>): Promise<{ cases: CaseSummary[] }> {
    const query = new URLSearchParams(params).toString();
    return this.request(`/cases?${query}`);
  }
}
