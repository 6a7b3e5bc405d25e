import { ApiClient } from "./api.js";
import { ConversationView } from "./state.js";
import { renderMessage, renderStatus } from "./render.js";
import type { ProgressEvent } from "./types.js";

/**
 * The chat console: an input box, a submit button, the scrollable message
 * pane, and a progress indicator. All state lives in ConversationView; this
 * class only wires the API and re-renders after each change. Updates are
 * serialized through a single promise chain so event bursts cannot
 * interleave renders.
 */
export class Console {
  readonly view = new ConversationView();
  private sessionId: string | null = null;
  private queue: Promise<void> = Promise.resolve();

  private readonly pane: HTMLElement;
  private readonly indicator: HTMLElement;
  private readonly input: HTMLInputElement;
  private readonly button: HTMLButtonElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly doc: Document = root.ownerDocument,
  ) {
    this.pane = this.doc.createElement("div");
    this.pane.className = "chat-pane";
    this.indicator = this.doc.createElement("div");
    this.indicator.className = "indicator";
    this.input = this.doc.createElement("input");
    this.input.className = "question-input";
    this.input.placeholder = "Ask about a case...";
    this.button = this.doc.createElement("button");
    this.button.className = "submit";
    this.button.textContent = "Send";
    this.button.addEventListener("click", () => {
      void this.submit(this.input.value);
    });
    root.append(this.pane, this.indicator, this.input, this.button);
    this.render();
  }

  async start(): Promise<void> {
    const session = await this.api.createSession();
    this.sessionId = session.session_id;
    await this.refresh();
  }

  /** Re-sync from the history endpoint (page reload path). */
  async refresh(): Promise<void> {
    if (!this.sessionId) return;
    this.view.loadHistory(await this.api.getHistory(this.sessionId));
    this.render();
  }

  async submit(text: string): Promise<void> {
    const trimmed = text.trim();
    if (!trimmed || !this.sessionId || this.view.inputDisabled) return;
    this.view.submit(trimmed);
    this.input.value = "";
    this.render();
    const { turn } = await this.api.postMessage(this.sessionId, trimmed);
    try {
      await this.api.streamEvents(this.sessionId, turn, (event) =>
        this.enqueue(event),
      );
    } catch (err) {
      this.view.errorBanner = `Connection lost: ${String(err)}`;
      this.view.status = { kind: "idle" };
      this.render();
    }
  }

  private enqueue(event: ProgressEvent): void {
    this.queue = this.queue.then(() => {
      this.view.applyEvent(event);
      this.render();
    });
  }

  private render(): void {
    this.pane.replaceChildren(
      ...this.view.messages.map((message) =>
        renderMessage(this.doc, message, (question) => void this.submit(question)),
      ),
    );
    this.indicator.replaceChildren(
      renderStatus(this.doc, this.view.status, this.view.statusLine),
    );
    if (this.view.errorBanner) {
      const banner = this.doc.createElement("div");
      banner.className = "error-banner";
      banner.textContent = this.view.errorBanner;
      this.indicator.append(banner);
    }
    this.input.disabled = this.view.inputDisabled;
    this.button.disabled = this.view.inputDisabled;
    this.input.classList.toggle(
      "clarification",
      this.view.status.kind === "awaiting_clarification",
    );
  }
}

export function mount(root: HTMLElement, baseUrl: string): Console {
  return new Console(root, new ApiClient(baseUrl));
}
