import type { Citation, HistoryMessage, TraceStep } from "./types.js";
import type { ViewStatus } from "./state.js";

/**
 * Render answer text with each [n] marker replaced by a link to its source,
 * page number shown beside the marker. Markers without a matching citation
 * render as plain text (the server strips invalid ones; this is belt and
 * braces for hand-edited fixtures).
 */
export function renderAnswerText(
  doc: Document,
  text: string,
  citations: Citation[],
): HTMLElement {
  const container = doc.createElement("span");
  container.className = "answer-text";
  const byMarker = new Map(citations.map((c) => [c.marker, c]));
  const pattern = /\[(\d+)\]/g;
  let cursor = 0;
  for (const match of text.matchAll(pattern)) {
    const citation = byMarker.get(Number(match[1]));
    const start = match.index ?? 0;
    if (start > cursor) {
      container.append(doc.createTextNode(text.slice(cursor, start)));
    }
    if (citation) {
      const link = doc.createElement("a");
      link.className = "citation";
      link.href = citation.source_url;
      link.target = "_blank";
      link.rel = "noopener";
      link.title = `${citation.source_url} — page ${citation.page}`;
      link.textContent = `[${citation.marker}]`;
      const page = doc.createElement("sup");
      page.className = "citation-page";
      page.textContent = `p.${citation.page}`;
      link.append(page);
      container.append(link);
    } else {
      container.append(doc.createTextNode(match[0]));
    }
    cursor = start + match[0].length;
  }
  if (cursor < text.length) {
    container.append(doc.createTextNode(text.slice(cursor)));
  }
  return container;
}

/** Expandable list of a turn's thought/action/observation steps. */
export function renderTrace(doc: Document, trace: TraceStep[]): HTMLElement {
  const details = doc.createElement("details");
  details.className = "trace";
  const summary = doc.createElement("summary");
  summary.textContent = `${trace.length} step${trace.length === 1 ? "" : "s"}`;
  details.append(summary);
  const list = doc.createElement("ol");
  for (const step of trace) {
    const row = doc.createElement("li");
    row.className = "trace-step";
    row.dataset.tool = step.action.tool;
    row.textContent = `${step.thought} → ${step.action.tool} → ${step.observation}`;
    list.append(row);
  }
  details.append(list);
  return details;
}

/** One-click chips that resubmit a follow-up question as a new turn. */
export function renderFollowups(
  doc: Document,
  followups: string[],
  onPick: (question: string) => void,
): HTMLElement {
  const row = doc.createElement("div");
  row.className = "followups";
  for (const question of followups) {
    const chip = doc.createElement("button");
    chip.className = "followup-chip";
    chip.type = "button";
    chip.textContent = question;
    chip.addEventListener("click", () => onPick(question));
    row.append(chip);
  }
  return row;
}

export function renderMessage(
  doc: Document,
  message: HistoryMessage,
  onPick: (question: string) => void,
): HTMLElement {
  const bubble = doc.createElement("div");
  bubble.className = `message ${message.role} ${message.type ?? ""}`.trim();
  if (message.role === "assistant" && message.type === "answer") {
    bubble.append(renderAnswerText(doc, message.text, message.citations ?? []));
    if (message.followups?.length) {
      bubble.append(renderFollowups(doc, message.followups, onPick));
    }
  } else {
    bubble.append(doc.createTextNode(message.text));
  }
  if (message.role === "assistant" && message.trace?.length) {
    bubble.append(renderTrace(doc, message.trace));
  }
  return bubble;
}

export function renderStatus(doc: Document, status: ViewStatus, line: string): HTMLElement {
  const indicator = doc.createElement("div");
  indicator.className = `status ${status.kind}`;
  indicator.textContent = line;
  return indicator;
}
