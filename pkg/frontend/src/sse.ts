// Server-sent-events reader over fetch. The native EventSource API cannot
// set the Last-Event-ID header on a fresh request, so frames are parsed from
// the response body stream directly.

export interface SseFrame {
  id: number | null;
  event: string;
  data: string;
}

/** Parse one complete SSE frame block (the text between blank lines). */
export function parseFrame(block: string): SseFrame | null {
  let id: number | null = null;
  let event = "message";
  const data: string[] = [];
  for (const line of block.split("\n")) {
    if (line.startsWith("id: ")) {
      id = Number(line.slice(4));
    } else if (line.startsWith("event: ")) {
      event = line.slice(7);
    } else if (line.startsWith("data: ")) {
      data.push(line.slice(6));
    }
  }
  if (data.length === 0) return null;
  return { id, event, data: data.join("\n") };
}

/** Yield frames from a byte stream, tolerating chunk splits mid-frame. */
export async function* readFrames(
  body: ReadableStream<Uint8Array>,
): AsyncGenerator<SseFrame> {
  const decoder = new TextDecoder();
  const reader = body.getReader();
  let buffer = "";
  for (;;) {
    const { done, value } = await reader.read();
    if (done) break;
    buffer += decoder.decode(value, { stream: true });
    buffer = buffer.replace(/\r\n/g, "\n");
    let split = buffer.indexOf("\n\n");
    while (split >= 0) {
      const frame = parseFrame(buffer.slice(0, split));
      buffer = buffer.slice(split + 2);
      if (frame) yield frame;
      split = buffer.indexOf("\n\n");
    }
  }
  const tail = parseFrame(buffer);
  if (tail) yield tail;
}

export interface SubscribeOptions {
  fetchImpl?: typeof fetch;
  maxRetries?: number;
  onFrame: (frame: SseFrame) => void;
  isTerminal: (frame: SseFrame) => boolean;
}

/**
 * Stream a turn's events, reconnecting with Last-Event-ID after connection
 * loss so no frame is delivered twice. Resolves once a terminal frame
 * arrives; rejects after the retry budget is spent.
 */
export async function subscribe(
  url: string,
  options: SubscribeOptions,
): Promise<void> {
  const fetchImpl = options.fetchImpl ?? fetch;
  const maxRetries = options.maxRetries ?? 3;
  let lastEventId: number | null = null;
  let failures = 0;
  for (;;) {
    try {
      const headers: Record<string, string> = {};
      if (lastEventId !== null) headers["Last-Event-ID"] = String(lastEventId);
      const response = await fetchImpl(url, { headers });
      if (!response.ok || !response.body) {
        throw new Error(`event stream returned ${response.status}`);
      }
      for await (const frame of readFrames(response.body)) {
        if (frame.id !== null) lastEventId = frame.id;
        options.onFrame(frame);
        if (options.isTerminal(frame)) return;
      }
      throw new Error("event stream ended before a terminal event");
    } catch (err) {
      failures += 1;
      if (failures > maxRetries) throw err;
    }
  }
}
