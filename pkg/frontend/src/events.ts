/** Server-sent events client for /api/events.
 *
 * Hand-rolled instead of EventSource so that drop comments are visible,
 * duplicate ids on resume can be discarded, and the reconnect policy is
 * testable. One log line per message; `id:` carries the sequence number.
 */

export interface SseFrame {
  id?: string;
  event?: string;
  data?: string;
  comment?: string;
}

/** Incremental SSE frame parser; feed() may be called with partial lines. */
export class SseParser {
  private buf = "";
  private cur: SseFrame = {};

  feed(chunk: string): SseFrame[] {
    this.buf += chunk;
    const frames: SseFrame[] = [];
    for (;;) {
      const nl = this.buf.indexOf("\n");
      if (nl < 0) break;
      let line = this.buf.slice(0, nl);
      this.buf = this.buf.slice(nl + 1);
      if (line.endsWith("\r")) line = line.slice(0, -1);
      if (line === "") {
        if (Object.keys(this.cur).length > 0) frames.push(this.cur);
        this.cur = {};
        continue;
      }
      if (line.startsWith(":")) {
        const text = line.slice(1).replace(/^ /, "");
        this.cur.comment =
          this.cur.comment === undefined ? text : `${this.cur.comment}\n${text}`;
        continue;
      }
      const colon = line.indexOf(":");
      const field = colon < 0 ? line : line.slice(0, colon);
      let value = colon < 0 ? "" : line.slice(colon + 1);
      if (value.startsWith(" ")) value = value.slice(1);
      if (field === "id") this.cur.id = value;
      else if (field === "event") this.cur.event = value;
      else if (field === "data")
        this.cur.data =
          this.cur.data === undefined ? value : `${this.cur.data}\n${value}`;
      // other fields (retry, unknown) are ignored
    }
    return frames;
  }
}

/** "dropped N events" -> N, else null. */
export function parseDropComment(comment: string): number | null {
  const m = /^dropped (\d+) events?$/.exec(comment.trim());
  return m ? parseInt(m[1], 10) : null;
}

export type FeedState = "connecting" | "live" | "reconnecting" | "stopped";

export interface FeedOptions {
  url: string;
  onEvent: (seq: number, line: string) => void;
  /** Called with the number of events that were missed (buffer overrun). */
  onGap?: (missed: number) => void;
  onState?: (state: FeedState) => void;
  fetchFn?: (input: string, init?: RequestInit) => Promise<Response>;
  retryMs?: number;
}

export class EventFeed {
  lastSeq = -1;
  private stopped = false;
  private abort: AbortController | null = null;

  constructor(private readonly opts: FeedOptions) {}

  stop(): void {
    this.stopped = true;
    this.abort?.abort();
    this.opts.onState?.("stopped");
  }

  async run(): Promise<void> {
    const fetchFn = this.opts.fetchFn ?? ((...a: [string, RequestInit?]) => fetch(...a));
    const retryMs = this.opts.retryMs ?? 2000;
    let first = true;
    while (!this.stopped) {
      this.opts.onState?.(first ? "connecting" : "reconnecting");
      first = false;
      this.abort = new AbortController();
      try {
        const headers: Record<string, string> = { accept: "text/event-stream" };
        if (this.lastSeq >= 0) headers["last-event-id"] = String(this.lastSeq);
        const resp = await fetchFn(this.opts.url, {
          headers,
          signal: this.abort.signal,
        });
        if (!resp.ok || !resp.body) throw new Error(`stream HTTP ${resp.status}`);
        this.opts.onState?.("live");
        await this.consume(resp.body);
      } catch {
        /* connection lost or refused; retry below */
      }
      if (this.stopped) return;
      await new Promise((r) => setTimeout(r, retryMs));
    }
  }

  private async consume(body: ReadableStream<Uint8Array>): Promise<void> {
    const reader = body.getReader();
    const decoder = new TextDecoder();
    const parser = new SseParser();
    for (;;) {
      const { done, value } = await reader.read();
      if (done) return;
      for (const frame of parser.feed(decoder.decode(value, { stream: true }))) {
        this.handle(frame);
      }
    }
  }

  private handle(frame: SseFrame): void {
    if (frame.comment !== undefined) {
      const dropped = parseDropComment(frame.comment);
      if (dropped !== null) this.opts.onGap?.(dropped);
    }
    if (frame.id === undefined || frame.data === undefined) return;
    const seq = parseInt(frame.id, 10);
    if (!Number.isFinite(seq) || seq <= this.lastSeq) return; // replay after resume
    if (this.lastSeq >= 0 && seq > this.lastSeq + 1) {
      this.opts.onGap?.(seq - this.lastSeq - 1);
    }
    this.lastSeq = seq;
    this.opts.onEvent(seq, frame.data);
  }
}
