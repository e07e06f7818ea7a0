/** Client-side view state: a mirror of server responses, never a simulation.
 *
 * Everything here is derived from /api/status polls, /api/tasks fetches, and
 * event-log lines; reloading the page reconstructs the same view.
 */

import type { Status, TaskRow, TaskStatus } from "./api.js";

export interface LogEvent {
  seq: number;
  clock: number;
  kind: string;
  payload: Record<string, unknown>;
}

/** Parse one event-log line: "<clock>\t<kind>\t<payload-json>". */
export function parseEventLine(seq: number, line: string): LogEvent | null {
  const parts = line.split("\t");
  if (parts.length !== 3) return null;
  const clock = Number(parts[0]);
  if (!Number.isFinite(clock)) return null;
  let payload: unknown;
  try {
    payload = JSON.parse(parts[2]);
  } catch {
    return null;
  }
  if (typeof payload !== "object" || payload === null) return null;
  return { seq, clock, kind: parts[1], payload: payload as Record<string, unknown> };
}

export type ConfirmAction = "loaded" | "unloaded";

export interface FeedItem {
  kind: "event" | "gap";
  event?: LogEvent;
  missed?: number;
}

const LOAD_PROMPT = "please load the object";
const UNLOAD_PROMPT = "please unload the object";

export class Store {
  status: Status | null = null;
  tasks = new Map<number, TaskRow>();
  feed: FeedItem[] = [];
  trail: Array<[number, number]> = [];
  charging = false;
  /** Which confirmation the last prompt asked for; gated by exec_state. */
  private prompt: ConfirmAction | null = null;
  /** Set when a TaskTransition arrives, cleared by the task-table refresh. */
  tasksStale = false;

  readonly feedLimit = 500;
  readonly trailLimit = 600;

  applyStatus(s: Status): void {
    this.status = s;
    const [x, y] = s.pose_estimate;
    const last = this.trail[this.trail.length - 1];
    if (!last || last[0] !== x || last[1] !== y) {
      this.trail.push([x, y]);
      if (this.trail.length > this.trailLimit) this.trail.shift();
    }
    if (s.exec_state !== "awaiting_confirmation") this.prompt = null;
  }

  applyEvent(ev: LogEvent): void {
    this.pushFeed({ kind: "event", event: ev });
    switch (ev.kind) {
      case "Utterance": {
        const text = ev.payload["text"];
        if (text === LOAD_PROMPT) this.prompt = "loaded";
        else if (text === UNLOAD_PROMPT) this.prompt = "unloaded";
        break;
      }
      case "TaskTransition": {
        const id = ev.payload["task"];
        const to = ev.payload["to"];
        if (typeof id === "number" && typeof to === "string") {
          const row = this.tasks.get(id);
          if (row && isTaskStatus(to)) {
            row.status = to;
            if (typeof ev.payload["reason"] === "string")
              row.reason = ev.payload["reason"];
            if ("result" in ev.payload) row.result = ev.payload["result"];
          }
        }
        this.tasksStale = true;
        break;
      }
      case "ChargeStart":
        this.charging = true;
        break;
      case "ChargeEnd":
        this.charging = false;
        break;
    }
  }

  applyGap(missed: number): void {
    this.pushFeed({ kind: "gap", missed });
  }

  private pushFeed(item: FeedItem): void {
    this.feed.push(item);
    if (this.feed.length > this.feedLimit) this.feed.shift();
  }

  setTasks(rows: TaskRow[]): void {
    this.tasks = new Map(rows.map((r) => [r.id, r]));
    this.tasksStale = false;
  }

  upsertTask(row: TaskRow): void {
    this.tasks.set(row.id, row);
  }

  removeTask(id: number): void {
    this.tasks.delete(id);
  }

  sortedTasks(): TaskRow[] {
    return [...this.tasks.values()].sort((a, b) => a.id - b.id);
  }

  /** The confirm button to show, or null. Buttons appear only while the
   * executive is actually blocked awaiting that confirmation. */
  confirmAction(): ConfirmAction | null {
    if (this.status?.exec_state !== "awaiting_confirmation") return null;
    return this.prompt;
  }

  isCharging(): boolean {
    return this.charging || this.status?.exec_state === "charging";
  }

  batteryLabel(): string {
    const frac = this.status?.battery_fraction;
    if (frac === undefined) return "–";
    const pct = `${Math.round(frac * 100)}%`;
    return this.isCharging() ? `${pct} (charging)` : pct;
  }
}

function isTaskStatus(s: string): s is TaskStatus {
  return s === "Queued" || s === "Active" || s === "Succeeded" || s === "Failed";
}
