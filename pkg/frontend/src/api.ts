/** Typed client for the mission HTTP API (see docs/api.md). */

export interface Status {
  clock: number;
  pose_estimate: [number, number, number];
  battery_fraction: number;
  exec_state:
    | "idle"
    | "navigating"
    | "scanning"
    | "awaiting_confirmation"
    | "docking"
    | "charging";
  active_task: number | null;
  ground_truth?: [number, number, number];
}

export type TaskStatus = "Queued" | "Active" | "Succeeded" | "Failed";

export interface TaskRow {
  id: number;
  kind: string;
  params: Record<string, unknown>;
  status: TaskStatus;
  created_at: number;
  finished_at: number | null;
  result: unknown;
  reason: string | null;
}

export interface TaskRequest {
  kind: "delivery" | "target_search";
  params: Record<string, unknown>;
  reply_to?: string;
}

export interface ScenarioInfo {
  name: string;
  stations: Array<{
    id: number;
    dock_pose: [number, number, number];
    approach_pose: [number, number, number];
    marker_id: number;
  }>;
  markers: Array<{ id: number; pose: [number, number, number] }>;
  candidates: Array<[number, number]>;
}

/** Server said no; `message` is the server's error string, verbatim. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** Request never reached the server (offline, refused, aborted). */
export class NetworkError extends Error {
  constructor(cause: unknown) {
    super(cause instanceof Error ? cause.message : String(cause));
    this.name = "NetworkError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly base = "",
    private readonly fetchFn: FetchLike = (...a) => fetch(...a),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.base + path, init);
    } catch (err) {
      throw new NetworkError(err);
    }
    if (!resp.ok) {
      let message = `${resp.status}`;
      try {
        const body = await resp.json();
        if (body && typeof body.error === "string") message = body.error;
      } catch {
        /* non-JSON error body; keep the status code */
      }
      throw new ApiError(resp.status, message);
    }
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  status(): Promise<Status> {
    return this.request<Status>("/api/status");
  }

  async mapText(): Promise<string> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.base + "/api/map");
    } catch (err) {
      throw new NetworkError(err);
    }
    if (!resp.ok) throw new ApiError(resp.status, `${resp.status}`);
    return resp.text();
  }

  scenario(): Promise<ScenarioInfo> {
    return this.request<ScenarioInfo>("/api/scenario");
  }

  tasks(): Promise<TaskRow[]> {
    return this.request<TaskRow[]>("/api/tasks");
  }

  task(id: number): Promise<TaskRow> {
    return this.request<TaskRow>(`/api/tasks/${id}`);
  }

  createTask(req: TaskRequest): Promise<{ id: number }> {
    return this.post<{ id: number }>("/api/tasks", req);
  }

  cancelTask(id: number): Promise<{ status: string }> {
    return this.request<{ status: string }>(`/api/tasks/${id}`, {
      method: "DELETE",
    });
  }

  confirm(action: "loaded" | "unloaded"): Promise<{ status: string }> {
    return this.post<{ status: string }>("/api/confirm", { action });
  }

  say(text: string): Promise<{ status: string }> {
    return this.post<{ status: string }>("/api/say", { text });
  }
}
