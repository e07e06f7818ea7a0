import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, NetworkError } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

describe("ApiClient", () => {
  it("schedules a task and returns the id", async () => {
    const calls: Array<{ url: string; init?: RequestInit }> = [];
    const api = new ApiClient("", async (url, init) => {
      calls.push({ url, init });
      return jsonResponse({ id: 3 }, 201);
    });
    const out = await api.createTask({
      kind: "delivery",
      params: { pickup: [1, 1], dropoff: [2, 2] },
    });
    expect(out).toEqual({ id: 3 });
    expect(calls[0].url).toBe("/api/tasks");
    expect(calls[0].init?.method).toBe("POST");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({
      kind: "delivery",
      params: { pickup: [1, 1], dropoff: [2, 2] },
    });
  });

  it("surfaces the server's error string verbatim", async () => {
    const api = new ApiClient("", async () =>
      jsonResponse({ error: "params.dropoff must be an [x, y] point" }, 400),
    );
    const err = await api
      .createTask({ kind: "delivery", params: {} })
      .catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(400);
    expect(err.message).toBe("params.dropoff must be an [x, y] point");
  });

  it("keeps the status code when the error body is not JSON", async () => {
    const api = new ApiClient(
      "",
      async () => new Response("boom", { status: 502 }),
    );
    const err = await api.status().catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.message).toBe("502");
  });

  it("wraps connection failures as NetworkError", async () => {
    const api = new ApiClient("", async () => {
      throw new TypeError("fetch failed");
    });
    const err = await api.tasks().catch((e) => e);
    expect(err).toBeInstanceOf(NetworkError);
  });

  it("posts the confirm action", async () => {
    let posted: unknown;
    const api = new ApiClient("", async (_url, init) => {
      posted = JSON.parse(String(init?.body));
      return jsonResponse({ status: "ok" });
    });
    await api.confirm("loaded");
    expect(posted).toEqual({ action: "loaded" });
  });

  it("fetches the map as text", async () => {
    const api = new ApiClient(
      "",
      async () => new Response("2 2 0.5\n..\n..\n", { status: 200 }),
    );
    expect(await api.mapText()).toBe("2 2 0.5\n..\n..\n");
  });
});
