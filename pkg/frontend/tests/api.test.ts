import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient, ServiceError } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("ApiClient", () => {
  it("posts accept bodies with session, symbol, and type", async () => {
    const fetchMock = vi.fn().mockResolvedValue(
      jsonResponse({ accepted: "a.py::7", type: "int", checker: null, reranked: [], map_size: 2 }),
    );
    vi.stubGlobal("fetch", fetchMock);
    const client = new ApiClient("");
    const response = await client.accept("s1", "a.py::7", "int");
    expect(response.map_size).toBe(2);
    const [url, init] = fetchMock.mock.calls[0];
    expect(url).toBe("/api/accept");
    expect(JSON.parse((init as RequestInit).body as string)).toEqual({
      session_id: "s1",
      symbol_id: "a.py::7",
      type: "int",
    });
  });

  it("encodes query parameters", async () => {
    const fetchMock = vi.fn().mockResolvedValue(jsonResponse({ file: "a b.py", suggestions: [] }));
    vi.stubGlobal("fetch", fetchMock);
    await new ApiClient("").suggestions("a b.py", "s 1");
    expect(fetchMock.mock.calls[0][0]).toBe(
      "/api/suggestions?file=a%20b.py&session=s%201",
    );
  });

  it("surfaces service error details with status codes", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn().mockResolvedValue(jsonResponse({ detail: "already decided" }, 409)),
    );
    const client = new ApiClient("");
    await expect(client.accept("s", "x", "int")).rejects.toMatchObject({
      status: 409,
      message: "already decided",
    });
  });

  it("wraps network failures as status-0 service errors", async () => {
    vi.stubGlobal("fetch", vi.fn().mockRejectedValue(new TypeError("offline")));
    const client = new ApiClient("");
    const err = await client.listFiles("s").catch((e) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect(err.status).toBe(0);
  });

  it("builds the export-map link for the session", () => {
    expect(new ApiClient("").exportMapUrl("abc")).toBe("/api/export-map?session=abc");
  });
});
