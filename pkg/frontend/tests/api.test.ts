import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

interface CapturedCall {
  url: string;
  init?: RequestInit;
}

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

function clientWith(makeResponse: () => Response | Promise<Response>) {
  const calls: CapturedCall[] = [];
  const client = new ApiClient("http://svc", async (url, init) => {
    calls.push({ url, init });
    return makeResponse();
  });
  return { client, calls };
}

describe("ApiClient", () => {
  it("fetches health from its endpoint", async () => {
    const { client, calls } = clientWith(() =>
      jsonResponse({ status: "ok", exams: 12 }),
    );
    const health = await client.health();
    expect(health).toEqual({ status: "ok", exams: 12 });
    expect(calls).toHaveLength(1);
    expect(calls[0]?.url).toBe("http://svc/api/health");
    expect(calls[0]?.init?.method).toBeUndefined();
  });

  it("pages the exam listing with offset and limit", async () => {
    const page = { total: 0, offset: 40, items: [] };
    const { client, calls } = clientWith(() => jsonResponse(page));
    expect(await client.listExams(40, 20)).toEqual(page);
    expect(calls[0]?.url).toBe("http://svc/api/exams?offset=40&limit=20");
  });

  it("posts queries as JSON and returns the body untouched", async () => {
    const body = {
      mode: "two_stage",
      region: "distal_radius",
      fallback_used: false,
      stage1: [{ exam_id: "e1", score: 0.987654321 }],
      final: [{ exam_id: "e1", score: 0.987654321, global_caption: "c" }],
    };
    const { client, calls } = clientWith(() => jsonResponse(body));
    const response = await client.query({
      exam_id: "q1",
      mode: "two_stage",
      region: "distal_radius",
      k_global: 50,
      k_final: 5,
    });
    expect(response).toEqual(body);
    expect(calls[0]?.url).toBe("http://svc/api/query");
    expect(calls[0]?.init?.method).toBe("POST");
    expect(
      (calls[0]?.init?.headers as Record<string, string>)["content-type"],
    ).toBe("application/json");
    expect(JSON.parse(String(calls[0]?.init?.body))).toEqual({
      exam_id: "q1",
      mode: "two_stage",
      region: "distal_radius",
      k_global: 50,
      k_final: 5,
    });
  });

  it("posts ratings and echoes the stored record", async () => {
    const { client, calls } = clientWith(() =>
      jsonResponse({ stored: { timestamp: "t" } }, 201),
    );
    const rating = {
      query_exam_id: "q1",
      result_exam_id: "r1",
      mode: "two_stage" as const,
      score: 4,
      rater: "dr-a",
      region: "distal_ulna" as const,
    };
    await client.submitRating(rating);
    expect(calls[0]?.url).toBe("http://svc/api/ratings");
    expect(JSON.parse(String(calls[0]?.init?.body))).toEqual(rating);
  });

  it("reads the rating summary endpoint", async () => {
    const summary = {
      single_stage: { overall: 3.5 },
      two_stage: { overall: null },
    };
    const { client, calls } = clientWith(() => jsonResponse(summary));
    expect(await client.ratingsSummary()).toEqual(summary);
    expect(calls[0]?.url).toBe("http://svc/api/ratings/summary");
  });

  it("surfaces the service's error message and status", async () => {
    const { client } = clientWith(() =>
      jsonResponse({ error: "unknown exam 'zz'" }, 404),
    );
    await expect(client.query({ exam_id: "zz", mode: "single_stage" }))
      .rejects.toMatchObject({ status: 404, message: "unknown exam 'zz'" });
  });

  it("falls back to a generic message for non-JSON error bodies", async () => {
    const { client } = clientWith(
      () => new Response("<h1>boom</h1>", { status: 500 }),
    );
    await expect(client.health()).rejects.toMatchObject({
      status: 500,
      message: "request failed with status 500",
    });
  });

  it("maps network failures to status 0", async () => {
    const client = new ApiClient("http://svc", () =>
      Promise.reject(new TypeError("connect ECONNREFUSED")),
    );
    const failure = await client.health().catch((error: unknown) => error);
    expect(failure).toBeInstanceOf(ApiError);
    expect((failure as ApiError).status).toBe(0);
    expect((failure as ApiError).message).toContain("service unreachable");
  });
});
