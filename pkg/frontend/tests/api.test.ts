import { describe, expect, it } from "vitest";

import { ApiError, ScribeApi } from "../src/api.js";

interface RecordedCall {
  url: string;
  method: string;
  body: unknown;
}

interface CannedReply {
  status?: number;
  body?: unknown;
  text?: string;
}

function stubFetch(replies: CannedReply[]) {
  const calls: RecordedCall[] = [];
  const fn = (async (url: RequestInfo | URL, init?: RequestInit) => {
    calls.push({
      url: String(url),
      method: init?.method ?? "GET",
      body: init?.body ? JSON.parse(String(init.body)) : null,
    });
    const reply = replies.shift() ?? { body: {} };
    return new Response(reply.text ?? JSON.stringify(reply.body ?? {}), {
      status: reply.status ?? 200,
      headers: { "Content-Type": "application/json" },
    });
  }) as typeof fetch;
  return { fn, calls };
}

const BASE = "http://example.test";

describe("request shapes", () => {
  it("create posts the session meta as-is", async () => {
    const { fn, calls } = stubFetch([{ body: { id: "s1" } }]);
    const api = new ScribeApi(BASE, fn);
    await api.createSession({
      title: "T", genre: "mystery", background: "b", mode: "fiction",
    });
    expect(calls).toEqual([{
      url: `${BASE}/sessions`,
      method: "POST",
      body: { title: "T", genre: "mystery", background: "b", mode: "fiction" },
    }]);
  });

  it("step by index carries exactly plan_index", async () => {
    const { fn, calls } = stubFetch([{}]);
    await new ScribeApi(BASE, fn).step("s1", { plan_index: 2 });
    expect(calls[0].url).toBe(`${BASE}/sessions/s1/step`);
    expect(calls[0].body).toEqual({ plan_index: 2 });
  });

  it("step by text carries exactly plan_text", async () => {
    const { fn, calls } = stubFetch([{}]);
    await new ScribeApi(BASE, fn).step("s1", { plan_text: "I open the door." });
    expect(calls[0].body).toEqual({ plan_text: "I open the door." });
  });

  it("autorun posts n_steps", async () => {
    const { fn, calls } = stubFetch([{}]);
    await new ScribeApi(BASE, fn).autorun("s1", 7);
    expect(calls[0]).toMatchObject({
      url: `${BASE}/sessions/s1/autorun`,
      method: "POST",
      body: { n_steps: 7 },
    });
  });

  it("short-term edit is a PATCH with kind and text", async () => {
    const { fn, calls } = stubFetch([{}]);
    await new ScribeApi(BASE, fn).editShortTerm("s1", "New memory.");
    expect(calls[0]).toMatchObject({
      url: `${BASE}/sessions/s1`,
      method: "PATCH",
      body: { kind: "replace_short_term", text: "New memory." },
    });
  });

  it("plan edit carries the 0-based index", async () => {
    const { fn, calls } = stubFetch([{}]);
    await new ScribeApi(BASE, fn).editPlan("s1", 1, "Edited.");
    expect(calls[0].body).toEqual(
      { kind: "replace_plan", index: 1, text: "Edited." });
  });

  it("memory search sends query and k as query params", async () => {
    const { fn, calls } = stubFetch([{ body: { entries: [] } }]);
    const hits = await new ScribeApi(BASE, fn).getMemory("s1", "dragon", 3);
    const url = new URL(calls[0].url);
    expect(url.pathname).toBe("/sessions/s1/memory");
    expect(url.searchParams.get("query")).toBe("dragon");
    expect(url.searchParams.get("k")).toBe("3");
    expect(hits).toEqual([]);
  });

  it("export fetches plain text", async () => {
    const { fn, calls } = stubFetch([{ text: "one\n\ntwo" }]);
    const text = await new ScribeApi(BASE, fn).exportTranscript("s1");
    expect(text).toBe("one\n\ntwo");
    expect(calls[0].url).toBe(`${BASE}/sessions/s1/export?format=plain`);
  });
});

describe("error mapping", () => {
  it("server errors become typed ApiErrors", async () => {
    const { fn } = stubFetch([
      { status: 409, body: { detail: "busy", error: "StepInFlightError" } },
    ]);
    const err = await new ScribeApi(BASE, fn)
      .step("s1", { plan_index: 0 })
      .catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(409);
    expect((err as ApiError).code).toBe("StepInFlightError");
    expect((err as ApiError).stepInProgress).toBe(true);
  });

  it("non-JSON error bodies still produce an ApiError", async () => {
    const { fn } = stubFetch([{ status: 502, text: "<html>bad gateway</html>" }]);
    const err = await new ScribeApi(BASE, fn)
      .getSession("s1")
      .catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(502);
  });
});
