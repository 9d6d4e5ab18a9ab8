import { afterEach, describe, expect, it, vi } from "vitest";

import {
  ArenaApi,
  BackendUnavailable,
  DuplicateSubmission,
  ExhaustedError,
  ValidationError,
} from "../src/api.js";

function stubFetch(status: number, body: unknown = {}) {
  const fn = vi.fn(async () => ({
    ok: status >= 200 && status < 300,
    status,
    json: async () => body,
  })) as unknown as typeof fetch;
  vi.stubGlobal("fetch", fn);
  return fn as ReturnType<typeof vi.fn>;
}

afterEach(() => vi.unstubAllGlobals());

describe("fetchNextBattle", () => {
  it("returns the payload on 200", async () => {
    const battle = {
      battle_id: "b000001",
      goal: "g1",
      context_ref: "",
      plan_a: ["x"],
      plan_b: ["y"],
    };
    stubFetch(200, battle);
    await expect(new ArenaApi("http://h").fetchNextBattle()).resolves.toEqual(battle);
  });

  it("maps 404 to ExhaustedError", async () => {
    stubFetch(404, { detail: "exhausted" });
    await expect(new ArenaApi().fetchNextBattle()).rejects.toBeInstanceOf(ExhaustedError);
  });

  it("maps network failure to BackendUnavailable", async () => {
    vi.stubGlobal("fetch", vi.fn(async () => {
      throw new TypeError("connection refused");
    }));
    await expect(new ArenaApi().fetchNextBattle()).rejects.toBeInstanceOf(BackendUnavailable);
  });

  it("maps 500 to BackendUnavailable", async () => {
    stubFetch(500);
    await expect(new ArenaApi().fetchNextBattle()).rejects.toBeInstanceOf(BackendUnavailable);
  });
});

describe("submitChoice", () => {
  const choice = { battle_id: "b000007", winner: "A" as const, annotator: "ann1" };

  it("posts the winner side and annotator", async () => {
    const fn = stubFetch(200);
    await new ArenaApi("http://h").submitChoice(choice);
    expect(fn).toHaveBeenCalledTimes(1);
    const [url, init] = fn.mock.calls[0] as [string, RequestInit];
    expect(url).toBe("http://h/api/battle/b000007/choice");
    expect(init.method).toBe("POST");
    expect(JSON.parse(init.body as string)).toEqual({ winner: "A", annotator: "ann1" });
  });

  it("maps 409 to DuplicateSubmission", async () => {
    stubFetch(409);
    await expect(new ArenaApi().submitChoice(choice)).rejects.toBeInstanceOf(DuplicateSubmission);
  });

  it("maps 422 to ValidationError", async () => {
    stubFetch(422);
    await expect(new ArenaApi().submitChoice(choice)).rejects.toBeInstanceOf(ValidationError);
  });
});

describe("fetchLeaderboard", () => {
  it("returns rows verbatim", async () => {
    const payload = {
      datasets: ["coin"],
      models: [
        { model: "m1", elo: 1016, rating: 1016.0, battles: 1, win_rates: { coin: 100.0 } },
      ],
    };
    stubFetch(200, payload);
    await expect(new ArenaApi().fetchLeaderboard()).resolves.toEqual(payload);
  });
});
