// End-to-end: drives the real backend through the real client code in a
// scripted DOM session. Needs the Python package installed (wmplan CLI).
import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, mkdirSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ArenaApi } from "../src/api.js";
import { createApp, type ArenaApp } from "../src/app.js";

const PORT = 18000 + Math.floor(Math.random() * 10000);
const BASE = `http://127.0.0.1:${PORT}`;
const MODELS = ["modelred", "modelblue"];

function planDoc(goal: string, flavor: string): string {
  return [
    "<GOAL>", goal, "</GOAL>", "", "---", "",
    "<ACTION>", `${flavor} first step`, "</ACTION>", "",
    "<STATE>", "the step happened", "</STATE>", "", "---", "",
    "<ACTION>", `${flavor} second step`, "</ACTION>", "",
    "<STATE>", "the goal is met", "</STATE>", "", "---", "",
    "<GOAL_ACHIEVED>", "",
  ].join("\n");
}

let workdir: string;
let server: ChildProcess;

async function waitForBackend(timeoutMs = 30000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`${BASE}/api/leaderboard`);
      if (res.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
  throw new Error("backend did not come up");
}

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), "arena-e2e-"));
  const goalDir = join(workdir, "plans", "coin", "goal-1");
  mkdirSync(goalDir, { recursive: true });
  writeFileSync(join(goalDir, "context.txt"), "a short text context");
  writeFileSync(join(goalDir, "modelred.txt"), planDoc("goal-1", "quickly"));
  writeFileSync(join(goalDir, "modelblue.txt"), planDoc("goal-1", "carefully"));

  server = spawn("python3", [
    "-m", "wmplan.cli", "arena-serve",
    "--data", join(workdir, "plans"),
    "--log", join(workdir, "battles.jsonl"),
    "--host", "127.0.0.1",
    "--port", String(PORT),
    "--seed", "7",
  ], { stdio: "ignore" });
  await waitForBackend();
});

afterAll(() => {
  server?.kill("SIGTERM");
  rmSync(workdir, { recursive: true, force: true });
});

describe("arena end to end", () => {
  let app: ArenaApp;

  it("starts with both models at 1000", async () => {
    const board = await new ArenaApi(BASE).fetchLeaderboard();
    expect(board.models.map((m) => m.elo)).toEqual([1000, 1000]);
  });

  it("serves a battle whose DOM never names a model", async () => {
    document.body.innerHTML = '<div id="app"></div>';
    app = createApp(document.getElementById("app")!, new ArenaApi(BASE), {
      annotator: "e2e-annotator",
      refreshMs: 0,
    });
    await app.start();
    expect(app.state.phase).toBe("battle");
    expect(document.querySelectorAll(".plan-panel")).toHaveLength(2);
    const html = document.body.innerHTML;
    for (const name of MODELS) expect(html).not.toContain(name);
  });

  it("submits a choice and the leaderboard moves to 1016/984", async () => {
    app.selectSide("A");
    await app.submit();
    const board = await new ArenaApi(BASE).fetchLeaderboard();
    expect(board.models.map((m) => m.elo).sort((a, b) => a - b)).toEqual([984, 1016]);
    // single battle in inventory, so the session is complete and names unmask
    expect(app.state.phase).toBe("done");
    const text = document.body.textContent ?? "";
    expect(text).toContain("1016");
    expect(text).toContain("984");
    expect(text).toContain("All battles annotated");
  });

  it("rejects a second submission for the same battle server-side", async () => {
    const res = await fetch(`${BASE}/api/battle/b000001/choice`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ winner: "B", annotator: "someone-else" }),
    });
    expect(res.status).toBe(409);
  });
});
