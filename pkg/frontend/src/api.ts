import type { BattleView, ChoiceSubmission, LeaderboardPayload } from "./types.js";

// ── Error taxonomy ──────────────────────────────────

/** The backend could not be reached or answered 5xx. */
export class BackendUnavailable extends Error {}

/** Every battle in the inventory has been annotated. */
export class ExhaustedError extends Error {}

/** This battle id was already decided (another tab, a retry, ...). */
export class DuplicateSubmission extends Error {}

/** The server rejected the submission payload. */
export class ValidationError extends Error {}

// ── Client ──────────────────────────────────────────

export class ArenaApi {
  constructor(readonly baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async fetchNextBattle(): Promise<BattleView> {
    let res: Response;
    try {
      res = await fetch(this.url("/api/battle/next"));
    } catch (err) {
      throw new BackendUnavailable(String(err));
    }
    if (res.status === 404) throw new ExhaustedError("no battles left");
    if (!res.ok) throw new BackendUnavailable(`battle fetch failed: ${res.status}`);
    return (await res.json()) as BattleView;
  }

  async submitChoice(choice: ChoiceSubmission): Promise<void> {
    let res: Response;
    try {
      res = await fetch(this.url(`/api/battle/${choice.battle_id}/choice`), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ winner: choice.winner, annotator: choice.annotator }),
      });
    } catch (err) {
      throw new BackendUnavailable(String(err));
    }
    if (res.status === 409) throw new DuplicateSubmission(choice.battle_id);
    if (res.status === 404 || res.status === 422) {
      throw new ValidationError(`submission rejected: ${res.status}`);
    }
    if (!res.ok) throw new BackendUnavailable(`submission failed: ${res.status}`);
  }

  async fetchLeaderboard(): Promise<LeaderboardPayload> {
    let res: Response;
    try {
      res = await fetch(this.url("/api/leaderboard"));
    } catch (err) {
      throw new BackendUnavailable(String(err));
    }
    if (!res.ok) throw new BackendUnavailable(`leaderboard fetch failed: ${res.status}`);
    return (await res.json()) as LeaderboardPayload;
  }
}
