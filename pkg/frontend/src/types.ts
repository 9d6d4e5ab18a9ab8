// Wire types of the arena HTTP API.

export interface BattleView {
  battle_id: string;
  goal: string;
  context_ref: string;
  plan_a: string[];
  plan_b: string[];
}

export type Side = "A" | "B";

export interface ChoiceSubmission {
  battle_id: string;
  winner: Side;
  annotator: string;
}

export interface LeaderboardRow {
  model: string;
  elo: number;
  rating: number;
  battles: number;
  win_rates: Record<string, number | null>;
}

export interface LeaderboardPayload {
  datasets: string[];
  models: LeaderboardRow[];
}
