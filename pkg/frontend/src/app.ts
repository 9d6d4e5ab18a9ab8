import {
  ArenaApi,
  BackendUnavailable,
  DuplicateSubmission,
  ExhaustedError,
} from "./api.js";
import type { BattleView, LeaderboardPayload, Side } from "./types.js";

export const INSTRUCTION_BANNER =
  "You will see a short video that sets the context, then see a goal sentence. " +
  "Two alternative plans (Plan A and Plan B) generated by a model are shown. " +
  "Your job is to select the plan you would prefer to follow in order to " +
  "achieve the stated goal within the given video context.";

const VIDEO_RE = /\.(mp4|webm|mov|m4v)(\?.*)?$/i;
const IMAGE_RE = /\.(png|jpe?g|gif|webp)(\?.*)?$/i;

// ── DOM helpers ─────────────────────────────────────

type Attrs = Record<string, string | boolean | ((e: Event) => void) | null>;

function el(
  tag: string,
  attrs: Attrs = {},
  ...children: Array<string | Node | null>
): HTMLElement {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    if (v == null || v === false) continue;
    if (k === "className" && typeof v === "string") node.className = v;
    else if (k.startsWith("on") && typeof v === "function")
      node.addEventListener(k.slice(2).toLowerCase(), v as EventListener);
    else if (v === true) node.setAttribute(k, "");
    else if (typeof v === "string") node.setAttribute(k, v);
  }
  for (const c of children) {
    if (typeof c === "string") node.appendChild(document.createTextNode(c));
    else if (c) node.appendChild(c);
  }
  return node;
}

function isLikelyUrl(ref: string): boolean {
  return /^(https?:)?\/\//i.test(ref) || ref.startsWith("/");
}

export function contextNode(ref: string): HTMLElement {
  if (ref && isLikelyUrl(ref) && VIDEO_RE.test(ref)) {
    return el("video", { className: "context-media", src: ref, controls: true });
  }
  if (ref && isLikelyUrl(ref) && IMAGE_RE.test(ref)) {
    return el("img", { className: "context-media", src: ref, alt: "context" });
  }
  return el("pre", { className: "context-text" }, ref || "(no context provided)");
}

// ── App state ───────────────────────────────────────

export interface AppOptions {
  annotator: string;
  refreshMs?: number;
}

type Phase = "loading" | "battle" | "done" | "backend-error";

export interface AppState {
  phase: Phase;
  battle: BattleView | null;
  selected: Side | null;
  submitting: boolean;
  notice: string;
}

export class ArenaApp {
  readonly state: AppState = {
    phase: "loading",
    battle: null,
    selected: null,
    submitting: false,
    notice: "",
  };

  private submittedIds = new Set<string>();
  private refreshTimer: ReturnType<typeof setInterval> | null = null;
  private keyHandler = (e: KeyboardEvent) => this.onKey(e);

  constructor(
    private root: HTMLElement,
    private api: ArenaApi,
    private opts: AppOptions,
  ) {}

  async start(): Promise<void> {
    document.addEventListener("keydown", this.keyHandler);
    await this.refreshLeaderboard();
    const refreshMs = this.opts.refreshMs ?? 15000;
    if (refreshMs > 0) {
      this.refreshTimer = setInterval(() => void this.refreshLeaderboard(), refreshMs);
    }
    await this.advance();
  }

  stop(): void {
    document.removeEventListener("keydown", this.keyHandler);
    if (this.refreshTimer) clearInterval(this.refreshTimer);
  }

  // ── battle flow ─────────────────────────────────

  async advance(): Promise<void> {
    this.state.phase = "loading";
    this.state.battle = null;
    this.state.selected = null;
    this.state.submitting = false;
    this.render();
    try {
      this.state.battle = await this.api.fetchNextBattle();
      this.state.phase = "battle";
    } catch (err) {
      if (err instanceof ExhaustedError) {
        this.state.phase = "done";
      } else {
        this.state.phase = "backend-error";
        this.state.notice = "Backend unavailable.";
      }
    }
    this.render();
  }

  selectSide(side: Side): void {
    if (this.state.phase !== "battle" || this.state.submitting) return;
    this.state.selected = side;
    this.render();
  }

  async submit(): Promise<void> {
    const { battle, selected } = this.state;
    if (this.state.phase !== "battle" || !battle || !selected) return;
    if (this.state.submitting || this.submittedIds.has(battle.battle_id)) return;
    this.state.submitting = true;
    this.render();
    try {
      await this.api.submitChoice({
        battle_id: battle.battle_id,
        winner: selected,
        annotator: this.opts.annotator,
      });
      this.submittedIds.add(battle.battle_id);
      this.state.notice = "";
    } catch (err) {
      if (err instanceof DuplicateSubmission) {
        // someone already decided this battle; move on without blocking
        this.submittedIds.add(battle.battle_id);
        this.state.notice = "This battle was already annotated; showing the next one.";
      } else if (err instanceof BackendUnavailable) {
        // keep the selection so nothing is silently lost
        this.state.submitting = false;
        this.state.notice = "Could not reach the backend. Your choice is kept; retry.";
        this.render();
        return;
      } else {
        this.state.submitting = false;
        this.state.notice = `Submission rejected: ${String(err)}`;
        this.render();
        return;
      }
    }
    await this.refreshLeaderboard();
    await this.advance();
  }

  private onKey(e: KeyboardEvent): void {
    if (e.key === "a" || e.key === "A") this.selectSide("A");
    else if (e.key === "b" || e.key === "B") this.selectSide("B");
    else if (e.key === "Enter") void this.submit();
  }

  // ── leaderboard ─────────────────────────────────

  private leaderboard: LeaderboardPayload | null = null;

  async refreshLeaderboard(): Promise<void> {
    try {
      this.leaderboard = await this.api.fetchLeaderboard();
    } catch {
      this.leaderboard = null;
    }
    this.renderLeaderboard();
  }

  // ── rendering ───────────────────────────────────

  render(): void {
    let main = this.root.querySelector("#arena-main");
    if (!main) {
      main = el("main", { id: "arena-main" });
      this.root.appendChild(main);
      this.root.appendChild(el("aside", { id: "arena-board" }));
    }
    main.innerHTML = "";
    this.renderLeaderboard(); // masking tracks the battle phase
    main.appendChild(el("p", { className: "banner" }, INSTRUCTION_BANNER));
    const { phase, battle } = this.state;
    if (phase === "loading") {
      main.appendChild(el("p", { className: "status" }, "Loading next battle..."));
    } else if (phase === "done") {
      main.appendChild(el("h2", {}, "All battles annotated"));
      main.appendChild(el("p", {}, "There is nothing left to compare. Thank you!"));
    } else if (phase === "backend-error") {
      main.appendChild(el("p", { className: "error" }, this.state.notice));
      main.appendChild(el("button", { onclick: () => void this.advance() }, "Retry"));
    } else if (phase === "battle" && battle) {
      main.appendChild(contextNode(battle.context_ref));
      main.appendChild(el("h2", { className: "goal" }, `Goal: ${battle.goal}`));
      main.appendChild(
        el(
          "div",
          { className: "plans" },
          this.planPanel("A", battle.plan_a),
          this.planPanel("B", battle.plan_b),
        ),
      );
      const canSubmit = !!this.state.selected && !this.state.submitting;
      main.appendChild(
        el(
          "button",
          {
            id: "submit",
            disabled: !canSubmit,
            onclick: () => void this.submit(),
          },
          this.state.submitting ? "Submitting..." : "Submit preference (Enter)",
        ),
      );
      if (this.state.notice) {
        main.appendChild(el("p", { className: "notice" }, this.state.notice));
      }
    }
  }

  private planPanel(side: Side, steps: string[]): HTMLElement {
    const selected = this.state.selected === side;
    return el(
      "section",
      {
        className: `plan-panel${selected ? " selected" : ""}`,
        "data-side": side,
        onclick: () => this.selectSide(side),
      },
      el("h3", {}, `Plan ${side} `, el("span", { className: "hint" }, `(press ${side})`)),
      el("ol", {}, ...steps.map((s) => el("li", {}, s))),
    );
  }

  private renderLeaderboard(): void {
    const board = this.root.querySelector("#arena-board");
    if (!board) return;
    board.innerHTML = "";
    board.appendChild(el("h2", {}, "Leaderboard"));
    if (!this.leaderboard) {
      board.appendChild(el("p", { className: "error" }, "Leaderboard unavailable."));
      return;
    }
    // model identities stay hidden while a battle is on screen; scores and
    // win rates are shown verbatim either way
    const masked = this.state.phase === "battle" || this.state.phase === "loading";
    const { datasets, models } = this.leaderboard;
    const head = el(
      "tr",
      {},
      el("th", {}, "Model"),
      el("th", {}, "Elo"),
      el("th", {}, "Battles"),
      ...datasets.map((d) => el("th", {}, `Win % ${d}`)),
    );
    const rows = models.map((row, i) =>
      el(
        "tr",
        {},
        el("td", {}, masked ? `(model ${i + 1})` : row.model),
        el("td", {}, String(row.elo)),
        el("td", {}, String(row.battles)),
        ...datasets.map((d) => {
          const wr = row.win_rates[d];
          return el("td", {}, wr == null ? "—" : wr.toFixed(1));
        }),
      ),
    );
    board.appendChild(el("table", { id: "leaderboard" }, head, ...rows));
    if (masked) {
      board.appendChild(
        el("p", { className: "hint" }, "Model names are revealed once annotation ends."),
      );
    }
  }
}

export function createApp(root: HTMLElement, api: ArenaApi, opts: AppOptions): ArenaApp {
  return new ArenaApp(root, api, opts);
}
