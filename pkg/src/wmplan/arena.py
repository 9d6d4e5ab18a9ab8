"""Pairwise human-preference arena: scheduling, Elo scoring, agreement stats.

Battles are served uniformly over (dataset, model-pair) setups, the winner
of each recorded battle gains K * (1 - expected score) with the loser losing
the same amount (zero-sum), and the append-only battle log is the single
source of truth: replaying it from an empty state reproduces the ratings
exactly.
"""

from __future__ import annotations

import json
import math
import random
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

__all__ = [
    "ArenaError",
    "Exhausted",
    "UnknownBattle",
    "InvalidWinner",
    "DuplicateSubmission",
    "DegenerateMarginals",
    "ArenaConfig",
    "Setup",
    "Battle",
    "BattleRecord",
    "ArenaState",
    "elo_update",
    "fleiss_kappa",
    "raw_agreement",
    "load_inventory",
    "load_log",
]


class ArenaError(ValueError):
    pass


class Exhausted(ArenaError):
    pass


class UnknownBattle(ArenaError):
    pass


class InvalidWinner(ArenaError):
    pass


class DuplicateSubmission(ArenaError):
    pass


class DegenerateMarginals(ArenaError):
    pass


def elo_update(r_winner: float, r_loser: float, k: float) -> tuple[float, float]:
    """One zero-sum Elo step: winner gains k * (1 - expected score)."""
    expected = 1.0 / (1.0 + 10.0 ** ((r_loser - r_winner) / 400.0))
    delta = k * (1.0 - expected)
    return r_winner + delta, r_loser - delta


@dataclass(frozen=True)
class ArenaConfig:
    models: tuple[str, ...]
    datasets: tuple[str, ...]
    initial_rating: float = 1000.0
    k_factor: float = 32.0
    seed: int = 0
    pending_ttl: float = 1800.0

    def __post_init__(self) -> None:
        if len(set(self.models)) < 2:
            raise ArenaError("need at least 2 distinct models")
        if self.k_factor <= 0:
            raise ArenaError("K must be > 0")


@dataclass(frozen=True)
class Setup:
    """A (dataset, unordered model pair) battle configuration."""

    dataset: str
    pair: tuple[str, str]

    def __post_init__(self) -> None:
        if self.pair[0] == self.pair[1]:
            raise ArenaError("setup pair members must be distinct")
        object.__setattr__(self, "pair", tuple(sorted(self.pair)))


@dataclass(frozen=True)
class Battle:
    """A served battle: side assignment fixed, model identities withheld
    from annotators."""

    battle_id: str
    setup: Setup
    goal_id: str
    model_a: str
    model_b: str
    plan_a: str
    plan_b: str
    context_ref: str = ""

    def side_of(self, model: str) -> str:
        if model == self.model_a:
            return "A"
        if model == self.model_b:
            return "B"
        raise InvalidWinner(f"{model!r} is not in this battle")

    def model_of(self, side: str) -> str:
        if side == "A":
            return self.model_a
        if side == "B":
            return self.model_b
        raise InvalidWinner(f"side must be 'A' or 'B', got {side!r}")


@dataclass(frozen=True)
class BattleRecord:
    seq: int
    battle_id: str
    dataset: str
    goal_id: str
    model_a: str
    model_b: str
    winner: str
    annotator: str
    timestamp: float

    def to_json(self) -> str:
        return json.dumps({
            "seq": self.seq, "battle_id": self.battle_id, "dataset": self.dataset,
            "goal_id": self.goal_id, "model_a": self.model_a, "model_b": self.model_b,
            "winner": self.winner, "annotator": self.annotator, "timestamp": self.timestamp,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BattleRecord":
        row = json.loads(text)
        return cls(seq=int(row["seq"]), battle_id=row["battle_id"], dataset=row["dataset"],
                   goal_id=row["goal_id"], model_a=row["model_a"], model_b=row["model_b"],
                   winner=row["winner"], annotator=row["annotator"],
                   timestamp=float(row["timestamp"]))


# Inventory maps (dataset, goal_id, model) -> plan markup; (dataset, goal_id,
# "") -> optional context text.
Inventory = Mapping[tuple[str, str, str], str]


def load_inventory(root: str | Path) -> dict[tuple[str, str, str], str]:
    """Scan a plan directory laid out as <dataset>/<goal_id>/<model>.txt,
    with an optional context.txt per goal."""
    root = Path(root)
    inventory: dict[tuple[str, str, str], str] = {}
    for dataset_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for goal_dir in sorted(p for p in dataset_dir.iterdir() if p.is_dir()):
            for plan_file in sorted(goal_dir.glob("*.txt")):
                text = plan_file.read_text(encoding="utf-8")
                model = "" if plan_file.stem == "context" else plan_file.stem
                inventory[(dataset_dir.name, goal_dir.name, model)] = text
    return inventory


@dataclass
class _Pending:
    battle: Battle
    created: float


class ArenaState:
    """Mutable arena: ratings, scheduling counters, pending battles, log.

    One writer at a time (an internal lock serializes mutations); reads of
    the leaderboard are cheap snapshots.
    """

    def __init__(self, cfg: ArenaConfig, inventory: Inventory,
                 log_path: str | Path | None = None) -> None:
        self.cfg = cfg
        self.inventory = dict(inventory)
        self.log_path = Path(log_path) if log_path else None
        self.ratings: dict[str, float] = {m: cfg.initial_rating for m in cfg.models}
        self.log: list[BattleRecord] = []
        self.served: Counter[Setup] = Counter()
        self.used_goals: dict[Setup, set[str]] = {}
        self.pending: dict[str, _Pending] = {}
        self.agreement: dict[tuple[str, str, tuple[str, str]], dict[str, str]] = {}
        self.wins: Counter[tuple[str, str]] = Counter()        # (dataset, model)
        self.battles_in: Counter[tuple[str, str]] = Counter()  # (dataset, model)
        self._rng = random.Random(cfg.seed)
        self._battle_counter = 0
        self._lock = threading.RLock()
        self.setups = self._derive_setups()

    def _derive_setups(self) -> list[Setup]:
        setups = []
        models = sorted(set(self.cfg.models))
        for dataset in sorted(set(self.cfg.datasets)):
            for i in range(len(models)):
                for j in range(i + 1, len(models)):
                    setups.append(Setup(dataset=dataset, pair=(models[i], models[j])))
        return setups

    def _goals_for(self, setup: Setup) -> list[str]:
        m1, m2 = setup.pair
        goals = sorted({
            goal for (ds, goal, model) in self.inventory
            if ds == setup.dataset and model == m1
            and (setup.dataset, goal, m2) in self.inventory
        })
        return goals

    def _available_goals(self, setup: Setup) -> list[str]:
        used = self.used_goals.get(setup, set())
        pending = {p.battle.goal_id for p in self.pending.values() if p.battle.setup == setup}
        return [g for g in self._goals_for(setup) if g not in used and g not in pending]

    def _expire_pending(self, now: float) -> None:
        stale = [bid for bid, p in self.pending.items()
                 if now - p.created > self.cfg.pending_ttl]
        for bid in stale:
            del self.pending[bid]

    def next_battle(self, now: float | None = None) -> Battle:
        """Serve a battle from the least-served setup (seeded tie-break),
        with a seeded coin for the Plan A / Plan B side assignment."""
        with self._lock:
            now = time.time() if now is None else now
            self._expire_pending(now)
            candidates = [s for s in self.setups if self._available_goals(s)]
            if not candidates:
                raise Exhausted("no setup has unserved inventory")

            def load(s: Setup) -> int:
                in_flight = sum(1 for p in self.pending.values() if p.battle.setup == s)
                return self.served[s] + in_flight

            low = min(load(s) for s in candidates)
            pool = [s for s in candidates if load(s) == low]
            setup = pool[self._rng.randrange(len(pool))]
            goals = self._available_goals(setup)
            goal = goals[self._rng.randrange(len(goals))]
            first_is_a = self._rng.random() < 0.5
            model_a, model_b = setup.pair if first_is_a else setup.pair[::-1]
            self._battle_counter += 1
            battle = Battle(
                battle_id=f"b{self._battle_counter:06d}",
                setup=setup,
                goal_id=goal,
                model_a=model_a,
                model_b=model_b,
                plan_a=self.inventory[(setup.dataset, goal, model_a)],
                plan_b=self.inventory[(setup.dataset, goal, model_b)],
                context_ref=self.inventory.get((setup.dataset, goal, ""), ""),
            )
            self.pending[battle.battle_id] = _Pending(battle=battle, created=now)
            return battle

    def record_choice(self, battle_id: str, winner: str, annotator: str,
                      now: float | None = None) -> BattleRecord:
        """Commit an annotator's choice: assigns the next seq, applies the
        Elo update, and advances the scheduling counters."""
        with self._lock:
            now = time.time() if now is None else now
            pending = self.pending.get(battle_id)
            if pending is None:
                if any(r.battle_id == battle_id for r in self.log):
                    raise DuplicateSubmission(f"battle {battle_id} already recorded")
                raise UnknownBattle(f"no pending battle {battle_id}")
            battle = pending.battle
            if winner not in battle.setup.pair:
                raise InvalidWinner(f"{winner!r} is not one of {battle.setup.pair}")
            record = BattleRecord(
                seq=len(self.log) + 1,
                battle_id=battle_id,
                dataset=battle.setup.dataset,
                goal_id=battle.goal_id,
                model_a=battle.model_a,
                model_b=battle.model_b,
                winner=winner,
                annotator=annotator,
                timestamp=now,
            )
            del self.pending[battle_id]
            self._apply(record)
            if self.log_path is not None:
                with open(self.log_path, "a", encoding="utf-8") as fh:
                    fh.write(record.to_json() + "\n")
            return record

    def _apply(self, record: BattleRecord) -> None:
        setup = Setup(dataset=record.dataset, pair=(record.model_a, record.model_b))
        loser = record.model_b if record.winner == record.model_a else record.model_a
        self.ratings[record.winner], self.ratings[loser] = elo_update(
            self.ratings[record.winner], self.ratings[loser], self.cfg.k_factor)
        self.log.append(record)
        self.served[setup] += 1
        self.used_goals.setdefault(setup, set()).add(record.goal_id)
        for model in setup.pair:
            self.battles_in[(record.dataset, model)] += 1
        self.wins[(record.dataset, record.winner)] += 1
        item = (record.dataset, record.goal_id, setup.pair)
        self.agreement.setdefault(item, {})[record.annotator] = record.winner

    def replay(self, records: Iterable[BattleRecord]) -> None:
        """Fold an ordered battle log into this (fresh) state."""
        for record in sorted(records, key=lambda r: r.seq):
            expected = len(self.log) + 1
            if record.seq != expected:
                raise ArenaError(f"log gap: expected seq {expected}, got {record.seq}")
            self._apply(record)
        self._battle_counter = len(self.log)

    def leaderboard(self) -> list[dict]:
        """Per-model Elo (display-rounded), battle counts, and per-dataset
        win rates (None where the model has no battles in a dataset)."""
        rows = []
        for model in sorted(self.cfg.models, key=lambda m: (-self.ratings[m], m)):
            win_rates: dict[str, float | None] = {}
            for dataset in self.cfg.datasets:
                n = self.battles_in[(dataset, model)]
                win_rates[dataset] = (100.0 * self.wins[(dataset, model)] / n) if n else None
            rows.append({
                "model": model,
                "elo": round(self.ratings[model]),
                "rating": self.ratings[model],
                "battles": sum(self.battles_in[(d, model)] for d in self.cfg.datasets),
                "win_rates": win_rates,
            })
        return rows

    def export_log(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.log)

    def agreement_rows(self) -> list[list[str]]:
        """Choice matrix over the items whose annotator count matches the
        most common multi-annotator count (Fleiss needs equal raters)."""
        counts = Counter(len(v) for v in self.agreement.values() if len(v) >= 2)
        if not counts:
            return []
        n = counts.most_common(1)[0][0]
        rows = []
        for item in sorted(self.agreement):
            votes = self.agreement[item]
            if len(votes) == n:
                rows.append([votes[a] for a in sorted(votes)])
        return rows


def load_log(path: str | Path) -> list[BattleRecord]:
    text = Path(path).read_text(encoding="utf-8")
    return [BattleRecord.from_json(ln) for ln in text.splitlines() if ln.strip()]


def _check_matrix(matrix: Sequence[Sequence[str]]) -> int:
    if not matrix:
        raise ArenaError("empty agreement matrix")
    n = len(matrix[0])
    if n < 2:
        raise ArenaError("every item needs >= 2 annotators")
    if any(len(row) != n for row in matrix):
        raise ArenaError("ragged agreement matrix")
    return n


def fleiss_kappa(matrix: Sequence[Sequence[str]]) -> float:
    """Chance-corrected agreement for a fixed number of raters per item."""
    n = _check_matrix(matrix)
    categories = sorted({c for row in matrix for c in row})
    totals = Counter()
    p_bar = 0.0
    for row in matrix:
        counts = Counter(row)
        totals.update(counts)
        p_bar += (sum(c * c for c in counts.values()) - n) / (n * (n - 1))
    p_bar /= len(matrix)
    total_votes = len(matrix) * n
    p_e = sum((totals[c] / total_votes) ** 2 for c in categories)
    if p_e >= 1.0:
        raise DegenerateMarginals("all votes in a single category")
    return (p_bar - p_e) / (1.0 - p_e)


def raw_agreement(matrix: Sequence[Sequence[str]]) -> float:
    """Mean percentage of agreeing annotator pairs per item."""
    n = _check_matrix(matrix)
    pairs_per_item = n * (n - 1) / 2
    total = 0.0
    for row in matrix:
        counts = Counter(row)
        agreeing = sum(c * (c - 1) / 2 for c in counts.values())
        total += agreeing / pairs_per_item
    return 100.0 * total / len(matrix)
