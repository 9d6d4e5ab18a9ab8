"""Evaluation procedures: goal-achievement detection, plan-horizon metrics,
4-way procedural plan selection, and cost-curve export.

Goal-achievement detection scores every prefix of a gold-plus-distractors
step sequence and checks that the cost minimum lands exactly at the end of
the gold plan. All argmin ties break toward the smallest index.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, IO, Sequence

from .trajectory import RenderOptions, Step, Trajectory, render_critic_text

__all__ = [
    "EvalError",
    "LengthMismatch",
    "GadCase",
    "GadCaseResult",
    "GadReport",
    "WpItem",
    "VpaPrediction",
    "eval_gad",
    "chance_accuracy",
    "vpa_metrics",
    "eval_wp",
    "export_cost_curves",
    "load_gad_cases",
    "load_wp_items",
    "load_vpa_predictions",
]

TextScorer = Callable[[str, str], float]


class EvalError(ValueError):
    pass


class LengthMismatch(EvalError):
    pass


@dataclass(frozen=True)
class GadCase:
    """A reference plan that achieves the goal plus appended distractors."""

    goal_text: str
    interpretation: str
    gold: tuple[Step, ...]
    distractors: tuple[Step, ...]

    def __post_init__(self) -> None:
        if len(self.gold) < 1 or len(self.distractors) < 1:
            raise EvalError("need at least one gold and one distractor step")


@dataclass(frozen=True)
class GadCaseResult:
    case_id: int
    n_gold: int
    n_total: int
    argmin_k: int
    hit: bool
    costs: tuple[float, ...]


@dataclass(frozen=True)
class GadReport:
    accuracy: float
    cases: tuple[GadCaseResult, ...]


def _case_trajectory(case: GadCase) -> Trajectory:
    return Trajectory(goal=case.goal_text, interpretation=case.interpretation,
                      steps=case.gold + case.distractors)


def eval_gad(scorer: TextScorer, cases: Sequence[GadCase],
             opts: RenderOptions = RenderOptions()) -> GadReport:
    """Score all prefixes per case; a hit is argmin cost at k = n_gold."""
    if not cases:
        raise EvalError("no cases")
    results = []
    hits = 0
    for cid, case in enumerate(cases):
        traj = _case_trajectory(case)
        goal_text, _ = render_critic_text(traj, 0, opts)
        n_total = len(traj.steps)
        costs = []
        for k in range(1, n_total + 1):
            _, traj_text = render_critic_text(traj, k, opts)
            costs.append(scorer(goal_text, traj_text))
        argmin_k = min(range(n_total), key=lambda i: (costs[i], i)) + 1
        hit = argmin_k == len(case.gold)
        hits += hit
        results.append(GadCaseResult(case_id=cid, n_gold=len(case.gold), n_total=n_total,
                                     argmin_k=argmin_k, hit=hit, costs=tuple(costs)))
    return GadReport(accuracy=hits / len(cases), cases=tuple(results))


def chance_accuracy(cases: Sequence[GadCase]) -> float:
    """Expected accuracy of a uniform-random argmin: mean of 1/sequence length."""
    if not cases:
        raise EvalError("no cases")
    return sum(1.0 / (len(c.gold) + len(c.distractors)) for c in cases) / len(cases)


@dataclass(frozen=True)
class VpaPrediction:
    predicted: tuple[str, ...]
    gold: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.predicted) != len(self.gold):
            raise LengthMismatch(
                f"predicted length {len(self.predicted)} != gold length {len(self.gold)}")


def vpa_metrics(preds: Sequence[VpaPrediction]) -> dict[str, float]:
    """Plan-level SR, step-level mAcc, and set-IoU over a fixed horizon."""
    if not preds:
        raise EvalError("no predictions")
    horizon = len(preds[0].gold)
    for p in preds:
        if len(p.gold) != horizon:
            raise LengthMismatch("mixed horizons within one run")
    sr = 0.0
    macc = 0.0
    miou = 0.0
    for p in preds:
        matches = sum(a == b for a, b in zip(p.predicted, p.gold))
        sr += matches == horizon
        macc += matches / horizon
        ps, gs = set(p.predicted), set(p.gold)
        miou += len(ps & gs) / len(ps | gs)
    n = len(preds)
    return {"SR": sr / n, "mAcc": macc / n, "mIoU": miou / n}


@dataclass(frozen=True)
class WpItem:
    """Four candidate action plans, exactly one correctly ordered."""

    goal_text: str
    candidates: tuple[tuple[str, ...], ...]
    correct: int

    def __post_init__(self) -> None:
        if len(self.candidates) != 4:
            raise EvalError(f"expected 4 candidates, got {len(self.candidates)}")
        if not 0 <= self.correct < 4:
            raise EvalError("correct index out of range")


def _render_candidate(steps: Sequence[str]) -> str:
    return "\n".join(f"{i}. Action: {a}" for i, a in enumerate(steps, start=1))


def eval_wp(scorer: TextScorer, items: Sequence[WpItem]) -> float:
    """Fraction of items where the lowest-cost candidate is the correct one."""
    if not items:
        raise EvalError("no items")
    hits = 0
    for item in items:
        costs = [scorer(item.goal_text, _render_candidate(c)) for c in item.candidates]
        pick = min(range(len(costs)), key=lambda i: (costs[i], i))
        hits += pick == item.correct
    return hits / len(items)


def export_cost_curves(report: GadReport, sink: IO[str] | str) -> None:
    """Write per-prefix cost rows: case id, percent of gold progress (runs
    past 100 into the distractor tail), per-case min-max normalized cost
    (flat curves map to 0), and the argmin flag."""
    close = False
    if isinstance(sink, str):
        sink = open(sink, "w", encoding="utf-8", newline="")
        close = True
    try:
        writer = csv.writer(sink)
        writer.writerow(["case_id", "progress_pct", "normalized_cost", "is_argmin"])
        for case in report.cases:
            lo = min(case.costs)
            span = max(case.costs) - lo
            for k, cost in enumerate(case.costs, start=1):
                norm = (cost - lo) / span if span > 0 else 0.0
                writer.writerow([case.case_id, round(100.0 * k / case.n_gold, 6),
                                 round(norm, 9), int(k == case.argmin_k)])
    finally:
        if close:
            sink.close()


def _steps_of(rows: Sequence[dict]) -> tuple[Step, ...]:
    return tuple(Step(action=r["action"], state=r.get("state", "")) for r in rows)


def load_gad_cases(text: str) -> list[GadCase]:
    """Read GAD JSONL rows {goal, interpretation, gold:[{action,state}],
    distractors:[{action,state}]}."""
    cases = []
    for ln in text.splitlines():
        if not ln.strip():
            continue
        row = json.loads(ln)
        cases.append(GadCase(goal_text=row["goal"], interpretation=row.get("interpretation", ""),
                             gold=_steps_of(row["gold"]), distractors=_steps_of(row["distractors"])))
    return cases


def load_wp_items(text: str) -> list[WpItem]:
    """Read WP JSONL rows {goal, candidates:[[action,...] x4], correct}."""
    items = []
    for ln in text.splitlines():
        if not ln.strip():
            continue
        row = json.loads(ln)
        items.append(WpItem(goal_text=row["goal"],
                            candidates=tuple(tuple(c) for c in row["candidates"]),
                            correct=int(row["correct"])))
    return items


def load_vpa_predictions(text: str) -> list[VpaPrediction]:
    """Read VPA JSONL rows {pred:[...], gold:[...]}."""
    preds = []
    for ln in text.splitlines():
        if not ln.strip():
            continue
        row = json.loads(ln)
        preds.append(VpaPrediction(predicted=tuple(str(x) for x in row["pred"]),
                                   gold=tuple(str(x) for x in row["gold"])))
    return preds
