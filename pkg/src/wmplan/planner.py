"""Greedy rollout and cost-minimizing plan search over a world-model interface.

System-1 takes the top proposal every step. System-2 generates many
candidate plans, simulates their state transitions, scores every complete
plan with a critic cost plus optional guardrail penalties, and picks the
extremal one. Beam mode scores partial plans instead, keeping the best
beam-width prefixes per depth.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Protocol, Sequence

from .trajectory import Step, Trajectory

__all__ = [
    "PlannerError",
    "WorldModelFailure",
    "NoCandidates",
    "WorldModel",
    "SearchMode",
    "Objective",
    "Penalty",
    "SearchConfig",
    "RankedPlans",
    "system1_rollout",
    "system2_plan",
    "beam_search",
    "LlmWorldModel",
]

PlanScorer = Callable[[str, Trajectory], float]


class PlannerError(ValueError):
    pass


class WorldModelFailure(PlannerError):
    pass


class NoCandidates(PlannerError):
    pass


class WorldModel(Protocol):
    def propose(self, goal: str, context: str, history: Sequence[Step], k: int) -> Sequence[str]:
        ...

    def predict(self, goal: str, context: str, history: Sequence[Step], action: str) -> tuple[str, bool]:
        ...


class SearchMode(str, Enum):
    FULL_ROLLOUTS = "FullRollouts"
    BEAM_PARTIAL = "BeamPartial"


class Objective(str, Enum):
    MINIMIZE = "Minimize"
    MAXIMIZE = "Maximize"


@dataclass(frozen=True)
class Penalty:
    """Guardrail: adds ``weight`` to the cost of any plan the predicate flags."""

    predicate: Callable[[Trajectory], bool]
    weight: float


@dataclass(frozen=True)
class SearchConfig:
    num_candidates: int = 20
    beam_width: int = 5
    max_depth: int = 10
    mode: SearchMode = SearchMode.FULL_ROLLOUTS
    objective: Objective = Objective.MINIMIZE
    penalties: tuple[Penalty, ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_candidates < 1:
            raise PlannerError("num_candidates must be >= 1")
        if self.beam_width < 1:
            raise PlannerError("beam width must be >= 1")


@dataclass(frozen=True)
class RankedPlans:
    """Candidate plans with total costs, best first; chosen indexes into plans."""

    plans: tuple[tuple[Trajectory, float], ...]
    chosen: int = 0

    @property
    def chosen_plan(self) -> Trajectory:
        return self.plans[self.chosen][0]

    @property
    def chosen_cost(self) -> float:
        return self.plans[self.chosen][1]


def _penalized(scorer: PlanScorer, goal: str, traj: Trajectory, cfg: SearchConfig) -> float:
    cost = scorer(goal, traj)
    for pen in cfg.penalties:
        if pen.predicate(traj):
            cost += pen.weight
    return cost


def _rank(plans: Sequence[Trajectory], scorer: PlanScorer, goal: str, cfg: SearchConfig) -> RankedPlans:
    if not plans:
        raise NoCandidates("no candidate plans to rank")
    costs = [_penalized(scorer, goal, t, cfg) for t in plans]
    reverse = cfg.objective is Objective.MAXIMIZE
    order = sorted(range(len(plans)), key=lambda i: (-costs[i] if reverse else costs[i], i))
    return RankedPlans(plans=tuple((plans[i], costs[i]) for i in order), chosen=0)


def system1_rollout(w: WorldModel, goal: str, context: str, max_steps: int) -> Trajectory:
    """Reactive planning: follow the top proposal until achieved or out of budget."""
    if max_steps < 1:
        raise PlannerError("max_steps must be >= 1")
    return _rollout(w, goal, context, max_steps)


def _rollout(
    w: WorldModel,
    goal: str,
    context: str,
    max_steps: int,
    first_action: str | None = None,
    rng: random.Random | None = None,
    branch_k: int = 1,
) -> Trajectory:
    steps: list[Step] = []
    achieved = False
    try:
        for depth in range(max_steps):
            if depth == 0 and first_action is not None:
                action = first_action
            else:
                k = branch_k if rng is not None else 1
                proposals = list(w.propose(goal, context, steps, k))
                if not proposals:
                    break
                action = proposals[rng.randrange(len(proposals))] if rng is not None else proposals[0]
            state, achieved = w.predict(goal, context, steps, action)
            steps.append(Step(action=action, state=state))
            if achieved:
                break
    except PlannerError:
        raise
    except Exception as exc:
        raise WorldModelFailure(f"world model failed during rollout: {exc}") from exc
    return Trajectory(goal=goal, steps=tuple(steps), achieved=achieved and bool(steps))


def system2_plan(
    w: WorldModel,
    scorer: PlanScorer,
    goal: str,
    context: str,
    cfg: SearchConfig,
) -> RankedPlans:
    """Search for the extremal-cost plan.

    FullRollouts samples num_candidates rollouts: candidate i diverges at
    the first step onto the i-th proposal (seeded random branching at later
    steps once candidates outnumber first-step proposals). BeamPartial
    delegates to beam_search.
    """
    if cfg.mode is SearchMode.BEAM_PARTIAL:
        return beam_search(w, scorer, goal, context, cfg)
    try:
        first = list(w.propose(goal, context, [], cfg.num_candidates))
    except Exception as exc:
        raise WorldModelFailure(f"world model failed on first proposal: {exc}") from exc
    if not first:
        raise NoCandidates("world model proposed no first actions")
    plans = []
    for i in range(cfg.num_candidates):
        rng = None
        if i >= len(first):
            rng = random.Random(cfg.seed * 1_000_003 + i)
        plans.append(_rollout(w, goal, context, cfg.max_depth,
                              first_action=first[i % len(first)],
                              rng=rng, branch_k=cfg.num_candidates))
    return _rank(plans, scorer, goal, cfg)


def beam_search(
    w: WorldModel,
    scorer: PlanScorer,
    goal: str,
    context: str,
    cfg: SearchConfig,
) -> RankedPlans:
    """Depth-synchronous beam over partial plans scored by the critic.

    Plans that reach the achieved flag leave the beam and compete in the
    final ranking; if nothing completes, the surviving prefixes are ranked.
    """
    beam: list[tuple[Step, ...]] = [()]
    completed: list[Trajectory] = []
    expanded_any = False
    try:
        for _ in range(cfg.max_depth):
            candidates: list[tuple[Step, ...]] = []
            for steps in beam:
                for action in w.propose(goal, context, steps, cfg.num_candidates):
                    state, achieved = w.predict(goal, context, steps, action)
                    extended = steps + (Step(action=action, state=state),)
                    if achieved:
                        completed.append(Trajectory(goal=goal, steps=extended, achieved=True))
                    else:
                        candidates.append(extended)
                    expanded_any = True
            if not candidates:
                beam = []
                break
            partials = [Trajectory(goal=goal, steps=s) for s in candidates]
            costs = [_penalized(scorer, goal, t, cfg) for t in partials]
            reverse = cfg.objective is Objective.MAXIMIZE
            order = sorted(range(len(candidates)),
                           key=lambda i: (-costs[i] if reverse else costs[i], i))
            beam = [candidates[i] for i in order[:cfg.beam_width]]
    except PlannerError:
        raise
    except Exception as exc:
        raise WorldModelFailure(f"world model failed during beam search: {exc}") from exc
    if not expanded_any:
        raise NoCandidates("world model proposed no actions from the start state")
    finalists = completed or [Trajectory(goal=goal, steps=s) for s in beam]
    return _rank(finalists, scorer, goal, cfg)


_NUMBERED = re.compile(r"^\s*\d+[.)]\s*(.+?)\s*$")
_STATE_BLOCK = re.compile(r"<STATE>\n(.*?)\n</STATE>", re.DOTALL)


@dataclass
class LlmWorldModel:
    """World model backed by a text-generation client.

    History renders as trajectory markup; proposals come back as numbered
    lines and predictions as a STATE block with an optional
    <GOAL_ACHIEVED> token. Only as deterministic as its client, so tests
    pair it with the mock client.
    """

    client: object
    context: str = ""

    def _doc(self, goal: str, history: Sequence[Step]) -> str:
        from .trajectory import render_trajectory

        return render_trajectory(Trajectory(goal=goal, steps=tuple(history)))

    def propose(self, goal: str, context: str, history: Sequence[Step], k: int) -> list[str]:
        prompt = (
            f"{context or self.context}\n{self._doc(goal, history)}\n"
            f"Propose {k} alternative next actions, one per line, numbered."
        )
        response = self.client.complete(prompt)
        actions = [m.group(1) for m in map(_NUMBERED.match, response.splitlines()) if m]
        return actions[:k]

    def predict(self, goal: str, context: str, history: Sequence[Step], action: str) -> tuple[str, bool]:
        prompt = (
            f"{context or self.context}\n{self._doc(goal, history)}\n"
            f"<ACTION>\n{action}\n</ACTION>\n\n"
            "Write the <STATE> block for this action, then <GOAL_ACHIEVED> "
            "on its own line only if the goal is now achieved."
        )
        response = self.client.complete(prompt)
        match = _STATE_BLOCK.search(response)
        state = match.group(1).strip() if match else response.strip()
        return state, "<GOAL_ACHIEVED>" in response
