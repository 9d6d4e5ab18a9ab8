"""Deterministic STRIPS-style toy domain used as a planner test oracle.

Actions are precondition/add/delete triples over a finite fluent set. The
world doubles as a WorldModel for the planners: proposals are the
applicable actions in declaration order, predictions replay the history
from the initial state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .trajectory import Step, Trajectory

__all__ = [
    "ToyWorldError",
    "UnknownAction",
    "PreconditionUnmet",
    "ToyAction",
    "ToyWorld",
    "apply_action",
    "load_world",
    "ToyWorldModel",
    "exact_cost_scorer",
]


class ToyWorldError(ValueError):
    pass


class UnknownAction(ToyWorldError):
    pass


class PreconditionUnmet(ToyWorldError):
    pass


@dataclass(frozen=True)
class ToyAction:
    pre: frozenset[str]
    add: frozenset[str]
    delete: frozenset[str]


@dataclass(frozen=True)
class ToyWorld:
    fluents: frozenset[str]
    initial: frozenset[str]
    goal: frozenset[str]
    actions: dict[str, ToyAction]
    goal_text: str = ""

    def describe_goal(self) -> str:
        return self.goal_text or "achieve: " + ", ".join(sorted(self.goal))

    def achieved(self, state: frozenset[str]) -> bool:
        return self.goal <= state


def apply_action(world: ToyWorld, state: frozenset[str], action: str) -> frozenset[str]:
    """Successor state, or a rejection when preconditions are unmet."""
    spec = world.actions.get(action)
    if spec is None:
        raise UnknownAction(f"no action named {action!r}")
    if not spec.pre <= state:
        missing = ", ".join(sorted(spec.pre - state))
        raise PreconditionUnmet(f"{action!r} needs: {missing}")
    return (state - spec.delete) | spec.add


def load_world(text: str) -> ToyWorld:
    """Parse the ToyWorld JSON document
    {fluents, initial, goal, actions:{name:{pre,add,del}}}."""
    payload = json.loads(text)
    try:
        actions = {
            name: ToyAction(
                pre=frozenset(spec.get("pre", [])),
                add=frozenset(spec.get("add", [])),
                delete=frozenset(spec.get("del", [])),
            )
            for name, spec in payload["actions"].items()
        }
        world = ToyWorld(
            fluents=frozenset(payload["fluents"]),
            initial=frozenset(payload["initial"]),
            goal=frozenset(payload["goal"]),
            actions=actions,
            goal_text=payload.get("goal_text", ""),
        )
    except (KeyError, TypeError) as exc:
        raise ToyWorldError(f"malformed world document: {exc}") from exc
    if len(set(payload["actions"])) != len(payload["actions"]):
        raise ToyWorldError("duplicate action names")
    return world


def _state_text(state: frozenset[str]) -> str:
    return "Now true: " + (", ".join(sorted(state)) if state else "(nothing)")


@dataclass
class ToyWorldModel:
    """WorldModel view of a ToyWorld: deterministic and side-effect free."""

    world: ToyWorld

    def _replay(self, history: Sequence[Step]) -> frozenset[str]:
        state = self.world.initial
        for step in history:
            state = apply_action(self.world, state, step.action)
        return state

    def propose(self, goal: str, context: str, history: Sequence[Step], k: int) -> list[str]:
        state = self._replay(history)
        names = [n for n, a in self.world.actions.items() if a.pre <= state]
        return names[:k]

    def predict(self, goal: str, context: str, history: Sequence[Step], action: str) -> tuple[str, bool]:
        state = apply_action(self.world, self._replay(history), action)
        return _state_text(state), self.world.achieved(state)


def exact_cost_scorer(world: ToyWorld, step_weight: float = 0.01):
    """Oracle cost: unmet goal fluents after replaying the plan, plus a
    small per-step charge."""

    def scorer(goal_text: str, traj: Trajectory) -> float:
        state = world.initial
        for step in traj.steps:
            state = apply_action(world, state, step.action)
        return float(len(world.goal - state)) + step_weight * len(traj.steps)

    return scorer
