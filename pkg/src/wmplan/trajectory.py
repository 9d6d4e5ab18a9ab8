"""Goal/plan data model and the line-oriented trajectory markup format.

A trajectory document is a sequence of blocks joined by ``---`` separator
lines: a GOAL block, an optional INTERPRETATION block, repeated ACTION/STATE
block pairs, and an optional terminal ``<GOAL_ACHIEVED>`` token line.
Rendering is bit-exact (UTF-8, LF); parsing tolerates missing separators.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

__all__ = [
    "Step",
    "Trajectory",
    "RenderOptions",
    "TrajectoryError",
    "UnbalancedTag",
    "EmptyGoal",
    "StateWithoutAction",
    "InvalidTrajectory",
    "PrefixOutOfRange",
    "TooFewSteps",
    "parse_trajectory",
    "render_trajectory",
    "render_critic_text",
    "shuffle_steps",
    "append_steps",
]

SEPARATOR = "---"
ACHIEVED_TOKEN = "<GOAL_ACHIEVED>"

_TAG_RE = re.compile(r"</?(GOAL|INTERPRETATION|ACTION|STATE|GOAL_ACHIEVED)>")


class TrajectoryError(ValueError):
    """Base class for trajectory parsing/validation failures."""


class UnbalancedTag(TrajectoryError):
    """An open tag without a matching close, or a tag out of grammar order."""


class EmptyGoal(TrajectoryError):
    """The document has no goal text."""


class StateWithoutAction(TrajectoryError):
    """A STATE block appeared without a preceding ACTION block."""


class InvalidTrajectory(TrajectoryError):
    """A trajectory value violates its invariants."""


class PrefixOutOfRange(TrajectoryError):
    """Requested step prefix length is outside [0, len(steps)]."""


class TooFewSteps(TrajectoryError):
    """Operation needs at least two steps."""


@dataclass(frozen=True)
class Step:
    """One plan step: an imperative action and the world-state change it causes.

    The state text may be empty (action-only datasets carry no state
    descriptions).
    """

    action: str
    state: str = ""

    def __post_init__(self) -> None:
        if not self.action:
            raise InvalidTrajectory("step action must be nonempty")
        if self.action != self.action.strip():
            raise InvalidTrajectory("step action has surrounding whitespace")
        if _TAG_RE.search(self.action):
            raise InvalidTrajectory("step action contains markup tags")


@dataclass(frozen=True)
class Trajectory:
    """A goal, its interpretation, ordered steps, and a terminal achieved flag."""

    goal: str
    interpretation: str = ""
    steps: tuple[Step, ...] = ()
    achieved: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))
        if self.achieved and not self.steps:
            raise InvalidTrajectory("achieved=true requires at least one step")


@dataclass(frozen=True)
class RenderOptions:
    """Toggles for the critic-facing text rendering (ablation switches)."""

    include_interpretation: bool = True
    include_states: bool = True


def _block(tag: str, body: str) -> str:
    return f"<{tag}>\n{body}\n</{tag}>"


def render_trajectory(t: Trajectory) -> str:
    """Render a trajectory to its markup document.

    Blocks come in order GOAL, INTERPRETATION (only when nonempty), then one
    ACTION/STATE pair per step, joined by ``---`` lines, with a final
    ``<GOAL_ACHIEVED>`` line iff the trajectory achieved its goal.
    """
    blocks = [_block("GOAL", t.goal)]
    if t.interpretation:
        blocks.append(_block("INTERPRETATION", t.interpretation))
    for step in t.steps:
        blocks.append(_block("ACTION", step.action) + "\n\n" + _block("STATE", step.state))
    if t.achieved:
        blocks.append(ACHIEVED_TOKEN)
    return f"\n\n{SEPARATOR}\n\n".join(blocks) + "\n"


_OPEN_TAGS = {"<GOAL>": "GOAL", "<INTERPRETATION>": "INTERPRETATION",
              "<ACTION>": "ACTION", "<STATE>": "STATE"}


def _trim_blank(lines: list[str]) -> str:
    start, end = 0, len(lines)
    while start < end and not lines[start].strip():
        start += 1
    while end > start and not lines[end - 1].strip():
        end -= 1
    return "\n".join(lines[start:end])


def parse_trajectory(text: str) -> Trajectory:
    """Parse a markup document into a Trajectory.

    The grammar is line-oriented: every tag occupies its own line, block
    bodies are the raw lines between the open and close tags with
    surrounding blank lines trimmed. ``---`` separator lines and blank
    lines between blocks are accepted but not required.
    """
    goal: str | None = None
    interpretation = ""
    actions: list[str] = []
    states: dict[int, str] = {}
    achieved = False

    lines = text.split("\n")
    i = 0
    n = len(lines)
    while i < n:
        line = lines[i].strip()
        if not line or line == SEPARATOR:
            i += 1
            continue
        if line == ACHIEVED_TOKEN:
            if achieved:
                raise UnbalancedTag("duplicate <GOAL_ACHIEVED> token")
            achieved = True
            i += 1
            continue
        if achieved:
            raise UnbalancedTag(f"content after {ACHIEVED_TOKEN}: {line!r}")
        tag = _OPEN_TAGS.get(line)
        if tag is None:
            raise UnbalancedTag(f"unexpected line outside any block: {lines[i]!r}")
        close = f"</{tag}>"
        body_lines: list[str] = []
        i += 1
        while i < n and lines[i].strip() != close:
            body_lines.append(lines[i])
            i += 1
        if i == n:
            raise UnbalancedTag(f"<{tag}> has no matching {close}")
        i += 1
        body = _trim_blank(body_lines)

        if tag == "GOAL":
            if goal is not None:
                raise UnbalancedTag("duplicate <GOAL> block")
            if actions or interpretation:
                raise UnbalancedTag("<GOAL> must be the first block")
            if not body.strip():
                raise EmptyGoal("goal text is empty")
            goal = body
        elif tag == "INTERPRETATION":
            if goal is None:
                raise UnbalancedTag("<INTERPRETATION> before <GOAL>")
            if actions:
                raise UnbalancedTag("<INTERPRETATION> after the first step")
            interpretation = body
        elif tag == "ACTION":
            if goal is None:
                raise UnbalancedTag("<ACTION> before <GOAL>")
            actions.append(body.strip())
        elif tag == "STATE":
            if not actions:
                raise StateWithoutAction("<STATE> block without a preceding <ACTION>")
            if len(actions) - 1 in states:
                raise StateWithoutAction("second <STATE> for the same <ACTION>")
            states[len(actions) - 1] = body

    if goal is None:
        raise EmptyGoal("document has no <GOAL> block")

    steps = tuple(Step(action=a, state=states.get(j, "")) for j, a in enumerate(actions))
    return Trajectory(goal=goal, interpretation=interpretation, steps=steps, achieved=achieved)


def render_critic_text(t: Trajectory, k: int, opts: RenderOptions = RenderOptions()) -> tuple[str, str]:
    """Render the (goal text, first-k-steps text) pair consumed by the critic.

    Steps come out as numbered ``i. Action: ...`` lines, each followed by a
    ``State: ...`` line when states are enabled and present. ``k=0`` yields
    an empty trajectory text.
    """
    if k < 0 or k > len(t.steps):
        raise PrefixOutOfRange(f"prefix {k} outside [0, {len(t.steps)}]")
    goal_text = t.goal
    if opts.include_interpretation and t.interpretation:
        goal_text = f"{t.goal}\n{t.interpretation}"
    parts: list[str] = []
    for i, step in enumerate(t.steps[:k], start=1):
        parts.append(f"{i}. Action: {step.action}")
        if opts.include_states and step.state:
            parts.append(f"State: {step.state}")
    return goal_text, "\n".join(parts)


def shuffle_steps(t: Trajectory, seed: int) -> Trajectory:
    """Return the trajectory with its steps in a seeded non-identity order.

    Permutations are drawn deterministically from the seed and resampled
    until one differs from the identity.
    """
    if len(t.steps) < 2:
        raise TooFewSteps("need at least 2 steps to shuffle")
    rng = random.Random(seed)
    order = list(range(len(t.steps)))
    identity = list(order)
    while order == identity:
        rng.shuffle(order)
    return replace(t, steps=tuple(t.steps[i] for i in order))


def append_steps(base: Trajectory, extra: Iterable[Step] | Sequence[Step]) -> Trajectory:
    """Append steps to a trajectory; the achieved flag resets to false."""
    return Trajectory(
        goal=base.goal,
        interpretation=base.interpretation,
        steps=base.steps + tuple(extra),
        achieved=False,
    )


def prefix(t: Trajectory, k: int) -> Trajectory:
    """The first-k-steps sub-trajectory (achieved only when k covers it all)."""
    if k < 0 or k > len(t.steps):
        raise PrefixOutOfRange(f"prefix {k} outside [0, {len(t.steps)}]")
    return replace(t, steps=t.steps[:k], achieved=t.achieved and k == len(t.steps))
