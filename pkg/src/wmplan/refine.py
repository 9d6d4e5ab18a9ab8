"""Iterative draft-critique-revise plan extraction over a text-generation client.

One draft request plus a configurable number of refinement rounds, all
through the same meta-prompt (the draft round embeds an empty previous
draft). Every round's prompt hash, raw response, and parse outcome land in
an audit trail, and an unparseable late round falls back to the last
parseable draft instead of aborting the pipeline.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Mapping, Sequence

import yaml

from .trajectory import InvalidTrajectory, Step, Trajectory

__all__ = [
    "RefineError",
    "GenerationFailed",
    "UnparseableResponse",
    "MissingKey",
    "InvalidExtraction",
    "PlanStep",
    "PlanExtraction",
    "ViolationKind",
    "Violation",
    "HttpTextGenClient",
    "MockTextGenClient",
    "prompt_key",
    "build_prompt",
    "self_refine",
    "RefineRound",
    "RefineResult",
    "parse_extraction",
    "validate_extraction",
    "to_trajectory",
    "step_spans",
]


class RefineError(ValueError):
    pass


class GenerationFailed(RefineError):
    pass


class UnparseableResponse(RefineError):
    pass


class MissingKey(RefineError):
    pass


class InvalidExtraction(RefineError):
    pass


@dataclass(frozen=True)
class PlanStep:
    action: str
    state: str
    start: float
    end: float


@dataclass(frozen=True)
class PlanExtraction:
    discussion: str
    plan: tuple[PlanStep, ...]
    goal: str
    interpretation: str


class ViolationKind(str, Enum):
    OUT_OF_BOUNDS = "OutOfBounds"
    OVERLAP = "Overlap"
    EMPTY_ACTION = "EmptyAction"
    MISSING_KEY = "MissingKey"
    BAD_TIMESTAMP_FORMAT = "BadTimestampFormat"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    message: str
    step: int | None = None

    def __post_init__(self) -> None:
        if not self.message:
            raise RefineError("violation message must be nonempty")


def prompt_key(prompt: str) -> str:
    """Fixture key for a prompt: SHA-256 of its UTF-8 bytes."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def _load_asset(name: str) -> str:
    return resources.files("wmplan").joinpath("prompts", name).read_text(encoding="utf-8")


def build_prompt(
    tree_text: str,
    extra_info: str = "",
    draft: str = "",
    min_start: float | None = None,
    max_end: float | None = None,
) -> str:
    """Instantiate the meta-prompt for one round.

    The requirements text keeps its <min_start>/<max_end> tokens unless
    concrete window bounds are supplied.
    """
    requirements = _load_asset("plan_requirements.txt")
    if min_start is not None:
        requirements = requirements.replace("<min_start>", f"{min_start:.2f}")
    if max_end is not None:
        requirements = requirements.replace("<max_end>", f"{max_end:.2f}")
    prompt = _load_asset("self_refine_meta.txt")
    prompt = prompt.replace("{TREE OF CAPTIONS}", tree_text)
    prompt = prompt.replace("{ADDITIONAL VIDEO INFO}", extra_info)
    prompt = prompt.replace("{PREVIOUS DRAFT}", draft)
    prompt = prompt.replace("{REQUIREMENTS}", requirements)
    if min_start is not None:
        prompt = prompt.replace("<min_start>", f"{min_start:.2f}")
    if max_end is not None:
        prompt = prompt.replace("<max_end>", f"{max_end:.2f}")
    return prompt


_request_gate = threading.BoundedSemaphore(4)


def set_request_cap(n: int) -> None:
    """Cap concurrent in-flight generation requests across all clients."""
    global _request_gate
    if n < 1:
        raise RefineError("request cap must be >= 1")
    _request_gate = threading.BoundedSemaphore(n)


@dataclass
class HttpTextGenClient:
    """Chat-completions client with a retry budget."""

    endpoint: str
    model: str
    timeout: float = 120.0
    retries: int = 3
    temperature: float = 0.0
    api_key: str = ""

    @classmethod
    def from_env(cls) -> "HttpTextGenClient":
        endpoint = os.environ.get("WM_LLM_ENDPOINT", "")
        if not endpoint:
            raise GenerationFailed("WM_LLM_ENDPOINT is not configured")
        return cls(endpoint=endpoint.rstrip("/"),
                   model=os.environ.get("WM_LLM_MODEL", ""),
                   api_key=os.environ.get("WM_LLM_KEY", ""))

    def complete(self, prompt: str) -> str:
        import requests

        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.retries):
            try:
                with _request_gate:
                    resp = requests.post(
                        f"{self.endpoint}/chat/completions",
                        json={
                            "model": self.model,
                            "messages": [{"role": "user", "content": prompt}],
                            "temperature": self.temperature,
                        },
                        headers=headers,
                        timeout=self.timeout,
                    )
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except Exception as exc:
                last_error = exc
                time.sleep(min(2.0**attempt, 8.0))
        raise GenerationFailed(f"request failed after {self.retries} attempts: {last_error}")


@dataclass
class MockTextGenClient:
    """Deterministic test client: fixed response table keyed by prompt hash."""

    responses: Mapping[str, str]
    calls: list[str] = field(default_factory=list)

    @classmethod
    def from_fixture(cls, text: str) -> "MockTextGenClient":
        return cls(responses=json.loads(text))

    def complete(self, prompt: str) -> str:
        key = prompt_key(prompt)
        self.calls.append(key)
        try:
            return self.responses[key]
        except KeyError:
            raise GenerationFailed(f"mock has no response for prompt hash {key}") from None


_YAML_FENCE = re.compile(r"```yaml\s*\n(.*?)\n\s*```", re.DOTALL)


def _parse_timestamp(value, where: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise UnparseableResponse(f"{where}: bad timestamp {value!r}") from None


def parse_extraction(response: str) -> PlanExtraction:
    """Pull the fenced yaml block out of a response and parse its schema."""
    match = _YAML_FENCE.search(response)
    if not match:
        raise UnparseableResponse("no fenced yaml block in response")
    try:
        payload = yaml.safe_load(match.group(1))
    except yaml.YAMLError as exc:
        raise UnparseableResponse(f"yaml does not parse: {exc}") from exc
    if not isinstance(payload, dict):
        raise UnparseableResponse("yaml block is not a mapping")
    for key in ("discussion", "plan", "goal", "interpretation"):
        if key not in payload:
            raise MissingKey(f"missing key: {key}")
    raw_plan = payload["plan"]
    if not isinstance(raw_plan, list) or not raw_plan:
        raise UnparseableResponse("plan must be a nonempty list")
    steps = []
    for i, raw in enumerate(raw_plan):
        if not isinstance(raw, dict):
            raise UnparseableResponse(f"plan step {i} is not a mapping")
        for key in ("action", "state", "start", "end"):
            if key not in raw:
                raise MissingKey(f"plan step {i} missing key: {key}")
        steps.append(PlanStep(
            action=str(raw["action"]),
            state=str(raw["state"]),
            start=_parse_timestamp(raw["start"], f"plan step {i} start"),
            end=_parse_timestamp(raw["end"], f"plan step {i} end"),
        ))
    return PlanExtraction(
        discussion=str(payload["discussion"]),
        plan=tuple(steps),
        goal=str(payload["goal"]),
        interpretation=str(payload["interpretation"]),
    )


def validate_extraction(p: PlanExtraction, min_start: float, max_end: float) -> list[Violation]:
    """All structural violations: empty actions, degenerate or out-of-window
    spans, and pairwise [start, end) overlaps. Empty list means valid."""
    violations: list[Violation] = []
    for i, step in enumerate(p.plan):
        if not step.action.strip():
            violations.append(Violation(ViolationKind.EMPTY_ACTION, f"step {i}: empty action", i))
        if not (step.start < step.end):
            violations.append(Violation(
                ViolationKind.BAD_TIMESTAMP_FORMAT,
                f"step {i}: start {step.start} must be < end {step.end}", i))
        elif step.start < min_start or step.end > max_end:
            violations.append(Violation(
                ViolationKind.OUT_OF_BOUNDS,
                f"step {i}: [{step.start}, {step.end}] outside [{min_start}, {max_end}]", i))
    for i in range(len(p.plan)):
        for j in range(i + 1, len(p.plan)):
            a, b = p.plan[i], p.plan[j]
            if a.start < b.end and b.start < a.end:
                violations.append(Violation(
                    ViolationKind.OVERLAP,
                    f"steps {i} and {j} overlap: [{a.start}, {a.end}) vs [{b.start}, {b.end})", j))
    return violations


def to_trajectory(p: PlanExtraction) -> Trajectory:
    """Map a validated extraction onto the trajectory data model
    (timestamps drop out; keep step_spans as the sidecar)."""
    if not p.plan:
        raise InvalidExtraction("extraction has an empty plan")
    try:
        steps = tuple(Step(action=s.action.strip(), state=s.state) for s in p.plan)
    except InvalidTrajectory as exc:
        raise InvalidExtraction(str(exc)) from exc
    return Trajectory(goal=p.goal, interpretation=p.interpretation, steps=steps, achieved=True)


def step_spans(p: PlanExtraction) -> list[tuple[float, float]]:
    return [(s.start, s.end) for s in p.plan]


@dataclass(frozen=True)
class RefineRound:
    kind: str
    prompt_hash: str
    response: str
    parsed: PlanExtraction | None
    error: str | None = None


@dataclass(frozen=True)
class RefineResult:
    extraction: PlanExtraction
    rounds: tuple[RefineRound, ...]


def self_refine(
    client,
    tree_text: str,
    extra_info: str = "",
    iterations: int = 2,
    min_start: float | None = None,
    max_end: float | None = None,
) -> RefineResult:
    """Draft once, refine ``iterations`` times, return the last parseable
    extraction with the full audit trail."""
    if iterations < 0:
        raise RefineError("iterations must be >= 0")
    rounds: list[RefineRound] = []
    last_block = ""
    final: PlanExtraction | None = None
    for r in range(iterations + 1):
        kind = "draft" if r == 0 else "refine"
        prompt = build_prompt(tree_text, extra_info, last_block, min_start, max_end)
        response = client.complete(prompt)
        try:
            parsed = parse_extraction(response)
            error = None
        except RefineError as exc:
            parsed = None
            error = str(exc)
        rounds.append(RefineRound(kind=kind, prompt_hash=prompt_key(prompt),
                                  response=response, parsed=parsed, error=error))
        if parsed is not None:
            final = parsed
            fence = _YAML_FENCE.search(response)
            last_block = fence.group(0) if fence else last_block
    if final is None:
        raise UnparseableResponse(
            f"no round produced a parseable extraction ({len(rounds)} attempts)")
    return RefineResult(extraction=final, rounds=tuple(rounds))
