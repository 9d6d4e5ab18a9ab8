"""HTTP surface of the arena for the annotation frontend.

Battle payloads never contain model names; sides are fixed server-side.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from .arena import (
    ArenaState,
    DuplicateSubmission,
    Exhausted,
    InvalidWinner,
    UnknownBattle,
)
from .trajectory import TrajectoryError, parse_trajectory

__all__ = ["create_app"]


class ChoiceBody(BaseModel):
    winner: str
    annotator: str


def _plan_steps(markup: str) -> list[str]:
    try:
        return [s.action for s in parse_trajectory(markup).steps]
    except TrajectoryError:
        return [ln for ln in markup.splitlines() if ln.strip()]


def create_app(state: ArenaState, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="wmplan arena")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.get("/api/battle/next")
    def battle_next() -> dict:
        try:
            battle = state.next_battle()
        except Exhausted:
            raise HTTPException(status_code=404, detail="exhausted")
        return {
            "battle_id": battle.battle_id,
            "goal": battle.goal_id,
            "context_ref": battle.context_ref,
            "plan_a": _plan_steps(battle.plan_a),
            "plan_b": _plan_steps(battle.plan_b),
        }

    @app.post("/api/battle/{battle_id}/choice")
    def battle_choice(battle_id: str, body: ChoiceBody) -> dict:
        pending = state.pending.get(battle_id)
        if body.winner not in ("A", "B"):
            raise HTTPException(status_code=422, detail="winner must be 'A' or 'B'")
        try:
            if pending is None:
                # delegate: distinguishes duplicate vs unknown
                record = state.record_choice(battle_id, body.winner, body.annotator)
            else:
                winner_model = pending.battle.model_of(body.winner)
                record = state.record_choice(battle_id, winner_model, body.annotator)
        except DuplicateSubmission:
            raise HTTPException(status_code=409, detail="duplicate submission")
        except UnknownBattle:
            raise HTTPException(status_code=404, detail="unknown battle")
        except InvalidWinner as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"recorded": record.seq}

    @app.get("/api/leaderboard")
    def leaderboard() -> dict:
        return {"datasets": list(state.cfg.datasets), "models": state.leaderboard()}

    @app.get("/api/export")
    def export() -> PlainTextResponse:
        return PlainTextResponse(state.export_log(), media_type="application/jsonl")

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
