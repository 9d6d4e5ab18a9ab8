import json

import pytest
from fastapi.testclient import TestClient

from wmplan.arena import ArenaConfig, ArenaState
from wmplan.arena_http import create_app
from wmplan.trajectory import Step, Trajectory, render_trajectory


def plan_doc(model, goal):
    flavor = "quickly" if model == "modelred" else "carefully"
    steps = tuple(Step(f"{flavor} do step {i} of {goal}", "state") for i in range(1, 4))
    return render_trajectory(Trajectory(goal=goal, steps=steps, achieved=True))


@pytest.fixture()
def client():
    inventory = {}
    for goal in ("g1", "g2"):
        inventory[("coin", goal, "")] = f"context for {goal}"
        for model in ("modelred", "modelblue"):
            inventory[("coin", goal, model)] = plan_doc(model, goal)
    cfg = ArenaConfig(models=("modelred", "modelblue"), datasets=("coin",), seed=3)
    state = ArenaState(cfg, inventory)
    return TestClient(create_app(state))


def test_battle_payload_withholds_model_names(client):
    res = client.get("/api/battle/next")
    assert res.status_code == 200
    payload = res.json()
    assert set(payload) == {"battle_id", "goal", "context_ref", "plan_a", "plan_b"}
    assert len(payload["plan_a"]) == 3
    blob = json.dumps(payload)
    assert "modelred" not in blob and "modelblue" not in blob


def test_choice_flow_updates_leaderboard(client):
    battle = client.get("/api/battle/next").json()
    res = client.post(f"/api/battle/{battle['battle_id']}/choice",
                      json={"winner": "A", "annotator": "ann1"})
    assert res.status_code == 200
    assert res.json()["recorded"] == 1

    board = client.get("/api/leaderboard").json()
    elos = sorted(row["elo"] for row in board["models"])
    assert elos == [984, 1016]
    assert board["datasets"] == ["coin"]


def test_choice_errors(client):
    battle = client.get("/api/battle/next").json()
    bid = battle["battle_id"]
    res = client.post(f"/api/battle/{bid}/choice", json={"winner": "C", "annotator": "x"})
    assert res.status_code == 422
    assert client.post(f"/api/battle/{bid}/choice",
                       json={"winner": "B", "annotator": "x"}).status_code == 200
    res = client.post(f"/api/battle/{bid}/choice", json={"winner": "A", "annotator": "x"})
    assert res.status_code == 409
    res = client.post("/api/battle/b404404/choice", json={"winner": "A", "annotator": "x"})
    assert res.status_code == 404


def test_exhausted_returns_404(client):
    for _ in range(2):
        battle = client.get("/api/battle/next").json()
        client.post(f"/api/battle/{battle['battle_id']}/choice",
                    json={"winner": "A", "annotator": "x"})
    res = client.get("/api/battle/next")
    assert res.status_code == 404
    assert res.json()["detail"] == "exhausted"


def test_export_is_replayable_jsonl(client):
    battle = client.get("/api/battle/next").json()
    client.post(f"/api/battle/{battle['battle_id']}/choice",
                json={"winner": "B", "annotator": "x"})
    res = client.get("/api/export")
    assert res.status_code == 200
    lines = [ln for ln in res.text.splitlines() if ln.strip()]
    assert len(lines) == 1
    record = json.loads(lines[0])
    assert record["seq"] == 1
    assert record["winner"] in ("modelred", "modelblue")
