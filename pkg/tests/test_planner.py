import itertools
import random

import pytest

from wmplan.planner import (
    LlmWorldModel,
    NoCandidates,
    Objective,
    Penalty,
    RankedPlans,
    SearchConfig,
    SearchMode,
    beam_search,
    system1_rollout,
    system2_plan,
)
from wmplan.refine import MockTextGenClient, prompt_key
from wmplan.toyworld import (
    PreconditionUnmet,
    ToyWorld,
    ToyWorldModel,
    UnknownAction,
    apply_action,
    exact_cost_scorer,
    load_world,
)
from wmplan.trajectory import Step, Trajectory

# ---------------------------------------------------------------- toyworld


def simple_world():
    return load_world("""
    {
      "fluents": ["pan_hot", "eggs_done", "have_eggs"],
      "initial": ["have_eggs"],
      "goal": ["eggs_done"],
      "actions": {
        "heat pan": {"pre": [], "add": ["pan_hot"], "del": []},
        "cook eggs": {"pre": ["pan_hot", "have_eggs"], "add": ["eggs_done"], "del": ["have_eggs"]},
        "wait": {"pre": [], "add": [], "del": []}
      }
    }
    """)


def test_apply_action():
    w = simple_world()
    state = apply_action(w, w.initial, "heat pan")
    assert state == frozenset({"have_eggs", "pan_hot"})
    state = apply_action(w, state, "cook eggs")
    assert "eggs_done" in state and "have_eggs" not in state
    assert apply_action(w, w.initial, "wait") == w.initial
    with pytest.raises(PreconditionUnmet):
        apply_action(w, w.initial, "cook eggs")
    with pytest.raises(UnknownAction):
        apply_action(w, w.initial, "fly")


def test_world_model_adapter():
    wm = ToyWorldModel(simple_world())
    assert wm.propose("g", "", [], 5) == ["heat pan", "wait"]
    state_text, achieved = wm.predict("g", "", [], "heat pan")
    assert "pan_hot" in state_text
    assert not achieved
    history = [Step("heat pan", "x")]
    _, achieved = wm.predict("g", "", history, "cook eggs")
    assert achieved


# ------------------------------------------------------------------ system1


def test_system1_reaches_goal():
    world = load_world("""
    {"fluents": ["g"], "initial": [], "goal": ["g"],
     "actions": {"finish": {"pre": [], "add": ["g"], "del": []}}}
    """)
    traj = system1_rollout(ToyWorldModel(world), "reach g", "", max_steps=5)
    assert len(traj.steps) == 1
    assert traj.achieved


def test_system1_unreachable_goal_exhausts_budget():
    world = load_world("""
    {"fluents": ["g"], "initial": [], "goal": ["g"],
     "actions": {"wait": {"pre": [], "add": [], "del": []}}}
    """)
    traj = system1_rollout(ToyWorldModel(world), "reach g", "", max_steps=4)
    assert len(traj.steps) == 4
    assert not traj.achieved
    assert traj == system1_rollout(ToyWorldModel(world), "reach g", "", max_steps=4)


# ---------------------------------------------------- exhaustive enumeration


def enumerate_plans(world, max_depth):
    """All action sequences, each cut at the first achieving step."""
    wm = ToyWorldModel(world)
    plans = []

    def rec(state, steps):
        if len(steps) == max_depth:
            return
        for name, spec in world.actions.items():
            if not spec.pre <= state:
                continue
            nxt = (state - spec.delete) | spec.add
            new_steps = steps + [Step(name, "s")]
            if world.achieved(nxt):
                plans.append(Trajectory(goal=world.describe_goal(),
                                        steps=tuple(new_steps), achieved=True))
            else:
                rec(nxt, new_steps)

    rec(world.initial, [])
    return plans


def random_world(rng, n_fluents=5, n_actions=4, depth=5):
    """Random STRIPS instance whose goal is reachable within depth (the goal
    is read off a random applicable walk)."""
    while True:
        fluents = [f"f{i}" for i in range(n_fluents)]
        initial = frozenset(f for f in fluents if rng.random() < 0.4)
        actions = {}
        for j in range(n_actions):
            pre = frozenset(f for f in fluents if rng.random() < 0.25)
            add = frozenset(f for f in fluents if rng.random() < 0.35)
            delete = frozenset(f for f in fluents if rng.random() < 0.15 and f not in add)
            actions[f"act{j}"] = {"pre": sorted(pre), "add": sorted(add), "del": sorted(delete)}
        world = load_world(__import__("json").dumps({
            "fluents": fluents, "initial": sorted(initial), "goal": [],
            "actions": actions}))
        state = world.initial
        walk_len = rng.randint(1, depth)
        for _ in range(walk_len):
            applicable = [n for n, a in world.actions.items() if a.pre <= state]
            if not applicable:
                break
            state = apply_action(world, state, rng.choice(applicable))
        candidates = sorted(state - world.initial)
        if not candidates:
            continue
        goal = frozenset(rng.sample(candidates, k=min(len(candidates), rng.randint(1, 2))))
        world = ToyWorld(fluents=world.fluents, initial=world.initial, goal=goal,
                         actions=world.actions)
        if not world.achieved(world.initial):
            return world


def test_system2_beam_full_width_matches_enumeration():
    rng = random.Random(0)
    for _ in range(20):
        world = random_world(rng)
        depth = 5
        oracle_plans = enumerate_plans(world, depth)
        if not oracle_plans:
            continue
        scorer = exact_cost_scorer(world)
        oracle_best = min(scorer("", t) for t in oracle_plans)
        cfg = SearchConfig(num_candidates=4, beam_width=4**5, max_depth=depth,
                           mode=SearchMode.BEAM_PARTIAL)
        ranked = system2_plan(ToyWorldModel(world), scorer, world.describe_goal(), "", cfg)
        assert ranked.chosen_plan.achieved
        assert ranked.chosen_cost == pytest.approx(oracle_best, abs=1e-12)


def test_system2_single_candidate_equals_system1():
    world = simple_world()
    wm = ToyWorldModel(world)
    cfg = SearchConfig(num_candidates=1, max_depth=6)
    ranked = system2_plan(wm, exact_cost_scorer(world), "g", "", cfg)
    assert ranked.chosen_plan.steps == system1_rollout(wm, "g", "", 6).steps


def test_system2_deterministic():
    rng = random.Random(3)
    world = random_world(rng)
    wm = ToyWorldModel(world)
    cfg = SearchConfig(num_candidates=20, max_depth=5, seed=11)
    scorer = exact_cost_scorer(world)
    r1 = system2_plan(wm, scorer, "g", "", cfg)
    r2 = system2_plan(wm, scorer, "g", "", cfg)
    assert r1 == r2


def test_system2_maximize_picks_argmax():
    world = simple_world()
    wm = ToyWorldModel(world)
    scorer = exact_cost_scorer(world)
    lo = system2_plan(wm, scorer, "g", "", SearchConfig(num_candidates=8, max_depth=4, seed=0))
    hi = system2_plan(wm, scorer, "g", "",
                      SearchConfig(num_candidates=8, max_depth=4, seed=0,
                                   objective=Objective.MAXIMIZE))
    costs = [c for _, c in lo.plans]
    assert lo.chosen_cost == min(costs)
    assert hi.chosen_cost == max(costs)


def test_cost_scaling_never_changes_chosen_plan():
    rng = random.Random(5)
    world = random_world(rng)
    wm = ToyWorldModel(world)
    base = exact_cost_scorer(world)
    cfg = SearchConfig(num_candidates=12, max_depth=5, seed=2)
    chosen = system2_plan(wm, base, "g", "", cfg).chosen_plan
    for scale in (0.001, 7.0, 1e6):
        scaled = system2_plan(wm, lambda g, t: scale * base(g, t), "g", "", cfg).chosen_plan
        assert scaled == chosen


def test_zero_weight_penalty_is_inert():
    world = simple_world()
    wm = ToyWorldModel(world)
    scorer = exact_cost_scorer(world)
    cfg = SearchConfig(num_candidates=6, max_depth=4, seed=0)
    with_pen = SearchConfig(num_candidates=6, max_depth=4, seed=0,
                            penalties=(Penalty(lambda t: True, 0.0),))
    assert system2_plan(wm, scorer, "g", "", cfg).plans == \
        system2_plan(wm, scorer, "g", "", with_pen).plans


def test_penalty_changes_ranking():
    world = simple_world()
    wm = ToyWorldModel(world)
    scorer = exact_cost_scorer(world)
    # forbid plans that ever wait
    pen = Penalty(lambda t: any(s.action == "wait" for s in t.steps), 100.0)
    cfg = SearchConfig(num_candidates=8, max_depth=4, seed=0, penalties=(pen,))
    ranked = system2_plan(wm, scorer, "g", "", cfg)
    assert all(s.action != "wait" for s in ranked.chosen_plan.steps)


# -------------------------------------------------------------- beam search


def trap_world():
    """Grabbing the first goal fluent burns the resource the second needs:
    greedy-by-cost dead-ends, a wider beam recovers the optimum."""
    return load_world("""
    {
      "fluents": ["r", "m", "g1", "g2"],
      "initial": ["r"],
      "goal": ["g1", "g2"],
      "actions": {
        "grab": {"pre": ["r"], "add": ["g1"], "del": ["r"]},
        "stage": {"pre": ["r"], "add": ["m"], "del": []},
        "finish": {"pre": ["m", "r"], "add": ["g1", "g2"], "del": []},
        "wait": {"pre": [], "add": [], "del": []}
      }
    }
    """)


def test_beam_width_one_falls_into_trap_width_four_recovers():
    world = trap_world()
    wm = ToyWorldModel(world)
    scorer = exact_cost_scorer(world)
    oracle_best = min(scorer("", t) for t in enumerate_plans(world, 4))

    narrow = beam_search(wm, scorer, "g", "",
                         SearchConfig(num_candidates=4, beam_width=1, max_depth=4,
                                      mode=SearchMode.BEAM_PARTIAL))
    assert not narrow.chosen_plan.achieved

    wide = beam_search(wm, scorer, "g", "",
                       SearchConfig(num_candidates=4, beam_width=4, max_depth=4,
                                    mode=SearchMode.BEAM_PARTIAL))
    assert wide.chosen_plan.achieved
    assert wide.chosen_cost == pytest.approx(oracle_best)
    assert [s.action for s in wide.chosen_plan.steps] == ["stage", "finish"]


def test_beam_no_candidates():
    world = load_world("""
    {"fluents": ["p", "g"], "initial": [], "goal": ["g"],
     "actions": {"blocked": {"pre": ["p"], "add": ["g"], "del": []}}}
    """)
    with pytest.raises(NoCandidates):
        beam_search(ToyWorldModel(world), exact_cost_scorer(world), "g", "",
                    SearchConfig(mode=SearchMode.BEAM_PARTIAL))
    with pytest.raises(NoCandidates):
        system2_plan(ToyWorldModel(world), exact_cost_scorer(world), "g", "",
                     SearchConfig())


# ----------------------------------------------------------- LLM world model


def test_llm_world_model_with_mock_client():
    from wmplan.trajectory import render_trajectory

    goal = "make tea"
    doc0 = render_trajectory(Trajectory(goal=goal))
    propose_prompt = f"\n{doc0}\nPropose 2 alternative next actions, one per line, numbered."
    predict_prompt = (f"\n{doc0}\n<ACTION>\nboil water\n</ACTION>\n\n"
                      "Write the <STATE> block for this action, then <GOAL_ACHIEVED> "
                      "on its own line only if the goal is now achieved.")
    client = MockTextGenClient(responses={
        prompt_key(propose_prompt): "1. boil water\n2. fetch cup",
        prompt_key(predict_prompt): "<STATE>\nThe kettle is heating.\n</STATE>\n<GOAL_ACHIEVED>",
    })
    wm = LlmWorldModel(client=client)
    assert wm.propose(goal, "", [], 2) == ["boil water", "fetch cup"]
    state, achieved = wm.predict(goal, "", [], "boil water")
    assert state == "The kettle is heating."
    assert achieved
