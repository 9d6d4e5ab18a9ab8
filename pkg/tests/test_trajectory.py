import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wmplan.trajectory import (
    EmptyGoal,
    InvalidTrajectory,
    PrefixOutOfRange,
    RenderOptions,
    StateWithoutAction,
    Step,
    TooFewSteps,
    Trajectory,
    UnbalancedTag,
    append_steps,
    parse_trajectory,
    prefix,
    render_critic_text,
    render_trajectory,
    shuffle_steps,
)

# ------------------------------------------------------------------ parsing


def test_parse_cooking_tomato_eggs(cooking_doc):
    t = parse_trajectory(cooking_doc)
    assert t.goal == "Cooking Tomato and Eggs"
    assert t.interpretation.startswith("Now, the kitchen is set up")
    assert len(t.steps) == 10
    assert t.achieved
    assert t.steps[0].action == "Preheat the skillet on the stove"
    assert t.steps[-1].action == "Present the final dish"
    assert t.steps[3].state.startswith("Pour the egg mixture")


def test_parse_render_round_trip_on_paper_doc(cooking_doc):
    t = parse_trajectory(cooking_doc)
    rendered = render_trajectory(t)
    assert parse_trajectory(rendered) == t
    # same block sequence: tag lines in identical order
    tags = [ln for ln in cooking_doc.splitlines() if ln.startswith("<")]
    assert [ln for ln in rendered.splitlines() if ln.startswith("<")] == tags


def test_parse_minimal_document():
    t = parse_trajectory("<GOAL>\nx\n</GOAL>")
    assert t == Trajectory(goal="x")
    assert not t.achieved


def test_parse_accepts_missing_separators():
    doc = "<GOAL>\ng\n</GOAL>\n<ACTION>\na\n</ACTION>\n<STATE>\ns\n</STATE>\n<GOAL_ACHIEVED>"
    t = parse_trajectory(doc)
    assert t.steps == (Step("a", "s"),)
    assert t.achieved


def test_parse_preserves_separator_lines_inside_bodies():
    doc = "<GOAL>\ng\n</GOAL>\n<ACTION>\na\n</ACTION>\n<STATE>\nfirst\n---\nsecond\n</STATE>"
    t = parse_trajectory(doc)
    assert t.steps[0].state == "first\n---\nsecond"


def test_parse_errors():
    with pytest.raises(UnbalancedTag):
        parse_trajectory("<GOAL>\nx\n")
    with pytest.raises(EmptyGoal):
        parse_trajectory("<GOAL>\n\n</GOAL>")
    with pytest.raises(EmptyGoal):
        parse_trajectory("")
    with pytest.raises(StateWithoutAction):
        parse_trajectory("<GOAL>\ng\n</GOAL>\n<STATE>\ns\n</STATE>")
    with pytest.raises(UnbalancedTag):
        parse_trajectory("<GOAL>\ng\n</GOAL>\n<GOAL>\ng\n</GOAL>")
    with pytest.raises(UnbalancedTag):
        parse_trajectory("<GOAL>\ng\n</GOAL>\nstray text")


def test_action_without_state_parses_to_empty_state():
    doc = "<GOAL>\ng\n</GOAL>\n<ACTION>\na\n</ACTION>\n<ACTION>\nb\n</ACTION>"
    t = parse_trajectory(doc)
    assert t.steps == (Step("a", ""), Step("b", ""))


# ---------------------------------------------------------------- rendering


def test_render_one_step_achieved():
    doc = render_trajectory(Trajectory(goal="x", steps=(Step("a", "s"),), achieved=True))
    assert doc.count("<ACTION>") == 1
    assert doc.count("<STATE>") == 1
    assert doc.rstrip().endswith("<GOAL_ACHIEVED>")
    assert "\n---\n" in doc


def test_render_skips_empty_interpretation():
    doc = render_trajectory(Trajectory(goal="x", steps=(Step("a"),)))
    assert "<INTERPRETATION>" not in doc
    doc = render_trajectory(Trajectory(goal="x", interpretation="i", steps=(Step("a"),)))
    assert "<INTERPRETATION>" in doc


def test_invariants_enforced():
    with pytest.raises(InvalidTrajectory):
        Step(action="")
    with pytest.raises(InvalidTrajectory):
        Step(action=" padded ")
    with pytest.raises(InvalidTrajectory):
        Step(action="do <STATE> thing")
    with pytest.raises(InvalidTrajectory):
        Trajectory(goal="g", achieved=True)


# --------------------------------------------------------- property testing

_text = st.text(
    alphabet=st.characters(min_codepoint=32, max_codepoint=0x2FF, blacklist_characters="<>"),
    min_size=1, max_size=40,
).map(lambda s: s.strip()).filter(lambda s: s and s != "---")

_steps = st.lists(st.builds(Step, action=_text, state=st.one_of(st.just(""), _text)),
                  min_size=0, max_size=6)


@st.composite
def trajectories(draw):
    steps = tuple(draw(_steps))
    achieved = draw(st.booleans()) if steps else False
    return Trajectory(goal=draw(_text), interpretation=draw(st.one_of(st.just(""), _text)),
                      steps=steps, achieved=achieved)


@settings(max_examples=300, deadline=None)
@given(trajectories())
def test_parse_render_identity(t):
    assert parse_trajectory(render_trajectory(t)) == t


@settings(max_examples=100, deadline=None)
@given(trajectories(), st.integers(min_value=0, max_value=2**31 - 1))
def test_shuffle_properties(t, seed):
    if len(t.steps) < 2:
        with pytest.raises(TooFewSteps):
            shuffle_steps(t, seed)
        return
    shuffled = shuffle_steps(t, seed)
    if len(set(t.steps)) == len(t.steps):
        # all steps distinct: a non-identity index permutation is visible
        assert shuffled.steps != t.steps
    assert sorted(map(repr, shuffled.steps)) == sorted(map(repr, t.steps))
    assert shuffled.goal == t.goal and shuffled.interpretation == t.interpretation
    assert shuffle_steps(t, seed) == shuffled


def test_shuffle_two_steps_always_swaps():
    t = Trajectory(goal="g", steps=(Step("a"), Step("b")))
    for seed in range(20):
        assert shuffle_steps(t, seed).steps == (Step("b"), Step("a"))


def test_shuffle_five_steps_seed0_fixed_permutation():
    t = Trajectory(goal="g", steps=tuple(Step(f"s{i}") for i in range(5)))
    first = shuffle_steps(t, 0)
    assert first == shuffle_steps(t, 0)
    assert first.steps != t.steps
    assert set(first.steps) == set(t.steps)


# ------------------------------------------------------------- critic text


def test_render_critic_text_prefixes():
    t = Trajectory(goal="g", interpretation="interp",
                   steps=(Step("a1", "s1"), Step("a2", "s2")), achieved=True)
    goal_text, traj_text = render_critic_text(t, 0)
    assert goal_text == "g\ninterp"
    assert traj_text == ""
    _, full = render_critic_text(t, 2)
    assert full == "1. Action: a1\nState: s1\n2. Action: a2\nState: s2"


def test_render_critic_text_ablations():
    t = Trajectory(goal="g", interpretation="interp", steps=(Step("a", "s"),))
    goal_text, traj_text = render_critic_text(t, 1, RenderOptions(include_interpretation=False))
    assert goal_text == "g"
    _, no_states = render_critic_text(t, 1, RenderOptions(include_states=False))
    assert "State:" not in no_states
    assert "Action: a" in no_states


def test_render_critic_text_out_of_range():
    t = Trajectory(goal="g", steps=(Step("a"),))
    with pytest.raises(PrefixOutOfRange):
        render_critic_text(t, 2)
    with pytest.raises(PrefixOutOfRange):
        render_critic_text(t, -1)


# ------------------------------------------------------------ append/prefix


def test_append_steps():
    base = Trajectory(goal="g", steps=(Step("a"), Step("b"), Step("c")), achieved=True)
    out = append_steps(base, (Step("x"), Step("y")))
    assert len(out.steps) == 5
    assert out.steps[:3] == base.steps
    assert out.steps[3] == Step("x")
    assert not out.achieved
    assert append_steps(base, ()).steps == base.steps


def test_prefix():
    base = Trajectory(goal="g", steps=(Step("a"), Step("b")), achieved=True)
    assert prefix(base, 1).steps == (Step("a"),)
    assert not prefix(base, 1).achieved
    assert prefix(base, 2).achieved
