"""Domain layer: run lifecycle, durations, lineage, templates, tags."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from runlog.domain import (
    ActorRef,
    ActorRole,
    AddTag,
    EndRun,
    EntityRef,
    LhcFill,
    RefKind,
    RemoveTag,
    ReconstructionPass,
    Run,
    RunQuality,
    RunState,
    RunType,
    SetQuality,
    Template,
    apply_run_event,
    new_log_entry,
    normalize_tag,
    render_template,
    resolve_lineage,
    run_duration,
)
from runlog.errors import (
    BrokenLineage,
    CorruptLineage,
    Invalid,
    InvalidTimestamps,
    InvalidTransition,
    MissingField,
    NotFound,
)
from tests.conftest import ts


def make_run(**overrides) -> Run:
    base = dict(
        run_number=1,
        run_type=RunType.GLOBAL,
        state=RunState.ONGOING,
        start_time=ts(0),
    )
    base.update(overrides)
    return Run(**base)


# -- run lifecycle -------------------------------------------------------------


def test_end_at_start_time_gives_zero_duration():
    run = make_run()
    ended = apply_run_event(run, EndRun(end_time=ts(0)))
    assert ended.state is RunState.ENDED
    assert run_duration(ended) == 0.0


def test_end_twice_is_rejected_single_terminal_end():
    ended = apply_run_event(make_run(), EndRun(end_time=ts(1)))
    with pytest.raises(InvalidTransition):
        apply_run_event(ended, EndRun(end_time=ts(2)))


def test_end_five_minutes_duration_matches_timestamp_subtraction():
    # Oracle: direct timestamp arithmetic on the same instants.
    start = datetime(2022, 3, 1, 10, 0, tzinfo=timezone.utc)
    end = datetime(2022, 3, 1, 10, 5, tzinfo=timezone.utc)
    expected = (end - start).total_seconds()
    run = make_run(start_time=start)
    ended = apply_run_event(run, EndRun(end_time=end))
    assert run_duration(ended) == expected == 300.0


def test_end_before_start_is_invalid():
    with pytest.raises(InvalidTimestamps):
        apply_run_event(make_run(start_time=ts(10)), EndRun(end_time=ts(5)))


def test_events_do_not_mutate_original():
    run = make_run(tags=frozenset({"tpc"}))
    apply_run_event(run, AddTag("cosmics"))
    apply_run_event(run, SetQuality(RunQuality.GOOD))
    assert run.tags == frozenset({"tpc"})
    assert run.quality is RunQuality.UNKNOWN
    assert run.state is RunState.ONGOING


def test_quality_and_tags_apply_in_any_state():
    ended = apply_run_event(make_run(), EndRun(end_time=ts(3)))
    tagged = apply_run_event(ended, AddTag("COSMICS "))
    assert "cosmics" in tagged.tags
    good = apply_run_event(tagged, SetQuality(RunQuality.GOOD))
    assert good.quality is RunQuality.GOOD
    untagged = apply_run_event(good, RemoveTag("cosmics"))
    assert "cosmics" not in untagged.tags


def test_remove_absent_tag_is_not_found():
    with pytest.raises(NotFound):
        apply_run_event(make_run(), RemoveTag("nope"))


def test_ongoing_run_has_no_duration():
    assert run_duration(make_run()) is None


def test_duration_thirty_hours():
    # Oracle: timestamp arithmetic; 2021-01-01T00:00Z .. 2021-01-02T06:00Z.
    start = datetime(2021, 1, 1, 0, 0, tzinfo=timezone.utc)
    end = datetime(2021, 1, 2, 6, 0, tzinfo=timezone.utc)
    assert (end - start).total_seconds() == 108000.0
    ended = make_run(start_time=start, state=RunState.ENDED, end_time=end)
    assert run_duration(ended) == 108000.0


def test_run_invariants_enforced_at_construction():
    with pytest.raises(Invalid):
        make_run(state=RunState.ENDED)  # ENDED without end_time
    with pytest.raises(Invalid):
        make_run(end_time=ts(1))  # ONGOING with end_time
    with pytest.raises(InvalidTimestamps):
        make_run(state=RunState.ENDED, start_time=ts(10), end_time=ts(1))
    with pytest.raises(Invalid):
        make_run(run_number=0)
    with pytest.raises(Invalid):
        make_run(tags=frozenset({"NOT-NORMALIZED"}))


@st.composite
def run_events(draw):
    kind = draw(st.sampled_from(["end", "quality", "add", "remove"]))
    if kind == "end":
        return EndRun(end_time=ts(draw(st.integers(min_value=0, max_value=600))))
    if kind == "quality":
        return SetQuality(draw(st.sampled_from(list(RunQuality))))
    tag = draw(st.sampled_from(["tpc", "its", "cosmics", "noise"]))
    return AddTag(tag) if kind == "add" else RemoveTag(tag)


@settings(max_examples=200, deadline=None)
@given(st.lists(run_events(), max_size=12))
def test_event_sequences_preserve_invariants_and_single_end(events):
    run = make_run()
    accepted_ends = 0
    for event in events:
        try:
            run = apply_run_event(run, event)
            if isinstance(event, EndRun):
                accepted_ends += 1
        except (InvalidTransition, InvalidTimestamps, NotFound):
            continue
    assert accepted_ends <= 1
    # Re-constructing from the final field values re-checks every invariant.
    Run(
        run_number=run.run_number,
        run_type=run.run_type,
        state=run.state,
        start_time=run.start_time,
        end_time=run.end_time,
        fill_number=run.fill_number,
        configuration=run.configuration,
        quality=run.quality,
        tags=run.tags,
    )


# -- fills ---------------------------------------------------------------------


def test_fill_stable_beams_order_checked():
    LhcFill(fill_number=1, beam_type="p-p", created_at=ts(0),
            stable_beams_start=ts(0), stable_beams_end=ts(60))
    with pytest.raises(InvalidTimestamps):
        LhcFill(fill_number=1, beam_type="p-p", created_at=ts(0),
                stable_beams_start=ts(60), stable_beams_end=ts(0))


# -- tags ---------------------------------------------------------------------


def test_tag_normalization():
    assert normalize_tag("  TPC ") == "tpc"
    assert normalize_tag("a-b_c.d0") == "a-b_c.d0"
    for bad in ("", "-leading", "UPPER SPACE", "x" * 65, "héllo"):
        with pytest.raises(Invalid):
            normalize_tag(bad)


# -- lineage --------------------------------------------------------------------


def chain_store(depth: int) -> dict[EntityRef, object]:
    """depth passes rooted at run 7: P(depth) -> ... -> P(1) -> RUN 7."""
    entities: dict[EntityRef, object] = {EntityRef(RefKind.RUN, 7): object()}
    previous = EntityRef(RefKind.RUN, 7)
    for pass_id in range(1, depth + 1):
        rec = ReconstructionPass(
            pass_id=pass_id, name=f"apass{pass_id}", input=previous,
            status="DONE", created_at=ts(0),
        )
        entities[EntityRef(RefKind.PASS, pass_id)] = rec
        previous = EntityRef(RefKind.PASS, pass_id)
    return entities


def test_depth_one_chain():
    entities = chain_store(1)
    chain = resolve_lineage(1, entities.get)
    assert chain == [EntityRef(RefKind.PASS, 1), EntityRef(RefKind.RUN, 7)]


def test_depth_three_chain_matches_hand_walk():
    entities = chain_store(3)
    chain = resolve_lineage(3, entities.get)
    # Hand-walked: P3 -> P2 -> P1 -> RUN 7.
    assert chain == [
        EntityRef(RefKind.PASS, 3),
        EntityRef(RefKind.PASS, 2),
        EntityRef(RefKind.PASS, 1),
        EntityRef(RefKind.RUN, 7),
    ]
    assert chain[-1].kind is RefKind.RUN
    assert len(chain) == 4


def test_chain_lengths_up_to_ten():
    for depth in range(1, 11):
        chain = resolve_lineage(depth, chain_store(depth).get)
        assert len(chain) == depth + 1
        assert chain[-1].kind is RefKind.RUN


def test_dangling_reference_is_broken_lineage():
    entities = chain_store(2)
    del entities[EntityRef(RefKind.PASS, 1)]
    with pytest.raises(BrokenLineage):
        resolve_lineage(2, entities.get)
    entities = chain_store(1)
    del entities[EntityRef(RefKind.RUN, 7)]
    with pytest.raises(BrokenLineage):
        resolve_lineage(1, entities.get)


def test_cycle_is_corrupt_lineage():
    # Hand-corrupted store: P1 -> P2 -> P1 (impossible through the API).
    p1 = ReconstructionPass(pass_id=1, name="a", input=EntityRef(RefKind.PASS, 2),
                            status="DONE", created_at=ts(0))
    p2 = ReconstructionPass(pass_id=2, name="b", input=EntityRef(RefKind.PASS, 1),
                            status="DONE", created_at=ts(0))
    entities = {EntityRef(RefKind.PASS, 1): p1, EntityRef(RefKind.PASS, 2): p2}
    with pytest.raises(CorruptLineage):
        resolve_lineage(1, entities.get)


def test_missing_head_pass_is_not_found():
    with pytest.raises(NotFound):
        resolve_lineage(99, {}.get)


def test_pass_input_kind_restricted():
    with pytest.raises(Invalid):
        ReconstructionPass(pass_id=1, name="x", input=EntityRef(RefKind.FILL, 1),
                           status="DONE", created_at=ts(0))


# -- templates -------------------------------------------------------------------


def eos_template(**overrides) -> Template:
    base = dict(
        template_name="eos",
        title_pattern="EOS report {{shift}}",
        body_pattern="Detector {{detector}}: {{notes}}",
        required_fields=frozenset({"shift"}),
        default_tags=frozenset({"eos"}),
    )
    base.update(overrides)
    return Template(**base)


def test_single_substitution():
    rendered = render_template(eos_template(), {"shift": "night"})
    assert rendered.title == "EOS report night"
    assert rendered.tags == frozenset({"eos"})


def test_missing_required_field():
    template = eos_template(required_fields=frozenset({"shift", "detector"}))
    with pytest.raises(MissingField) as err:
        render_template(template, {"shift": "day"})
    assert err.value.field == "detector"


def test_unknown_placeholder_without_value_renders_empty():
    rendered = render_template(eos_template(), {"shift": "day"})
    assert rendered.body == "Detector : "


def test_repeated_placeholder_substituted_globally():
    # Oracle: naive global string replacement on the same pattern.
    template = eos_template(
        body_pattern="{{shift}} begin, {{shift}} end", required_fields=frozenset()
    )
    values = {"shift": "late"}
    expected = "{{shift}} begin, {{shift}} end".replace("{{shift}}", values["shift"])
    assert render_template(template, values).body == expected == "late begin, late end"


def test_render_is_identity_on_placeholder_free_template():
    template = eos_template(
        title_pattern="fixed title", body_pattern="fixed body", required_fields=frozenset()
    )
    rendered = render_template(template, {})
    assert (rendered.title, rendered.body) == ("fixed title", "fixed body")


@settings(max_examples=100, deadline=None)
@given(
    st.dictionaries(
        st.sampled_from(["shift", "detector", "notes"]),
        st.text(max_size=20),
        max_size=3,
    )
)
def test_render_is_deterministic(values):
    template = eos_template(required_fields=frozenset())
    first = render_template(template, values)
    second = render_template(template, values)
    assert first == second


def test_required_fields_must_appear_in_patterns():
    with pytest.raises(Invalid):
        eos_template(required_fields=frozenset({"ghost"}))


# -- log entries -------------------------------------------------------------------


def test_new_log_entry_revision_zero_is_creation_content():
    author = ActorRef("alice", ActorRole.SHIFTER)
    entry = new_log_entry(1, "Title", "Body", author, "HUMAN", ts(0), tags=("TPC",))
    assert entry.revisions[0].revision_index == 0
    assert (entry.revisions[0].title, entry.revisions[0].body) == ("Title", "Body")
    assert entry.tags == frozenset({"tpc"})


def test_log_association_kinds_restricted():
    author = ActorRef("alice", ActorRole.SHIFTER)
    with pytest.raises(Invalid):
        new_log_entry(
            1, "t", "b", author, "HUMAN", ts(0),
            associations=(EntityRef(RefKind.LOG, 2),),
        )
