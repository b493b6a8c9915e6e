import pytest

from analyzers import (
    HB,
    LabeledEdge,
    RaceCategory,
    RacePair,
    dedup_by_location,
    run_fasttrack,
    run_hb_partner,
    run_shb_partner,
    run_sshb_phase1,
)
from trace_model import Event, EventKind


def keys(pairs):
    return {p.key for p in pairs}


def edge_table(edges):
    return {e.key: e.label for e in edges}


# --- RacePair / LabeledEdge ---

def test_race_pair_orientation_and_category():
    w = Event(4, "T3", EventKind.WRITE, "x")
    r = Event(2, "T2", EventKind.READ, "x")
    pair = RacePair.of(w, r)
    assert pair.key == (2, 4)
    assert pair.category is RaceCategory.RW
    assert pair.write_read() == (w, r)
    assert str(pair) == "(r(x)@2, w(x)@4) RW"


@pytest.mark.parametrize(
    "a, b",
    [
        (Event(1, "T1", EventKind.READ, "x"), Event(2, "T2", EventKind.READ, "x")),
        (Event(1, "T1", EventKind.WRITE, "x"), Event(2, "T2", EventKind.WRITE, "y")),
        (Event(1, "T1", EventKind.WRITE, "x"), Event(1, "T1", EventKind.WRITE, "x")),
    ],
)
def test_race_pair_rejects_non_conflicting(a, b):
    with pytest.raises(ValueError):
        RacePair.of(a, b)


def test_wrd_edge_needs_write_then_read_of_same_variable():
    w = Event(1, "T1", EventKind.WRITE, "x")
    assert LabeledEdge.wrd(w, Event(2, "T2", EventKind.READ, "x")).label == "W(2)"
    with pytest.raises(ValueError):
        LabeledEdge.wrd(w, Event(2, "T2", EventKind.READ, "y"))


# --- FastTrack ---

def test_fasttrack_flag_publish(sample_trace):
    report = run_fasttrack(sample_trace("flag_publish.csv"))
    assert [d.event.pos for d in report.detections] == [3, 4]
    assert report.first_race.clock == (0, 1)
    assert {(p.key, p.category) for p in report.race_pairs()} == {((2, 3), RaceCategory.WR), ((1, 4), RaceCategory.WW)}
    assert report.sound_up_to_first_race


def test_fasttrack_silent_on_ordered_handoff(sample_trace):
    report = run_fasttrack(sample_trace("lock_handoff.csv"))
    assert report.detections == []
    assert report.first_race is None


def test_fasttrack_reports_write_against_concurrent_reads(build_trace):
    t = build_trace(("T1", "RD", "x"), ("T2", "RD", "x"), ("T3", "WR", "x"))
    report = run_fasttrack(t)
    assert len(report.detections) == 1
    assert keys(report.race_pairs()) == {(1, 3), (2, 3)}


# --- HB / SHB pair analyses ---

def test_hb_flag_publish(sample_trace):
    assert keys(run_hb_partner(sample_trace("flag_publish.csv"))) == {(2, 3), (1, 4)}


def test_hb_ordered_handoff_has_no_race(sample_trace):
    assert run_hb_partner(sample_trace("lock_handoff.csv")) == set()


def test_hb_overtaken_handoff_races(sample_trace):
    races = run_hb_partner(sample_trace("lock_handoff_overtaken.csv"))
    assert {(p.key, p.category) for p in races} == {((2, 4), RaceCategory.WW)}


def test_shb_read_of_published_flag_orders_later_write(sample_trace):
    assert keys(run_shb_partner(sample_trace("flag_publish.csv"))) == {(2, 3)}


def test_shb_early_read_keeps_y_race(sample_trace):
    assert keys(run_shb_partner(sample_trace("flag_publish_early_read.csv"))) == {(1, 3), (2, 4)}


def test_shb_three_threads(sample_trace):
    assert keys(run_shb_partner(sample_trace("three_thread_flag_reordered.csv"))) == {(2, 3), (2, 5), (3, 5)}


def test_hb_loop_trace_and_location_dedup(sample_trace):
    races = run_hb_partner(sample_trace("loop_location_dedup.csv"))
    assert keys(races) == {(2, 5), (3, 6), (4, 7), (6, 9), (7, 10), (6, 11)}
    assert [p.key for p in dedup_by_location(races)] == [(2, 5), (3, 6), (4, 7)]


# --- SSHB phase 1 ---

def test_phase1_mixed_races(sample_trace):
    result = run_sshb_phase1(sample_trace("mixed_races.csv"))
    assert {(p.key, p.category) for p in result.races} == {
        ((1, 2), RaceCategory.WR),
        ((2, 4), RaceCategory.RW),
        ((1, 4), RaceCategory.WW),
        ((3, 5), RaceCategory.WW),
    }
    assert edge_table(result.edges) == {(1, 2): "W(2)", (4, 2): "W(2)", (3, 4): HB, (2, 5): HB}


def test_phase1_early_read_edges(sample_trace):
    result = run_sshb_phase1(sample_trace("flag_publish_early_read.csv"))
    assert edge_table(result.edges) == {(2, 3): HB, (3, 1): "W(1)", (1, 4): HB}


def test_phase1_three_thread_edges(sample_trace):
    result = run_sshb_phase1(sample_trace("three_thread_flag_reordered.csv"))
    assert edge_table(result.edges) == {(1, 2): HB, (2, 3): "W(3)", (5, 3): "W(3)", (3, 4): HB}
    assert keys(result.races) == {(2, 3), (1, 4), (2, 5), (3, 5)}


def test_phase1_release_acquire_edge_only_across_threads(sample_trace, build_trace):
    result = run_sshb_phase1(sample_trace("lock_handoff.csv"))
    assert edge_table(result.edges) == {(1, 2): HB, (2, 3): HB, (3, 4): HB, (4, 5): HB, (5, 6): HB}

    same_thread = build_trace(("T1", "LK", "m"), ("T1", "UK", "m"), ("T1", "LK", "m"), ("T1", "UK", "m"))
    assert edge_table(run_sshb_phase1(same_thread).edges) == {(1, 2): HB, (2, 3): HB, (3, 4): HB}


def test_phase1_write_reaches_superseded_read(build_trace):
    t = build_trace(
        ("T1", "WR", "x"),
        ("T2", "WR", "x"),
        ("T1", "RD", "x"),
        ("T1", "RD", "x"),
        ("T2", "WR", "x"),
    )
    edges = edge_table(run_sshb_phase1(t).edges)
    assert edges[(5, 4)] == "W(4)"
    # r(x)@3 left cr(x) when r(x)@4 arrived
    assert edges[(5, 3)] == "W(3)"


def test_phase1_race_sets_stay_antichains(sample_trace):
    t = sample_trace("loop_location_dedup.csv")
    state = run_sshb_phase1(t).state
    assert state.max_cw <= t.thread_count
    assert state.max_cr <= t.thread_count


def test_phase1_agrees_with_hb_partner(sample_trace):
    t = sample_trace("five_thread_candidates.csv")
    assert keys(run_sshb_phase1(t).races) == keys(run_hb_partner(t))
