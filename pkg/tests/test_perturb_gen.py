import pytest
from hypothesis import given, strategies as st

from lockset import compute_locksets
from perturb_gen import GenConfig, GenConfigError, PerturbMode, gen_trace, perturb, swap_allowed
from trace_model import ValidityLevel, validate

configs = st.builds(
    GenConfig,
    threads=st.integers(1, 4),
    vars=st.integers(1, 3),
    locks=st.integers(1, 2),
    events=st.integers(0, 40),
    lock_discipline=st.floats(0.0, 1.0),
    ensure_initial_writes=st.booleans(),
    seed=st.integers(0, 2**16),
)


def per_thread(trace):
    out = {}
    for e in trace:
        out.setdefault(e.tid, []).append((e.kind, e.target))
    return out


def sync_order(trace):
    return [(e.tid, e.kind, e.target) for e in trace if e.kind.is_sync]


def shape(trace):
    return [(e.tid, e.kind.value, e.target) for e in trace]


def locksets_by_thread_index(trace):
    locksets = compute_locksets(trace)
    seen = {}
    out = {}
    for e in trace:
        idx = seen.get(e.tid, 0)
        seen[e.tid] = idx + 1
        if e.pos in locksets:
            out[(e.tid, idx)] = locksets[e.pos]
    return out


# --- generation ---

@given(configs)
def test_generated_traces_are_strict_valid(cfg):
    t = gen_trace(cfg)
    assert t.n == cfg.events
    assert validate(t, ValidityLevel.STRICT).ok


@given(configs)
def test_generation_is_deterministic(cfg):
    assert gen_trace(cfg) == gen_trace(cfg)


@given(configs.filter(lambda c: c.ensure_initial_writes))
def test_initial_writes_come_first(cfg):
    seen = set()
    for e in gen_trace(cfg):
        if e.is_access:
            if (e.tid, e.target) not in seen:
                assert e.is_write
            seen.add((e.tid, e.target))


def test_no_locks_means_no_sync_events():
    t = gen_trace(GenConfig(threads=3, vars=2, locks=0, lock_discipline=0.0, events=30, seed=4))
    assert t.meta()["syncs"] == 0
    assert set(t.thread_ids) <= {"T1", "T2", "T3"}


@pytest.mark.parametrize(
    "cfg",
    [
        GenConfig(threads=0),
        GenConfig(events=-1),
        GenConfig(vars=0, events=5),
        GenConfig(locks=0, lock_discipline=0.5),
        GenConfig(lock_discipline=1.5),
        GenConfig(read_ratio=-0.1),
    ],
)
def test_infeasible_configs(cfg):
    with pytest.raises(GenConfigError):
        gen_trace(cfg)


# --- perturbation ---

@given(configs, st.integers(0, 1000), st.sampled_from(list(PerturbMode)))
def test_perturb_keeps_per_thread_order(cfg, seed, mode):
    t = gen_trace(cfg)
    p = perturb(t, mode, seed)
    assert per_thread(p) == per_thread(t)
    assert [e.pos for e in p] == list(range(1, t.n + 1))


@given(configs, st.integers(0, 1000))
def test_read_write_mode_keeps_lock_events_in_place(cfg, seed):
    t = gen_trace(cfg)
    p = perturb(t, PerturbMode.RW, seed, swaps=3 * t.n)
    assert sync_order(p) == sync_order(t)
    assert validate(p, ValidityLevel.STRICT).ok


@given(configs, st.integers(0, 1000))
def test_release_reordering_stays_lenient_valid(cfg, seed):
    p = perturb(gen_trace(cfg), PerturbMode.RR, seed, swaps=3 * cfg.events)
    assert validate(p, ValidityLevel.LENIENT).ok


def test_perturb_is_seeded(sample_trace):
    t = sample_trace("three_thread_flag.csv")
    assert perturb(t, PerturbMode.RW, 11, swaps=50) == perturb(t, PerturbMode.RW, 11, swaps=50)


def test_zero_swaps_is_identity(sample_trace):
    t = sample_trace("flag_publish.csv")
    assert perturb(t, PerturbMode.RW, 0, swaps=0) == t


def test_swap_rules(sample_trace):
    t = sample_trace("lock_handoff.csv")
    release, acquire, write = t.event(3), t.event(4), t.event(5)
    assert not swap_allowed(t.event(2), release, PerturbMode.RR)
    assert not swap_allowed(release, acquire, PerturbMode.RW)
    assert swap_allowed(release, acquire, PerturbMode.RR)
    assert not swap_allowed(acquire, release, PerturbMode.RR)
    assert swap_allowed(t.event(2), write, PerturbMode.RW)


@given(configs, st.integers(0, 1000), st.sampled_from(list(PerturbMode)))
def test_perturbation_keeps_every_lockset(cfg, seed, mode):
    t = gen_trace(cfg)
    p = perturb(t, mode, seed, swaps=3 * t.n)
    assert locksets_by_thread_index(p) == locksets_by_thread_index(t)


@pytest.mark.parametrize(
    "source, recorded, mode, seed, swaps",
    [
        ("flag_publish.csv", "flag_publish_early_read.csv", PerturbMode.RW, 9, None),
        ("lock_handoff.csv", "lock_handoff_overtaken.csv", PerturbMode.RR, 7, None),
        ("three_thread_flag.csv", "three_thread_flag_reordered.csv", PerturbMode.RW, 36, 40),
    ],
)
def test_seeded_perturbation_reproduces_recorded_trace(sample_trace, source, recorded, mode, seed, swaps):
    p = perturb(sample_trace(source), mode, seed, swaps=swaps)
    assert shape(p) == shape(sample_trace(recorded))
