import pytest
from hypothesis import given, strategies as st

from vclock import Epoch, VectorClock, epoch_concurrent, inc, join

clocks = st.integers(min_value=1, max_value=6).flatmap(
    lambda k: st.lists(st.integers(min_value=0, max_value=50), min_size=k, max_size=k)
)


def test_join_is_pointwise_max():
    assert join(VectorClock([1, 0, 0]), VectorClock([0, 2, 0])) == VectorClock([1, 2, 0])


@given(clocks)
def test_join_identity_and_idempotence(stamps):
    v = VectorClock(stamps)
    assert join(v, v) == v
    assert join(VectorClock.zeros(len(v)), v) == v


def test_join_width_mismatch():
    with pytest.raises(ValueError):
        join(VectorClock([1, 0]), VectorClock([1, 0, 0]))


def test_inc():
    assert inc(VectorClock([1, 0]), 0) == VectorClock([2, 0])
    with pytest.raises(IndexError):
        inc(VectorClock([1, 0]), 2)


def test_operations_do_not_mutate():
    v = VectorClock([1, 1])
    v.inc(0)
    v.join(VectorClock([5, 5]))
    assert v.to_list() == [1, 1]


def test_initial_thread_clock():
    assert VectorClock.for_thread(3, 1).to_list() == [0, 1, 0]
    with pytest.raises(IndexError):
        VectorClock.for_thread(2, 2)


def test_negative_stamps_rejected():
    with pytest.raises(ValueError):
        VectorClock([0, -1])


def test_epoch_concurrency():
    assert not epoch_concurrent(Epoch(0, 1), VectorClock([1, 2]))
    assert epoch_concurrent(Epoch(1, 3), VectorClock([1, 2]))
    assert str(Epoch(1, 3)) == "1#3"


@given(clocks, clocks)
def test_leq_agrees_with_join(a, b):
    width = min(len(a), len(b))
    va, vb = VectorClock(a[:width]), VectorClock(b[:width])
    assert va.leq(join(va, vb))
    assert va.leq(vb) == (join(va, vb) == vb)


def test_stamps_read_back_as_python_ints():
    v = VectorClock([3, 4])
    assert type(v[1]) is int
    assert all(type(s) is int for s in v.to_list())
    assert type(v.epoch(0).stamp) is int
