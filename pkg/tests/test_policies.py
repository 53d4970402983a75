import math

import pytest
from hypothesis import given, settings, strategies as st

from multihop_aoi import PolicySpec
from multihop_aoi import policies as pol
from multihop_aoi.policies import LinkState


def offer(st_, s, pid, t=0.0):
    return pol.on_arrival(st_, st_.entry(s, pid), t)


def test_prmp_preempts_fresher():
    s = LinkState(pol.PRMP_LGFS, math.inf)
    offer(s, 3.0, 1)
    assert s.alpha == 3.0
    assert offer(s, 5.0, 2) == pol.PREEMPT
    assert s.alpha == 5.0 and s.preemptions == 1
    assert [e[0] for e in s.queue] == [3.0]


def test_prmp_enqueues_staler():
    s = LinkState(pol.PRMP_LGFS, 1)
    offer(s, 3.0, 2)
    assert offer(s, 2.0, 1) == pol.ENQUEUE


def test_prmp_overflow_drops_preempted_when_full():
    s = LinkState(pol.PRMP_LGFS, 0)
    offer(s, 1.0, 1)
    assert offer(s, 2.0, 2) == pol.PREEMPT
    assert not s.queue and s.drops == 1


def test_nonprmp_lgfs_replaces_stalest():
    s = LinkState(pol.NON_PRMP_LGFS, 1)
    offer(s, 1.0, 1)
    offer(s, 2.0, 2)
    assert s.delta == 2.0
    assert offer(s, 4.0, 3) == pol.REPLACE
    assert s.delta == 4.0 and s.alpha == 1.0


def test_nonprmp_lgfs_drops_staler_when_full():
    s = LinkState(pol.NON_PRMP_LGFS, 1)
    offer(s, 1.0, 1)
    offer(s, 3.0, 2)
    assert offer(s, 2.0, 3) == pol.DROP
    assert s.drops == 1 and s.delta == 3.0


@pytest.mark.parametrize("kind", pol.KINDS)
def test_idle_link_starts(kind):
    s = LinkState(kind, 1)
    assert offer(s, 0.7, 1) == pol.START
    assert s.busy and s.alpha == 0.7


def test_lgfs_next_is_freshest():
    s = LinkState(pol.NON_PRMP_LGFS, math.inf)
    offer(s, 0.5, 1)
    for pid, g in enumerate((1.0, 7.0, 4.0), start=2):
        offer(s, g, pid)
    done, nxt = pol.on_completion(s, 1.0)
    assert done[0] == 0.5 and nxt[0] == 7.0


def test_fcfs_next_is_first_arrival():
    s = LinkState(pol.FCFS, math.inf)
    offer(s, 0.1, 1, 0.0)
    offer(s, 9.0, 3, 1.0)
    offer(s, 5.0, 2, 2.0)
    _, nxt = pol.on_completion(s, 3.0)
    assert nxt[0] == 9.0


def test_fcfs_blocks_when_full():
    s = LinkState(pol.FCFS, 1)
    offer(s, 1.0, 1)
    offer(s, 2.0, 2)
    assert offer(s, 3.0, 3) == pol.DROP
    assert [e[0] for e in s.queue] == [2.0]


def test_lcfs_replaces_oldest_arrival():
    s = LinkState(pol.NON_PRMP_LCFS, 2)
    offer(s, 1.0, 1)
    offer(s, 5.0, 2)
    offer(s, 3.0, 3)
    assert offer(s, 2.0, 4) == pol.REPLACE
    assert [e[0] for e in s.queue] == [3.0, 2.0]
    _, nxt = pol.on_completion(s, 1.0)
    assert nxt[0] == 2.0  # latest arrival first


def test_empty_queue_goes_idle():
    s = LinkState(pol.FCFS, 1)
    offer(s, 1.0, 1)
    done, nxt = pol.on_completion(s, 2.0)
    assert done[0] == 1.0 and nxt is None and not s.busy


def test_completion_on_idle_is_an_error():
    with pytest.raises(RuntimeError):
        pol.on_completion(LinkState(pol.FCFS, 1), 0.0)


def test_tie_on_generation_time_prefers_larger_id():
    s = LinkState(pol.NON_PRMP_LGFS, math.inf)
    offer(s, 0.0, 1)
    offer(s, 2.0, 3)
    offer(s, 2.0, 2)
    _, nxt = pol.on_completion(s, 1.0)
    assert nxt[1] == 3


def test_unknown_kind_lists_valid():
    with pytest.raises(pol.PolicyError, match="valid kinds"):
        PolicySpec("LIFO")


def test_ip_helpers_require_ip_link():
    with pytest.raises(pol.PolicyError):
        pol.ip_on_arrival(LinkState(pol.FCFS, 1), (1.0, 1, 1), 0.0)
    s = LinkState(pol.INFEASIBLE_LB, 1)
    assert pol.ip_on_arrival(s, s.entry(1.0, 1), 0.0) == pol.START
    done, nxt = pol.ip_on_completion(s, 1.0)
    assert done[0] == 1.0 and nxt is None


def test_policy_names():
    assert PolicySpec("NonPrmpLGFS", 1).name == "NonPrmpLGFS(B=1)"
    assert PolicySpec("FCFS", math.inf).name == "FCFS(B=inf)"
    assert PolicySpec("FCFS", label="x").name == "x"


ops = st.lists(
    st.one_of(
        st.tuples(st.just("arr"), st.floats(0, 100, allow_nan=False)),
        st.tuples(st.just("done"), st.just(0.0)),
    ),
    max_size=60,
)


@settings(max_examples=150, deadline=None)
@given(st.sampled_from(pol.KINDS[:4]), st.sampled_from([0, 1, 2, 5, math.inf]), ops)
def test_state_machine_invariants(kind, cap, seq):
    s = LinkState(kind, cap)
    pid = 0
    present = []  # (gen, pid) of packets at the link, B=inf bookkeeping
    for op, g in seq:
        if op == "arr":
            pid += 1
            before = [e[0] for e in s.queue]
            act = offer(s, g, pid)
            present.append(g)
            if kind == pol.NON_PRMP_LGFS and act == pol.DROP:
                # never drops a packet fresher than a queued one
                assert not before or g <= min(before)
        elif s.busy:
            pol.on_completion(s, 0.0)
            if s.busy and kind in pol.LGFS_ORDERED:
                assert all(s.alpha >= e[0] for e in s.queue)
        assert len(s.queue) <= cap
        assert not (s.queue and not s.busy)
        if kind == pol.PRMP_LGFS and cap == math.inf and s.busy:
            assert s.alpha == max([s.alpha] + [e[0] for e in s.queue])
        if s.queue and kind in pol.LGFS_ORDERED:
            assert s.delta == min(e[0] for e in s.queue)
